"""Leave-one-out evaluation, macro-F1 arithmetic, and score aggregation.

Closed-form F1 targets for the always-majority predictor on 445:4 and
364:6:4 class splits anchor the constant per-organ rows of the reference
archive; confusion tables are recounted from per-query logs.
"""

import json

import numpy as np
import pytest

from slideseek.errors import SearchError
from slideseek.evaluation import (
    ConfusionTable,
    aggregate_stats,
    leave_one_out,
    load_reference_scores,
    macro_f1,
    reference_aggregates,
    run_evaluation,
    topk_key,
)
from slideseek.records import EvalConfig
from slideseek.search import build_index
from slideseek.synth import ClassSpec, CohortSpec, generate_cohort


def cohort_index(classes, organ="Testorgan", seed=0, separation=8.0, dim=16,
                 patches=6, patient_effect=0.0):
    spec = CohortSpec(
        organ=organ,
        classes=tuple(ClassSpec(*c) for c in classes),
        patches_per_wsi=patches,
        dim=dim,
        class_separation=separation,
        patient_effect=patient_effect,
        seed=seed,
    )
    manifest, store = generate_cohort(spec)
    return build_index(manifest, store)


def table_from_predictions(pairs):
    table = ConfusionTable()
    for true_label, predicted in pairs:
        table.record(true_label, predicted)
    return table


class TestConfusionTable:
    def test_counts(self):
        table = table_from_predictions(
            [("A", "A"), ("A", "B"), ("B", "B"), ("B", "B"), ("C", "A")]
        )
        assert table.tp == {"A": 1, "B": 2, "C": 0}
        assert table.fp["B"] == 1
        assert table.fp["A"] == 1
        assert table.fn == {"A": 1, "B": 0, "C": 1}

    def test_query_conservation(self):
        rng = np.random.default_rng(90)
        labels = ["A", "B", "C", "D"]
        pairs = [
            (labels[int(rng.integers(4))], labels[int(rng.integers(4))])
            for _ in range(200)
        ]
        table = table_from_predictions(pairs)
        assert table.total_queries() == 200


class TestMacroF1:
    def test_perfect_predictions(self):
        table = table_from_predictions([("A", "A"), ("B", "B"), ("C", "C")])
        assert macro_f1(table) == 1.0

    def test_two_class_always_major_closed_form(self):
        """445:4 split, constant major-class prediction."""
        pairs = [("Major", "Major")] * 445 + [("Minor", "Major")] * 4
        value = macro_f1(table_from_predictions(pairs))
        f1_major = 2 * 445 / (2 * 445 + 4)
        assert value == pytest.approx((f1_major + 0.0) / 2)
        assert value == pytest.approx(0.50, abs=0.01)

    def test_three_class_always_major_closed_form(self):
        """364:6:4 split, constant major-class prediction."""
        pairs = (
            [("Major", "Major")] * 364
            + [("Mid", "Major")] * 6
            + [("Minor", "Major")] * 4
        )
        value = macro_f1(table_from_predictions(pairs))
        f1_major = 2 * 364 / (2 * 364 + 10)
        assert value == pytest.approx(f1_major / 3)
        assert value == pytest.approx(0.33, abs=0.01)

    def test_zero_denominator_class_scores_zero(self):
        pairs = [("A", "A"), ("B", "C")]
        value = macro_f1(table_from_predictions(pairs))
        assert value == pytest.approx((1.0 + 0.0) / 2)

    def test_prediction_only_labels_excluded_from_macro(self):
        """A label that never appears as ground truth contributes no term."""
        pairs = [("A", "A"), ("A", "X"), ("A", "A")]
        value = macro_f1(table_from_predictions(pairs))
        assert value == pytest.approx(2 * 2 / (2 * 2 + 0 + 1))

    def test_relabeling_equivariance(self):
        rng = np.random.default_rng(91)
        labels = ["A", "B", "C"]
        pairs = [
            (labels[int(rng.integers(3))], labels[int(rng.integers(3))])
            for _ in range(60)
        ]
        mapping = {"A": "Z", "B": "Q", "C": "M"}
        renamed = [(mapping[t], mapping[p]) for t, p in pairs]
        assert macro_f1(table_from_predictions(pairs)) == pytest.approx(
            macro_f1(table_from_predictions(renamed))
        )

    def test_empty_table_rejected(self):
        with pytest.raises(ValueError):
            macro_f1(ConfusionTable())

    def test_bounds(self):
        rng = np.random.default_rng(92)
        labels = ["A", "B"]
        for _ in range(100):
            pairs = [
                (labels[int(rng.integers(2))], labels[int(rng.integers(2))])
                for _ in range(20)
            ]
            value = macro_f1(table_from_predictions(pairs))
            assert 0.0 <= value <= 1.0


class TestAggregateStats:
    def test_zero_variance(self):
        mean, std, lo, hi = aggregate_stats([0.4, 0.4, 0.4])
        assert (mean, std, lo, hi) == (0.4, 0.0, 0.4, 0.4)

    def test_needs_two_scores(self):
        with pytest.raises(ValueError):
            aggregate_stats([0.5])

    def test_hand_computed_example(self):
        mean, std, lo, hi = aggregate_stats([0.2, 0.4, 0.6])
        assert mean == pytest.approx(0.4)
        assert std == pytest.approx(0.2)
        half = 1.96 * 0.2 / np.sqrt(3)
        assert lo == pytest.approx(0.4 - half)
        assert hi == pytest.approx(0.4 + half)

    def test_ci_narrows_with_more_organs(self):
        """Duplicating the score list shrinks the CI half-width.

        For [0.3, 0.5] repeated n/2 times the sample std is 0.1*sqrt(n/(n-1)),
        so the half-width is 1.96 * 0.1 / sqrt(n-1).
        """
        mean2, _, lo2, hi2 = aggregate_stats([0.3, 0.5])
        mean8, _, lo8, hi8 = aggregate_stats([0.3, 0.5] * 4)
        assert mean2 == pytest.approx(0.4)
        assert mean8 == pytest.approx(0.4)
        assert hi2 - lo2 == pytest.approx(2 * 1.96 * 0.1)
        assert hi8 - lo8 == pytest.approx(2 * 1.96 * 0.1 / np.sqrt(7))

    def test_reference_row_one(self):
        """Aggregated bunch-of-barcodes DenseNet top-1 column."""
        agg = reference_aggregates()[("Yottixel", 1)]
        assert agg["n_organs"] == 23
        assert agg["mean"] * 100 == pytest.approx(28, abs=1)
        assert agg["std"] * 100 == pytest.approx(13, abs=1)
        assert agg["ci_low"] * 100 == pytest.approx(23, abs=1)
        assert agg["ci_high"] * 100 == pytest.approx(33, abs=1)

    def test_reference_row_uni(self):
        agg = reference_aggregates()[("Yottixel-UNI", 1)]
        assert agg["mean"] * 100 == pytest.approx(44, abs=1)
        agg5 = reference_aggregates()[("Yottixel-UNI", 5)]
        assert agg5["mean"] * 100 == pytest.approx(42, abs=1)


class TestLeaveOneOut:
    def test_two_slides_same_subtype(self):
        index = cohort_index([("Alpha", 1, 2)])
        tables = leave_one_out(index, "Testorgan")
        for k in (1, 3, 5):
            assert macro_f1(tables[k]) == 1.0

    def test_two_slides_different_subtypes(self):
        index = cohort_index([("Alpha", 1, 1), ("Beta", 1, 1)], separation=0.0)
        tables = leave_one_out(index, "Testorgan")
        for k in (1, 3, 5):
            assert macro_f1(tables[k]) == 0.0

    def test_absent_or_singleton_organ(self):
        index = cohort_index([("Alpha", 1, 2)])
        with pytest.raises(SearchError):
            leave_one_out(index, "Nowhere")
        solo = cohort_index([("Alpha", 1, 1)])
        with pytest.raises(SearchError, match="single"):
            leave_one_out(solo, "Testorgan")

    def test_confusion_matches_log_replay(self):
        """30-slide organ: recount every confusion cell from the query log."""
        index = cohort_index(
            [("Alpha", 3, 10), ("Beta", 3, 10), ("Gamma", 3, 10)],
            separation=2.0,
            seed=3,
        )
        log = []
        tables = leave_one_out(index, "Testorgan", query_log=log)
        assert len(log) == 30
        for k in (1, 3, 5):
            recount = ConfusionTable()
            for outcome in log:
                recount.record(outcome.true_label, outcome.predicted[k])
            assert recount.tp == tables[k].tp
            assert recount.fp == tables[k].fp
            assert recount.fn == tables[k].fn
            assert tables[k].total_queries() == 30

    def test_queries_run_in_wsi_id_order(self):
        index = cohort_index([("Alpha", 2, 4), ("Beta", 2, 4)], seed=4)
        log = []
        leave_one_out(index, "Testorgan", query_log=log)
        ids = [q.wsi_id for q in log]
        assert ids == sorted(ids)

    def test_top1_equals_first_ranked_label(self):
        from slideseek.search import search

        index = cohort_index(
            [("Alpha", 2, 6), ("Beta", 2, 6)], separation=1.0, seed=5
        )
        log = []
        leave_one_out(index, "Testorgan", query_log=log)
        for outcome in log:
            record, bunch = index.get(outcome.wsi_id)
            ranked = search(index, bunch, record, 1)
            assert outcome.predicted[1] == ranked.ranked[0][2]


class TestRunEvaluation:
    def test_single_organ_shape(self):
        index = cohort_index([("Alpha", 2, 5), ("Beta", 2, 5)])
        report = run_evaluation(index)
        assert list(report.organs) == ["Testorgan"]
        entry = report.organs["Testorgan"]
        assert set(entry) == {"top1", "maj3", "maj5", "n_queries", "shortfalls"}
        assert entry["n_queries"] == 10
        assert report.aggregate["top1"]["mean"] is None
        assert report.aggregate["top1"]["n_organs"] == 1

    def test_shortfall_counted(self):
        index = cohort_index([("Alpha", 1, 3)])
        report = run_evaluation(index)
        shortfalls = report.organs["Testorgan"]["shortfalls"]
        assert shortfalls["top1"] == 0
        assert shortfalls["maj3"] == 3
        assert shortfalls["maj5"] == 3

    def test_multi_organ_aggregate_and_skips(self):
        spec_a = CohortSpec(
            organ="OrganA", classes=(ClassSpec("Alpha", 1, 4), ClassSpec("Beta", 1, 4)),
            patches_per_wsi=5, dim=16, class_separation=8.0, seed=10,
        )
        spec_b = CohortSpec(
            organ="OrganB", classes=(ClassSpec("Gamma", 1, 4), ClassSpec("Delta", 1, 4)),
            patches_per_wsi=5, dim=16, class_separation=8.0, seed=11,
        )
        solo = CohortSpec(
            organ="OrganC", classes=(ClassSpec("Eps", 1, 1),),
            patches_per_wsi=5, dim=16, seed=12,
        )
        stores = [generate_cohort(s) for s in (spec_a, spec_b, solo)]
        records = [r for manifest, _ in stores for r in manifest]
        merged = stores[0][1]
        for _, store in stores[1:]:
            merged.merge(store)
        index = build_index(records, merged)
        report = run_evaluation(index)
        assert sorted(report.organs) == ["OrganA", "OrganB"]
        assert report.skipped_organs == ("OrganC",)
        agg = report.aggregate["top1"]
        assert agg["n_organs"] == 2
        scores = [report.organs[o]["top1"] for o in report.organs]
        mean, std, lo, hi = aggregate_stats(scores)
        assert agg["mean"] == pytest.approx(mean)
        assert agg["ci_low"] == pytest.approx(lo)

    def test_report_json_deterministic(self):
        index = cohort_index([("Alpha", 2, 5), ("Beta", 2, 5)], seed=6)
        a = run_evaluation(index).to_json()
        b = run_evaluation(cohort_index([("Alpha", 2, 5), ("Beta", 2, 5)], seed=6)).to_json()
        assert a == b
        doc = json.loads(a)
        assert set(doc) == {"organs", "aggregate", "skipped_organs"}

    def test_report_csv_layout(self):
        index = cohort_index([("Alpha", 2, 5), ("Beta", 2, 5)], seed=7)
        report = run_evaluation(index)
        lines = report.to_csv((1, 3, 5)).splitlines()
        assert lines[0] == "organ,top1,maj3,maj5"
        assert lines[1].startswith("Testorgan,")


class TestReferenceFixture:
    def test_shape(self):
        scores = load_reference_scores()
        assert sorted(scores) == [
            "GigaPath-WSI",
            "Yottixel",
            "Yottixel-GigaPath",
            "Yottixel-UNI",
            "Yottixel-Virchow",
        ]
        for model, per_k in scores.items():
            assert sorted(per_k) == [1, 3, 5]
            for organ_scores in per_k.values():
                assert len(organ_scores) == (17 if model == "GigaPath-WSI" else 23)

    def test_topk_key(self):
        assert topk_key(1) == "top1"
        assert topk_key(3) == "maj3"
        assert topk_key(5) == "maj5"
