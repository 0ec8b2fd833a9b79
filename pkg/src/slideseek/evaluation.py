"""Leave-one-out retrieval evaluation and score aggregation.

Every slide of an organ queries the rest of that organ once; predictions
come from majority voting over the top-k retrievals. Per-organ macro-F1
values are then aggregated across organs into mean, sample standard
deviation, and a normal-approximation confidence interval.

The per-organ reference scores used by the aggregate reproduction test
ship as a CSV fixture under slideseek/data/.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from importlib.resources import files
from math import sqrt
from pathlib import Path
from statistics import mean as _mean
from statistics import stdev as _stdev

from .errors import FileFormatError, SearchError
from .records import EvalConfig
from .search import SlideIndex, majority_label, search

FIXTURE_HEADER = ["organ", "model", "topk", "f1"]


def topk_key(k: int) -> str:
    """Report key for one voting depth: top1 for k=1, majN above."""
    return "top1" if k == 1 else f"maj{k}"


@dataclass
class ConfusionTable:
    """Per-class true-positive, false-positive, false-negative counts."""

    tp: dict = field(default_factory=dict)
    fp: dict = field(default_factory=dict)
    fn: dict = field(default_factory=dict)

    def record(self, true_label: str, predicted_label: str) -> None:
        for counts in (self.tp, self.fp, self.fn):
            counts.setdefault(true_label, 0)
            counts.setdefault(predicted_label, 0)
        if predicted_label == true_label:
            self.tp[true_label] += 1
        else:
            self.fp[predicted_label] += 1
            self.fn[true_label] += 1

    def classes(self) -> list[str]:
        return sorted(self.tp)

    def total_queries(self) -> int:
        return sum(self.tp.values()) + sum(self.fn.values())


@dataclass(frozen=True)
class QueryOutcome:
    """One query's logged result, for replay-style verification."""

    wsi_id: str
    true_label: str
    predicted: dict
    n_candidates: int


def macro_f1(table: ConfusionTable) -> float:
    """Unweighted mean F1 over classes present in the ground truth.

    Per class F1 = 2TP / (2TP + FP + FN), taken as 0 when the denominator
    is 0. Classes never seen as a true label are excluded.
    """
    scores = []
    for cls in table.classes():
        tp = table.tp.get(cls, 0)
        fn = table.fn.get(cls, 0)
        if tp + fn == 0:
            continue
        denom = 2 * tp + table.fp.get(cls, 0) + fn
        scores.append(2 * tp / denom if denom else 0.0)
    if not scores:
        raise ValueError("confusion table has no ground-truth classes")
    return float(_mean(scores))


def aggregate_stats(scores, cfg: EvalConfig | None = None):
    """(mean, sample std, ci_low, ci_high) of per-organ scores.

    CI = mean +- z * std / sqrt(n) with z from cfg (default 1.96).
    """
    cfg = cfg or EvalConfig()
    values = [float(s) for s in scores]
    n = len(values)
    if n < 2:
        raise ValueError(f"aggregation needs >= 2 scores, got {n}")
    m = _mean(values)
    sd = _stdev(values)
    half = cfg.z_value * sd / sqrt(n)
    return m, sd, m - half, m + half


def leave_one_out(
    index: SlideIndex,
    organ: str,
    cfg: EvalConfig | None = None,
    query_log: list | None = None,
) -> dict:
    """Query every slide of the organ against the rest; confusion per top-k.

    Queries run in wsi_id order. When query_log is a list, one QueryOutcome
    is appended per query so results can be recounted independently.
    """
    cfg = cfg or EvalConfig()
    entries = index.organ_entries(organ)
    if not entries:
        raise SearchError(f"organ {organ!r} not in index")
    if len(entries) < 2:
        raise SearchError(f"organ {organ!r} has a single slide, nothing to retrieve")
    entries = sorted(entries, key=lambda e: e[0].wsi_id)
    k_max = max(cfg.top_ks)
    tables = {k: ConfusionTable() for k in cfg.top_ks}
    for record, bunch in entries:
        result = search(index, bunch, record, k_max, cfg)
        predicted = {k: majority_label(result, k) for k in cfg.top_ks}
        for k in cfg.top_ks:
            tables[k].record(record.primary_diagnosis, predicted[k])
        if query_log is not None:
            query_log.append(
                QueryOutcome(record.wsi_id, record.primary_diagnosis, predicted, len(result))
            )
    return tables


@dataclass(frozen=True)
class EvalReport:
    """Per-organ macro-F1 per top-k plus cross-organ aggregates."""

    organs: dict
    aggregate: dict
    skipped_organs: tuple = ()

    def to_json(self) -> str:
        doc = {
            "organs": self.organs,
            "aggregate": self.aggregate,
            "skipped_organs": list(self.skipped_organs),
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"

    def to_csv(self, top_ks) -> str:
        """Organ-per-row table mirroring the per-organ reference layout."""
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["organ"] + [topk_key(k) for k in top_ks])
        for organ in sorted(self.organs):
            scores = self.organs[organ]
            writer.writerow([organ] + [f"{scores[topk_key(k)]:.4f}" for k in top_ks])
        return out.getvalue()


def run_evaluation(index: SlideIndex, cfg: EvalConfig | None = None) -> EvalReport:
    """Evaluate every organ with >= 2 slides and aggregate across organs.

    Organs with a single slide cannot be queried and are listed as skipped.
    Aggregates are null when fewer than 2 organs were evaluated; n_organs is
    always recorded.
    """
    cfg = cfg or EvalConfig()
    organs = {}
    skipped = []
    for organ in index.organs():
        if len(index.organ_entries(organ)) < 2:
            skipped.append(organ)
            continue
        log: list[QueryOutcome] = []
        tables = leave_one_out(index, organ, cfg, query_log=log)
        shortfalls = {
            topk_key(k): sum(1 for q in log if q.n_candidates < k) for k in cfg.top_ks
        }
        entry = {topk_key(k): macro_f1(tables[k]) for k in cfg.top_ks}
        entry["n_queries"] = len(log)
        entry["shortfalls"] = shortfalls
        organs[organ] = entry
    aggregate = {}
    n_organs = len(organs)
    for k in cfg.top_ks:
        key = topk_key(k)
        if n_organs >= 2:
            m, sd, lo, hi = aggregate_stats([organs[o][key] for o in organs], cfg)
            aggregate[key] = {
                "mean": m, "std": sd, "ci_low": lo, "ci_high": hi, "n_organs": n_organs,
            }
        else:
            aggregate[key] = {
                "mean": None, "std": None, "ci_low": None, "ci_high": None,
                "n_organs": n_organs,
            }
    return EvalReport(organs=organs, aggregate=aggregate, skipped_organs=tuple(skipped))


def reference_scores_path() -> Path:
    """Path of the shipped per-organ reference score fixture."""
    return Path(str(files("slideseek") / "data" / "tables_2_4.csv"))


def load_reference_scores(path=None) -> dict:
    """Fixture rows as {model: {topk: {organ: f1}}}; f1 on the 0..1 scale."""
    path = Path(path) if path is not None else reference_scores_path()
    out: dict[str, dict[int, dict[str, float]]] = {}
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != FIXTURE_HEADER:
            raise FileFormatError(f"{path}: bad fixture header {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 4:
                raise FileFormatError(f"{path}:{lineno}: expected 4 fields")
            organ, model, topk, f1 = row
            try:
                k = int(topk)
                score = float(f1)
            except ValueError as exc:
                raise FileFormatError(f"{path}:{lineno}: {exc}") from exc
            if not 0.0 <= score <= 1.0:
                raise FileFormatError(f"{path}:{lineno}: f1 {score} outside [0, 1]")
            out.setdefault(model, {}).setdefault(k, {})[organ] = score
    return out


def reference_aggregates(path=None, cfg: EvalConfig | None = None) -> dict:
    """Aggregate the fixture per (model, topk): stats dict plus organ count."""
    cfg = cfg or EvalConfig()
    scores = load_reference_scores(path)
    out = {}
    for model, per_k in sorted(scores.items()):
        for k, organ_scores in sorted(per_k.items()):
            values = [organ_scores[o] for o in sorted(organ_scores)]
            m, sd, lo, hi = aggregate_stats(values, cfg)
            out[(model, k)] = {
                "mean": m, "std": sd, "ci_low": lo, "ci_high": hi, "n_organs": len(values),
            }
    return out
