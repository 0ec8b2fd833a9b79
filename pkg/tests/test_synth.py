"""Synthetic cohort generation: geometry, dealing, determinism, fixtures.

The center construction has a closed form (every pair of centers exactly
class_separation apart, each center class_separation/sqrt(2) from the
origin), so geometry is checked against that rather than against the
generator's own output.
"""

import numpy as np
import pytest

from slideseek.errors import FileFormatError
from slideseek.synth import (
    ClassSpec,
    CohortSpec,
    _class_centers,
    generate_cohort,
    load_cohort_shapes,
    scaled_classes,
)


def slide_mean(store, wsi_id):
    return np.mean([vec for _, vec in store.slide_items(wsi_id)], axis=0)


class TestSpecs:
    def test_class_spec_validation(self):
        with pytest.raises(ValueError, match="non-empty"):
            ClassSpec("", 1, 1)
        with pytest.raises(ValueError, match="patients"):
            ClassSpec("A", 0, 1)
        with pytest.raises(ValueError, match="wsis"):
            ClassSpec("A", 3, 2)

    def test_cohort_spec_validation(self):
        with pytest.raises(ValueError, match="class"):
            CohortSpec(organ="X", classes=())
        with pytest.raises(ValueError, match="duplicate"):
            CohortSpec(organ="X", classes=(("A", 1, 1), ("A", 1, 2)))
        with pytest.raises(ValueError, match="dim"):
            CohortSpec(
                organ="X",
                classes=tuple((f"C{i}", 1, 1) for i in range(5)),
                dim=4,
            )
        with pytest.raises(ValueError, match=">= 0"):
            CohortSpec(organ="X", classes=(("A", 1, 1),), class_separation=-1.0)

    def test_bare_tuples_coerced(self):
        spec = CohortSpec(organ="X", classes=(("A", 2, 3), ("B", 1, 1)))
        assert all(isinstance(c, ClassSpec) for c in spec.classes)
        assert spec.classes[0].wsis == 3

    def test_json_round_trip(self, tmp_path):
        spec = CohortSpec(
            organ="Kidney",
            classes=(("Alpha", 2, 5), ("Beta", 1, 3)),
            patches_per_wsi=7,
            dim=24,
            class_separation=3.5,
            patient_effect=0.25,
            seed=11,
        )
        path = tmp_path / "spec.json"
        path.write_text(spec.to_json())
        assert CohortSpec.from_json(path) == spec

    def test_invalid_json_spec(self, tmp_path):
        path = tmp_path / "spec.json"
        path.write_text('{"organ": "X"}')
        with pytest.raises(FileFormatError, match="invalid cohort spec"):
            CohortSpec.from_json(path)


class TestClassCenters:
    def test_pairwise_distances_equal_separation(self):
        for seed in range(5):
            rng = np.random.default_rng(seed)
            centers = _class_centers(6, 32, 5.0, rng)
            assert centers.shape == (6, 32)
            for i in range(6):
                for j in range(i + 1, 6):
                    gap = np.linalg.norm(centers[i] - centers[j])
                    assert gap == pytest.approx(5.0, rel=1e-9)

    def test_center_norms(self):
        rng = np.random.default_rng(7)
        centers = _class_centers(4, 16, 6.0, rng)
        norms = np.linalg.norm(centers, axis=1)
        np.testing.assert_allclose(norms, 6.0 / np.sqrt(2.0), rtol=1e-9)

    def test_zero_separation_collapses(self):
        rng = np.random.default_rng(8)
        centers = _class_centers(3, 8, 0.0, rng)
        np.testing.assert_array_equal(centers, np.zeros((3, 8)))


class TestGenerateCohort:
    def test_manifest_shape(self):
        spec = CohortSpec(
            organ="Test Organ", classes=(("Alpha", 2, 5), ("Beta", 1, 3)), dim=8
        )
        manifest, store = generate_cohort(spec)
        assert len(manifest.records) == 8
        by_label = {}
        for rec in manifest:
            by_label.setdefault(rec.primary_diagnosis, []).append(rec)
            assert rec.organ == "Test Organ"
        assert len(by_label["Alpha"]) == 5
        assert len(by_label["Beta"]) == 3
        assert by_label["Alpha"][0].wsi_id == "test-organ-c0-w0000"
        assert by_label["Beta"][2].wsi_id == "test-organ-c1-w0002"

    def test_round_robin_patients(self):
        spec = CohortSpec(organ="X", classes=(("Alpha", 3, 7),), dim=4)
        manifest, _ = generate_cohort(spec)
        patients = [rec.patient_id for rec in manifest]
        assert patients == [f"x-c0-p{i % 3:04d}" for i in range(7)]
        loads = [patients.count(p) for p in sorted(set(patients))]
        assert max(loads) - min(loads) <= 1

    def test_patch_grid_coordinates(self):
        spec = CohortSpec(organ="X", classes=(("A", 1, 1),), patches_per_wsi=5, dim=4)
        _, store = generate_cohort(spec)
        coords = [xy for xy, _ in store.slide_items("x-c0-w0000")]
        assert coords == [(0, 0), (0, 224), (224, 0), (224, 224), (448, 0)]
        vec = store.slide_items("x-c0-w0000")[0][1]
        assert vec.dtype == np.float32
        assert vec.shape == (4,)

    def test_determinism(self):
        spec = CohortSpec(
            organ="X", classes=(("A", 2, 4), ("B", 1, 2)), dim=8, seed=5
        )
        manifest_a, store_a = generate_cohort(spec)
        manifest_b, store_b = generate_cohort(spec)
        assert manifest_a.records == manifest_b.records
        for rec in manifest_a:
            for (xy_a, vec_a), (xy_b, vec_b) in zip(
                store_a.slide_items(rec.wsi_id), store_b.slide_items(rec.wsi_id)
            ):
                assert xy_a == xy_b
                np.testing.assert_array_equal(vec_a, vec_b)

    def test_seed_changes_vectors(self):
        def first_vector(seed):
            spec = CohortSpec(organ="X", classes=(("A", 1, 1),), dim=8, seed=seed)
            return generate_cohort(spec)[1].slide_items("x-c0-w0000")[0][1]

        assert not np.array_equal(first_vector(0), first_vector(1))

    def test_patch_statistics_match_model(self):
        """One class, no patient effect: patches are N(center, I)."""
        spec = CohortSpec(
            organ="X",
            classes=(("A", 1, 50),),
            patches_per_wsi=20,
            dim=8,
            class_separation=6.0,
            seed=2,
        )
        manifest, store = generate_cohort(spec)
        vectors = np.vstack(
            [vec for rec in manifest for _, vec in store.slide_items(rec.wsi_id)]
        )
        assert vectors.shape == (1000, 8)
        center = vectors.mean(axis=0)
        assert np.linalg.norm(center) == pytest.approx(6.0 / np.sqrt(2.0), abs=0.2)
        np.testing.assert_allclose(vectors.std(axis=0), 1.0, atol=0.15)

    def test_patient_effect_clusters_slides(self):
        """Large patient effect: same-patient slide means sit together."""
        spec = CohortSpec(
            organ="X",
            classes=(("A", 2, 4),),
            patches_per_wsi=20,
            dim=8,
            class_separation=0.0,
            patient_effect=50.0,
            seed=3,
        )
        manifest, store = generate_cohort(spec)
        means = {rec.wsi_id: slide_mean(store, rec.wsi_id) for rec in manifest}
        same = np.linalg.norm(means["x-c0-w0000"] - means["x-c0-w0002"])
        different = np.linalg.norm(means["x-c0-w0000"] - means["x-c0-w0001"])
        assert same < 2.0
        assert different > 20.0


class TestCohortFixture:
    def test_totals(self):
        shapes = load_cohort_shapes()
        rows = [row for subs in shapes.values() for row in subs]
        assert len(shapes) == 23
        assert len(rows) == 117
        assert sum(w for _, _, w in rows) == 11444
        assert sum(p for _, p, _ in rows) == 9339
        assert all(w >= p >= 1 for _, p, w in rows)

    def test_prostate_and_liver_rows(self):
        shapes = load_cohort_shapes()
        assert shapes["Prostate"] == [
            ("Adenocarcinoma, NOS", 399, 445),
            ("Infiltrating duct carcinoma, NOS", 4, 4),
        ]
        assert shapes["Liver"] == [
            ("Combined hepatocellular carcinoma and cholangiocarcinoma", 6, 6),
            ("Hepatocellular carcinoma, NOS", 350, 364),
            ("Hepatocellular carcinoma, clear cell type", 4, 4),
        ]

    def test_scaled_classes(self):
        shapes = load_cohort_shapes()
        prostate = scaled_classes(shapes["Prostate"], 10)
        assert [(c.patients, c.wsis) for c in prostate] == [(40, 44), (1, 1)]
        liver = scaled_classes(shapes["Liver"], 10)
        assert [(c.patients, c.wsis) for c in liver] == [(1, 1), (35, 36), (1, 1)]

    def test_scaled_classes_identity_divisor(self):
        shapes = load_cohort_shapes()
        for organ, rows in shapes.items():
            specs = scaled_classes(rows)
            assert [(c.label, c.patients, c.wsis) for c in specs] == rows

    def test_every_scaled_shape_is_valid(self):
        """Every archive organ must survive scaling at the desk divisor."""
        shapes = load_cohort_shapes()
        for organ, rows in shapes.items():
            specs = scaled_classes(rows, 10)
            assert all(c.wsis >= c.patients >= 1 for c in specs)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "cohorts.csv"
        path.write_text("organ,diagnosis,n\nLiver,HCC,3\n")
        with pytest.raises(FileFormatError, match="header"):
            load_cohort_shapes(path)
