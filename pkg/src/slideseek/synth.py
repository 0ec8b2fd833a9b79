"""Synthetic cohort generator for desk-scale pipeline verification.

Each subtype is a Gaussian mixture component: a class center plus a
per-patient offset plus unit patch noise. Centers sit along mutually
orthogonal directions scaled so every pair of centers is class_separation
apart, making separability a single knob. class_separation 0 collapses
all classes onto one distribution.

Cohort shapes mirroring the reference archive (organ, subtype, patient and
slide counts) ship as a CSV fixture under slideseek/data/.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass
from importlib.resources import files
from math import ceil, sqrt
from pathlib import Path

import numpy as np

from .embedder import EmbeddingStore
from .errors import FileFormatError
from .records import DatasetManifest, PatchCoordinate, SlideRecord

COHORT_HEADER = ["organ", "primary_diagnosis", "patients", "wsis"]


@dataclass(frozen=True)
class ClassSpec:
    label: str
    patients: int
    wsis: int

    def __post_init__(self):
        if not self.label:
            raise ValueError("class label must be non-empty")
        if self.patients < 1:
            raise ValueError(f"class {self.label!r}: patients must be >= 1")
        if self.wsis < self.patients:
            raise ValueError(
                f"class {self.label!r}: wsis ({self.wsis}) < patients ({self.patients})"
            )


@dataclass(frozen=True)
class CohortSpec:
    """Generator parameters for one synthetic organ cohort."""

    organ: str
    classes: tuple
    patches_per_wsi: int = 20
    dim: int = 64
    class_separation: float = 4.0
    patient_effect: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(
            self,
            "classes",
            tuple(c if isinstance(c, ClassSpec) else ClassSpec(*c) for c in self.classes),
        )
        if not self.organ:
            raise ValueError("organ must be non-empty")
        if not self.classes:
            raise ValueError("at least one class required")
        labels = [c.label for c in self.classes]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate class labels in {labels}")
        if self.patches_per_wsi < 1:
            raise ValueError("patches_per_wsi must be >= 1")
        if self.dim < 2:
            raise ValueError(f"dim must be >= 2, got {self.dim}")
        if self.class_separation < 0 or self.patient_effect < 0:
            raise ValueError("class_separation and patient_effect must be >= 0")
        if len(self.classes) > self.dim:
            raise ValueError(
                f"{len(self.classes)} classes need dim >= {len(self.classes)}, got {self.dim}"
            )

    @classmethod
    def from_json(cls, path) -> "CohortSpec":
        with open(path) as f:
            doc = json.load(f)
        try:
            return cls(
                organ=doc["organ"],
                classes=tuple(
                    ClassSpec(c["label"], int(c["patients"]), int(c["wsis"]))
                    for c in doc["classes"]
                ),
                patches_per_wsi=int(doc.get("patches_per_wsi", 20)),
                dim=int(doc.get("dim", 64)),
                class_separation=float(doc.get("class_separation", 4.0)),
                patient_effect=float(doc.get("patient_effect", 0.0)),
                seed=int(doc.get("seed", 0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FileFormatError(f"{path}: invalid cohort spec: {exc}") from exc

    def to_json(self) -> str:
        doc = {
            "organ": self.organ,
            "classes": [
                {"label": c.label, "patients": c.patients, "wsis": c.wsis}
                for c in self.classes
            ],
            "patches_per_wsi": self.patches_per_wsi,
            "dim": self.dim,
            "class_separation": self.class_separation,
            "patient_effect": self.patient_effect,
            "seed": self.seed,
        }
        return json.dumps(doc, indent=2) + "\n"


def _slug(text: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", text.lower()).strip("-")


def _class_centers(n_classes: int, dim: int, separation: float, rng) -> np.ndarray:
    """Centers along orthonormal directions, every pair separation apart."""
    gauss = rng.standard_normal((dim, n_classes))
    q, r = np.linalg.qr(gauss)
    q = q * np.sign(np.diag(r))  # sign-fix so the basis is seed-stable
    return (separation / sqrt(2.0)) * q.T


def generate_cohort(spec: CohortSpec):
    """Build (manifest, embedding store) for one synthetic organ.

    Slides are dealt to their class's patients round-robin, so patient loads
    differ by at most one slide. Patch embeddings are
    center + patient_offset + unit Gaussian noise, in float32.
    """
    root = np.random.SeedSequence(spec.seed)
    center_seq, *class_seqs = root.spawn(1 + len(spec.classes))
    centers = _class_centers(
        len(spec.classes), spec.dim, spec.class_separation,
        np.random.default_rng(center_seq),
    )
    grid = ceil(sqrt(spec.patches_per_wsi))
    organ_slug = _slug(spec.organ)

    records = []
    store = EmbeddingStore(spec.dim)
    for ci, cls in enumerate(spec.classes):
        rng = np.random.default_rng(class_seqs[ci])
        offsets = rng.standard_normal((cls.patients, spec.dim)) * spec.patient_effect
        for wi in range(cls.wsis):
            pi = wi % cls.patients
            wsi_id = f"{organ_slug}-c{ci}-w{wi:04d}"
            records.append(
                SlideRecord(
                    wsi_id=wsi_id,
                    patient_id=f"{organ_slug}-c{ci}-p{pi:04d}",
                    organ=spec.organ,
                    primary_diagnosis=cls.label,
                )
            )
            noise = rng.standard_normal((spec.patches_per_wsi, spec.dim))
            vectors = centers[ci] + offsets[pi] + noise
            for j in range(spec.patches_per_wsi):
                coord = PatchCoordinate((j % grid) * 224, (j // grid) * 224, 224, 224)
                store.add(wsi_id, coord, vectors[j].astype(np.float32))
    return DatasetManifest(tuple(records)), store


def cohort_shapes_path() -> Path:
    """Path of the shipped organ/subtype/count fixture."""
    return Path(str(files("slideseek") / "data" / "cohorts.csv"))


def load_cohort_shapes(path=None) -> dict:
    """Fixture rows as {organ: [(diagnosis, patients, wsis), ...]}."""
    path = Path(path) if path is not None else cohort_shapes_path()
    out: dict[str, list[tuple[str, int, int]]] = {}
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != COHORT_HEADER:
            raise FileFormatError(f"{path}: bad cohort header {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 4:
                raise FileFormatError(f"{path}:{lineno}: expected 4 fields")
            organ, diagnosis, patients, wsis = row
            try:
                out.setdefault(organ, []).append((diagnosis, int(patients), int(wsis)))
            except ValueError as exc:
                raise FileFormatError(f"{path}:{lineno}: {exc}") from exc
    return out


def scaled_classes(shape, divisor: int = 1) -> tuple:
    """ClassSpecs from (label, patients, wsis) rows, counts divided and floored at 1."""
    out = []
    for label, patients, wsis in shape:
        w = max(1, round(wsis / divisor))
        p = min(max(1, round(patients / divisor)), w)
        out.append(ClassSpec(label, p, w))
    return tuple(out)
