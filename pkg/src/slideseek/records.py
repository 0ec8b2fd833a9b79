"""Core domain types: slide identity, patch coordinates, pipeline configuration.

All types here are immutable values (frozen dataclasses); they can be shared
freely across threads.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from .errors import ManifestError

MANIFEST_HEADER = ["wsi_id", "patient_id", "organ", "primary_diagnosis", "path"]


@dataclass(frozen=True)
class SlideRecord:
    """Identity and labels for one whole-slide image.

    Labels are opaque strings compared byte-exactly after trimming surrounding
    whitespace; no case or punctuation normalization (subtype labels contain
    commas and abbreviations that must not be merged). Several wsi_ids may
    share a patient_id.
    """

    wsi_id: str
    patient_id: str
    organ: str
    primary_diagnosis: str
    source_path: Optional[str] = None

    def __post_init__(self):
        for name in ("wsi_id", "patient_id", "organ", "primary_diagnosis"):
            object.__setattr__(self, name, getattr(self, name).strip())
        if not self.wsi_id:
            raise ManifestError("wsi_id must be non-empty")
        if not self.organ:
            raise ManifestError(f"record {self.wsi_id!r}: organ must be non-empty")
        if not self.primary_diagnosis:
            raise ManifestError(f"record {self.wsi_id!r}: primary_diagnosis must be non-empty")


@dataclass(frozen=True)
class PatchCoordinate:
    """One patch location in the level-0 pixel frame."""

    x: int
    y: int
    width: int
    height: int
    magnification: float = 20.0

    def __post_init__(self):
        if self.x < 0 or self.y < 0:
            raise ValueError(f"patch origin must be non-negative, got ({self.x}, {self.y})")
        if self.width < 1 or self.height < 1:
            raise ValueError("patch width and height must be >= 1")
        if self.width != self.height:
            raise ValueError(f"patches are square, got {self.width}x{self.height}")


@dataclass(frozen=True)
class MosaicConfig:
    """Parameters for the two-stage mosaic selection.

    k_color is the number of color clusters for stage 1; select_fraction is
    the share of tissue tiles kept per color cluster in stage 2. A tile is
    background iff at least background_max_fraction of its pixels have all
    three channels above background_white_threshold.
    """

    k_color: int = 9
    select_fraction: float = 0.02
    patch_size: int = 224
    magnification: float = 20.0
    background_white_threshold: int = 200
    background_max_fraction: float = 0.9
    kmeans_max_iter: int = 100
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.select_fraction <= 1.0):
            raise ValueError(f"select_fraction must be in (0, 1], got {self.select_fraction}")
        if self.k_color < 1:
            raise ValueError(f"k_color must be >= 1, got {self.k_color}")
        if self.patch_size < 1:
            raise ValueError(f"patch_size must be >= 1, got {self.patch_size}")
        if not (0 <= self.background_white_threshold <= 255):
            raise ValueError("background_white_threshold must be in [0, 255]")
        if not (0.0 < self.background_max_fraction <= 1.0):
            raise ValueError("background_max_fraction must be in (0, 1]")
        if self.kmeans_max_iter < 1:
            raise ValueError("kmeans_max_iter must be >= 1")


@dataclass(frozen=True)
class EvalConfig:
    """Retrieval evaluation parameters.

    exclude_same_patient removes slides sharing the query's patient_id from
    the candidate pool (off by default; the reference protocol does not state
    it). within_organ restricts candidates to the query's organ cohort.
    """

    top_ks: tuple = (1, 3, 5)
    z_value: float = 1.96
    exclude_same_patient: bool = False
    within_organ: bool = True

    def __post_init__(self):
        ks = tuple(int(k) for k in self.top_ks)
        object.__setattr__(self, "top_ks", ks)
        if not ks:
            raise ValueError("top_ks must be non-empty")
        if any(k < 1 for k in ks):
            raise ValueError(f"every top-k must be >= 1, got {ks}")
        if list(ks) != sorted(ks):
            raise ValueError(f"top_ks must be sorted ascending, got {ks}")
        if self.z_value <= 0:
            raise ValueError(f"z_value must be positive, got {self.z_value}")


@dataclass(frozen=True)
class DatasetManifest:
    """An ordered collection of slide records with unique wsi_ids."""

    records: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        seen = {}
        for rec in self.records:
            if rec.wsi_id in seen:
                raise ManifestError(f"duplicate wsi_id {rec.wsi_id!r} in manifest")
            seen[rec.wsi_id] = rec
        paths = [r.source_path for r in self.records if r.source_path]
        if len(paths) != len(set(paths)):
            dupe = next(p for p in paths if paths.count(p) > 1)
            raise ManifestError(f"file path {dupe!r} referenced by more than one record")

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def by_id(self, wsi_id: str) -> SlideRecord:
        for rec in self.records:
            if rec.wsi_id == wsi_id:
                return rec
        raise KeyError(wsi_id)

    def organs(self) -> list[str]:
        """Distinct organs in first-appearance order."""
        out = []
        for rec in self.records:
            if rec.organ not in out:
                out.append(rec.organ)
        return out


def load_manifest(path) -> DatasetManifest:
    """Read a manifest CSV (header wsi_id,patient_id,organ,primary_diagnosis,path).

    Record order follows file order. Raises ManifestError with a line number
    on malformed rows and on duplicate wsi_ids.
    """
    path = Path(path)
    records = []
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ManifestError(f"{path}: empty manifest file") from None
        if header != MANIFEST_HEADER:
            raise ManifestError(
                f"{path}: line 1: expected header {','.join(MANIFEST_HEADER)!r}, "
                f"got {','.join(header)!r}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(MANIFEST_HEADER):
                raise ManifestError(
                    f"{path}: line {lineno}: expected {len(MANIFEST_HEADER)} fields, got {len(row)}"
                )
            wsi_id, patient_id, organ, diagnosis, src = row
            try:
                records.append(
                    SlideRecord(wsi_id, patient_id, organ, diagnosis, src.strip() or None)
                )
            except ManifestError as exc:
                raise ManifestError(f"{path}: line {lineno}: {exc}") from None
    try:
        return DatasetManifest(tuple(records))
    except ManifestError as exc:
        raise ManifestError(f"{path}: {exc}") from None


def manifest_to_csv(manifest: DatasetManifest) -> str:
    """Render a manifest in canonical CSV form (minimal double-quote escaping)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MANIFEST_HEADER)
    for rec in manifest:
        writer.writerow(
            [rec.wsi_id, rec.patient_id, rec.organ, rec.primary_diagnosis, rec.source_path or ""]
        )
    return buf.getvalue()


def write_manifest(manifest: DatasetManifest, path) -> None:
    Path(path).write_text(manifest_to_csv(manifest), encoding="utf-8")


def group_by_organ(records: Iterable[SlideRecord]) -> dict[str, list[SlideRecord]]:
    out: dict[str, list[SlideRecord]] = {}
    for rec in records:
        out.setdefault(rec.organ, []).append(rec)
    return out
