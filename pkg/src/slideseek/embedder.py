"""Patch embeddings: binary file formats and a deterministic built-in encoder.

Real encoders live outside the engine; the engine consumes their output
through two little-endian file formats:

  YXEB (per-slide patch embeddings):
    magic 'YXEB', version u16 = 1, dim u32, count u32,
    then count records of [x u32, y u32, vector dim x f32].
  YXSV (one vector per slide):
    magic 'YXSV', version u16 = 1, dim u32, vector dim x f32.

The built-in encoder (builtin_embed) is a seeded color-histogram projection
that lets the whole pipeline run hermetically in tests: a 512-bin 8x8x8 RGB
histogram, L1-normalized, multiplied by a random projection matrix with
entries +-1/sqrt(512) drawn once per seed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FileFormatError
from .records import PatchCoordinate

YXEB_MAGIC = b"YXEB"
YXSV_MAGIC = b"YXSV"
FORMAT_VERSION = 1
_HIST_BINS = 512  # 8 * 8 * 8


@dataclass(frozen=True)
class Embedding:
    """One float vector per patch; dimension must be >= 2 so it can be barcoded."""

    vector: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=np.float32)
        if v.ndim != 1 or v.size < 2:
            raise ValueError(f"embedding must be 1-D with dim >= 2, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("embedding has non-finite components")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "vector", v)

    @property
    def dim(self) -> int:
        return int(self.vector.size)


@dataclass(frozen=True)
class SlideVector:
    """A single whole-slide embedding (slide-vector retrieval mode)."""

    wsi_id: str
    vector: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=np.float32)
        if v.ndim != 1 or v.size < 1:
            raise ValueError("slide vector must be a non-empty 1-D array")
        if not np.all(np.isfinite(v)):
            raise ValueError(f"slide vector for {self.wsi_id!r} has non-finite components")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "vector", v)

    @property
    def dim(self) -> int:
        return int(self.vector.size)


class EmbeddingStore:
    """Map from (wsi_id, (x, y)) to embedding vectors, all of one dimension.

    Immutable once populated by the loaders; a lookup miss is a KeyError, not
    a silent skip, so dropped patches cannot bias retrieval.
    """

    def __init__(self, dim: int):
        if dim < 2:
            raise ValueError(f"store dimension must be >= 2, got {dim}")
        self.dim = int(dim)
        self._data: dict[tuple[str, tuple[int, int]], np.ndarray] = {}

    def __len__(self):
        return len(self._data)

    def __contains__(self, key):
        return key in self._data

    def add(self, wsi_id: str, coord: PatchCoordinate, vector) -> None:
        v = np.asarray(vector, dtype=np.float32)
        if v.shape != (self.dim,):
            raise FileFormatError(
                f"embedding for {wsi_id!r} has dim {v.size}, store requires {self.dim}"
            )
        self._data[(wsi_id, (coord.x, coord.y))] = v

    def get(self, wsi_id: str, coord: PatchCoordinate) -> np.ndarray:
        key = (wsi_id, (coord.x, coord.y))
        if key not in self._data:
            raise KeyError(f"no embedding for slide {wsi_id!r} at ({coord.x}, {coord.y})")
        return self._data[key]

    def slide_items(self, wsi_id: str) -> list[tuple[tuple[int, int], np.ndarray]]:
        """All (x, y) -> vector entries of one slide, sorted by (x, y)."""
        items = [(xy, v) for (sid, xy), v in self._data.items() if sid == wsi_id]
        items.sort(key=lambda it: it[0])
        return items

    def wsi_ids(self) -> list[str]:
        return sorted({sid for sid, _ in self._data})

    def merge(self, other: "EmbeddingStore") -> None:
        if other.dim != self.dim:
            raise FileFormatError(
                f"cannot merge stores of dim {other.dim} into dim {self.dim}"
            )
        self._data.update(other._data)


def _read_exact(f, n: int, path, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        offset = f.tell() - len(data)
        raise FileFormatError(f"{path}: truncated while reading {what} at byte {offset}")
    return data


def load_embeddings(path, wsi_id: str | None = None) -> EmbeddingStore:
    """Load one slide's YXEB file. wsi_id defaults to the file stem."""
    path = Path(path)
    if wsi_id is None:
        wsi_id = path.stem
    with open(path, "rb") as f:
        magic = _read_exact(f, 4, path, "magic")
        if magic != YXEB_MAGIC:
            raise FileFormatError(f"{path}: bad magic {magic!r}, expected {YXEB_MAGIC!r}")
        version, dim, count = struct.unpack("<HII", _read_exact(f, 10, path, "header"))
        if version != FORMAT_VERSION:
            raise FileFormatError(f"{path}: unsupported version {version}")
        if dim < 2:
            raise FileFormatError(f"{path}: dim {dim} is below the barcoding minimum of 2")
        store = EmbeddingStore(dim)
        rec_size = 8 + 4 * dim
        for i in range(count):
            raw = _read_exact(f, rec_size, path, f"record {i}")
            x, y = struct.unpack_from("<II", raw)
            vec = np.frombuffer(raw, dtype="<f4", count=dim, offset=8)
            coord = PatchCoordinate(x, y, 1, 1)
            store.add(wsi_id, coord, vec)
        trailing = f.read(1)
        if trailing:
            raise FileFormatError(f"{path}: {len(trailing)}+ trailing bytes after {count} records")
    return store


def write_embeddings(store: EmbeddingStore, wsi_id: str, path) -> None:
    """Write one slide's entries as a YXEB file, records sorted by (x, y)."""
    items = store.slide_items(wsi_id)
    with open(path, "wb") as f:
        f.write(YXEB_MAGIC)
        f.write(struct.pack("<HII", FORMAT_VERSION, store.dim, len(items)))
        for (x, y), vec in items:
            f.write(struct.pack("<II", x, y))
            f.write(np.asarray(vec, dtype="<f4").tobytes())


def load_slide_vector(path, wsi_id: str | None = None) -> SlideVector:
    """Load a YXSV single-vector file. wsi_id defaults to the file stem."""
    path = Path(path)
    if wsi_id is None:
        wsi_id = path.stem
    with open(path, "rb") as f:
        magic = _read_exact(f, 4, path, "magic")
        if magic != YXSV_MAGIC:
            raise FileFormatError(f"{path}: bad magic {magic!r}, expected {YXSV_MAGIC!r}")
        version, dim = struct.unpack("<HI", _read_exact(f, 6, path, "header"))
        if version != FORMAT_VERSION:
            raise FileFormatError(f"{path}: unsupported version {version}")
        if dim < 1:
            raise FileFormatError(f"{path}: dim must be >= 1")
        raw = _read_exact(f, 4 * dim, path, "vector")
        vec = np.frombuffer(raw, dtype="<f4", count=dim)
        trailing = f.read(1)
        if trailing:
            raise FileFormatError(f"{path}: trailing bytes after vector")
    return SlideVector(wsi_id, vec)


def write_slide_vector(sv: SlideVector, path) -> None:
    with open(path, "wb") as f:
        f.write(YXSV_MAGIC)
        f.write(struct.pack("<HI", FORMAT_VERSION, sv.dim))
        f.write(np.asarray(sv.vector, dtype="<f4").tobytes())


_projection_cache: dict[tuple[int, int], np.ndarray] = {}


def _projection(dim: int, seed: int) -> np.ndarray:
    """The (512, dim) +-1/sqrt(512) sign matrix for one seed, cached."""
    key = (dim, seed)
    if key not in _projection_cache:
        rng = np.random.default_rng(seed)
        signs = rng.integers(0, 2, size=(_HIST_BINS, dim)).astype(np.float64) * 2.0 - 1.0
        _projection_cache[key] = signs / np.sqrt(_HIST_BINS)
    return _projection_cache[key]


def color_histogram(pixels) -> np.ndarray:
    """L1-normalized 8x8x8 RGB histogram (512 bins) of an RGB block."""
    px = np.asarray(pixels, dtype=np.uint8)
    if px.ndim != 3 or px.shape[2] != 3:
        raise ValueError(f"expected an (h, w, 3) RGB block, got shape {px.shape}")
    binned = px.reshape(-1, 3) // 32
    idx = binned[:, 0].astype(np.int64) * 64 + binned[:, 1] * 8 + binned[:, 2]
    hist = np.bincount(idx, minlength=_HIST_BINS).astype(np.float64)
    return hist / hist.sum()


def builtin_embed(pixels, dim: int, seed: int) -> Embedding:
    """Deterministic GPU-free patch encoder: histogram times sign projection.

    Invariant under any permutation of pixels within the block. An all-black
    block occupies histogram bin 0 only, so its embedding is row 0 of the
    projection matrix.
    """
    if dim < 2:
        raise ValueError(f"dim must be >= 2, got {dim}")
    hist = color_histogram(pixels)
    vec = hist @ _projection(dim, seed)
    return Embedding(vec.astype(np.float32))
