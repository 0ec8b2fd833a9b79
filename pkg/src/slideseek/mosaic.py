"""Mosaic selection: two-stage k-means over a slide's tissue tiles.

Stage 1 clusters tiles by a 9-component color descriptor into at most
k_color groups. Stage 2 clusters each color group spatially on (x, y) and
keeps the tile nearest each spatial centroid. The result is a "mosaic"
covering every color region at roughly select_fraction of the tissue tiles.

Raster access is abstracted behind RasterSource so tests run on arrays and
plain image files; pyramidal slide formats are out of scope.
"""

from __future__ import annotations

import csv
import re
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptySlideError, FileFormatError
from .records import MosaicConfig, PatchCoordinate

MOSAIC_HEADER = ["wsi_id", "x", "y", "width", "height", "magnification", "color_cluster"]


class RasterSource(ABC):
    """8-bit RGB pixel provider at a fixed magnification."""

    @property
    @abstractmethod
    def width(self) -> int: ...

    @property
    @abstractmethod
    def height(self) -> int: ...

    @abstractmethod
    def read_region(self, x: int, y: int, w: int, h: int) -> np.ndarray:
        """Return the (h, w, 3) uint8 block with top-left corner (x, y)."""

    def _check_bounds(self, x, y, w, h):
        if w < 1 or h < 1 or x < 0 or y < 0 or x + w > self.width or y + h > self.height:
            raise ValueError(
                f"region ({x}, {y}, {w}, {h}) outside raster {self.width}x{self.height}"
            )


class ArrayRaster(RasterSource):
    """In-memory raster over an (H, W, 3) uint8 array."""

    def __init__(self, pixels):
        px = np.asarray(pixels, dtype=np.uint8)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) uint8 pixels, got shape {px.shape}")
        self._px = px

    @property
    def width(self):
        return self._px.shape[1]

    @property
    def height(self):
        return self._px.shape[0]

    def read_region(self, x, y, w, h):
        self._check_bounds(x, y, w, h)
        return self._px[y : y + h, x : x + w].copy()


class ImageRaster(ArrayRaster):
    """Raster backed by a single image file (PNG, PPM, anything Pillow reads)."""

    def __init__(self, path):
        from PIL import Image

        with Image.open(path) as im:
            super().__init__(np.asarray(im.convert("RGB")))


class RawRaster(RasterSource):
    """Raster over a headerless row-major RGB byte file of known dimensions."""

    def __init__(self, path, width: int, height: int):
        path = Path(path)
        expected = width * height * 3
        actual = path.stat().st_size
        if actual != expected:
            raise FileFormatError(
                f"{path}: raw raster is {actual} bytes, {width}x{height} RGB needs {expected}"
            )
        self._px = np.memmap(path, dtype=np.uint8, mode="r", shape=(height, width, 3))
        self._w = width
        self._h = height

    @property
    def width(self):
        return self._w

    @property
    def height(self):
        return self._h

    def read_region(self, x, y, w, h):
        self._check_bounds(x, y, w, h)
        return np.array(self._px[y : y + h, x : x + w])


_TILE_NAME = re.compile(r"^x(\d+)_y(\d+)\.(png|ppm)$")


class TileDirectoryRaster(RasterSource):
    """Raster assembled from a directory of uniform tiles named x{X}_y{Y}.png.

    X and Y are pixel origins; the tiles must cover a full rectangle with no
    gaps or overlap. Intended for test fixtures, so the mosaic is assembled
    eagerly.
    """

    def __init__(self, directory):
        from PIL import Image

        directory = Path(directory)
        tiles = {}
        for entry in sorted(directory.iterdir()):
            m = _TILE_NAME.match(entry.name)
            if not m:
                continue
            with Image.open(entry) as im:
                tiles[(int(m.group(1)), int(m.group(2)))] = np.asarray(im.convert("RGB"))
        if not tiles:
            raise FileFormatError(f"{directory}: no tiles matching x<N>_y<N>.png|ppm")
        shapes = {t.shape for t in tiles.values()}
        if len(shapes) != 1:
            raise FileFormatError(f"{directory}: mixed tile sizes {sorted(shapes)}")
        th, tw, _ = shapes.pop()
        xs = sorted({x for x, _ in tiles})
        ys = sorted({y for _, y in tiles})
        if xs != [i * tw for i in range(len(xs))] or ys != [i * th for i in range(len(ys))]:
            raise FileFormatError(f"{directory}: tile origins do not form a {tw}x{th} grid")
        if len(tiles) != len(xs) * len(ys):
            raise FileFormatError(f"{directory}: incomplete tile grid")
        full = np.empty((len(ys) * th, len(xs) * tw, 3), dtype=np.uint8)
        for (x, y), block in tiles.items():
            full[y : y + th, x : x + tw] = block
        self._px = full

    @property
    def width(self):
        return self._px.shape[1]

    @property
    def height(self):
        return self._px.shape[0]

    def read_region(self, x, y, w, h):
        self._check_bounds(x, y, w, h)
        return self._px[y : y + h, x : x + w].copy()


@dataclass(frozen=True)
class TilePatch:
    """One grid tile: its coordinate, color descriptor, and tissue flag."""

    coordinate: PatchCoordinate
    color_feature: np.ndarray
    tissue: bool

    def __post_init__(self):
        feat = np.asarray(self.color_feature, dtype=np.float64)
        if feat.shape != (9,) or not np.all(np.isfinite(feat)):
            raise ValueError("color_feature must be 9 finite values")
        feat = feat.copy()
        feat.flags.writeable = False
        object.__setattr__(self, "color_feature", feat)


@dataclass(frozen=True)
class Mosaic:
    """Selected patches of one slide plus the color cluster each came from."""

    wsi_id: str
    patches: tuple
    color_cluster_of_patch: tuple

    def __post_init__(self):
        object.__setattr__(self, "patches", tuple(self.patches))
        object.__setattr__(
            self, "color_cluster_of_patch", tuple(int(c) for c in self.color_cluster_of_patch)
        )
        if not self.patches:
            raise EmptySlideError(f"mosaic for {self.wsi_id!r} has no patches")
        if len(self.patches) != len(self.color_cluster_of_patch):
            raise ValueError("patches and color_cluster_of_patch must be parallel")

    def __len__(self):
        return len(self.patches)


def color_features(pixels) -> np.ndarray:
    """Per-channel mean, standard deviation, and median, each divided by 255."""
    px = np.asarray(pixels)
    if px.ndim != 3 or px.shape[2] != 3:
        raise ValueError(f"expected an (h, w, 3) RGB block, got shape {px.shape}")
    flat = px.reshape(-1, 3).astype(np.float64)
    feat = np.concatenate([flat.mean(axis=0), flat.std(axis=0), np.median(flat, axis=0)])
    return feat / 255.0


def is_background(pixels, cfg: MosaicConfig) -> bool:
    """True when at least background_max_fraction of pixels are near-white."""
    px = np.asarray(pixels)
    white = np.all(px > cfg.background_white_threshold, axis=2)
    return bool(white.mean() >= cfg.background_max_fraction)


def tile_grid(source: RasterSource, cfg: MosaicConfig) -> list[TilePatch]:
    """Cut the raster into non-overlapping patch_size tiles and flag tissue.

    Partial tiles at the right/bottom edges are dropped; a raster smaller
    than one patch has no tiles and raises EmptySlideError.
    """
    size = cfg.patch_size
    if source.width < size or source.height < size:
        raise EmptySlideError(
            f"raster {source.width}x{source.height} is smaller than one {size}x{size} patch"
        )
    tiles = []
    for y in range(0, source.height - size + 1, size):
        for x in range(0, source.width - size + 1, size):
            block = source.read_region(x, y, size, size)
            coord = PatchCoordinate(x, y, size, size, cfg.magnification)
            tiles.append(
                TilePatch(coord, color_features(block), not is_background(block, cfg))
            )
    return tiles


def _kmeans_pp_init(points: np.ndarray, k: int, rng) -> np.ndarray:
    centers = np.empty((k, points.shape[1]), dtype=np.float64)
    centers[0] = points[int(rng.integers(points.shape[0]))]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            r = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(d2), r, side="right"))
            idx = min(idx, points.shape[0] - 1)
        else:
            idx = int(rng.integers(points.shape[0]))
        centers[j] = points[idx]
        d2 = np.minimum(d2, ((points - centers[j]) ** 2).sum(axis=1))
    return centers


def kmeans(points, k: int, max_iter: int = 100, seed: int = 0, inertia_trace=None):
    """Lloyd's algorithm with k-means++ seeding.

    Returns (centroids, assignments). k is clamped to the number of distinct
    points; an empty cluster is repaired by moving its centroid onto the
    point farthest from its current assignment. Appends per-iteration
    inertia to inertia_trace when given.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ValueError("kmeans needs a non-empty 2-D point array")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if max_iter < 1:
        raise ValueError(f"max_iter must be >= 1, got {max_iter}")
    n = pts.shape[0]
    k = min(k, np.unique(pts, axis=0).shape[0])
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_init(pts, k, rng)
    assignments = None
    for _ in range(max_iter):
        d2 = ((pts[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_assign = d2.argmin(axis=1)
        if inertia_trace is not None:
            inertia_trace.append(float(d2[np.arange(n), new_assign].sum()))
        if assignments is not None and np.array_equal(new_assign, assignments):
            break
        assignments = new_assign
        counts = np.bincount(assignments, minlength=k)
        centroids = np.zeros((k, pts.shape[1]), dtype=np.float64)
        np.add.at(centroids, assignments, pts)
        nonempty = counts > 0
        centroids[nonempty] /= counts[nonempty, None]
        if not nonempty.all():
            # relocate each empty centroid onto the costliest point
            point_cost = d2[np.arange(n), assignments].copy()
            for c in np.flatnonzero(~nonempty):
                donor = int(point_cost.argmax())
                centroids[c] = pts[donor]
                point_cost[donor] = -1.0
    return centroids, assignments


def _nearest_tile(member_xy: np.ndarray, order_key, centroid: np.ndarray) -> int:
    """Index (into members) of the tile closest to centroid, ties by (y, x)."""
    d2 = ((member_xy - centroid) ** 2).sum(axis=1)
    best = np.flatnonzero(d2 == d2.min())
    return min(best, key=order_key)


def select_mosaic(tiles, cfg: MosaicConfig, wsi_id: str = "") -> Mosaic:
    """Two-stage selection over the tissue tiles of one slide.

    Per color cluster c of n_c tiles the spatial stage keeps
    max(1, round(select_fraction * n_c)) tiles, so every non-empty color
    cluster is represented and the total tracks select_fraction.
    """
    tissue = [t for t in tiles if t.tissue]
    if not tissue:
        raise EmptySlideError(f"slide {wsi_id!r} has no tissue tiles")
    feats = np.stack([t.color_feature for t in tissue])
    k1 = min(cfg.k_color, len(tissue))
    seeds = np.random.SeedSequence(cfg.seed).generate_state(1 + k1)
    _, color_assign = kmeans(feats, k1, cfg.kmeans_max_iter, int(seeds[0]))

    selected = []
    clusters = []
    for c in range(int(color_assign.max()) + 1):
        member_idx = np.flatnonzero(color_assign == c)
        if member_idx.size == 0:
            continue
        members = [tissue[i] for i in member_idx]
        xy = np.array(
            [[t.coordinate.x, t.coordinate.y] for t in members], dtype=np.float64
        )
        k_s = max(1, round(cfg.select_fraction * len(members)))
        centroids, _ = kmeans(xy, k_s, cfg.kmeans_max_iter, int(seeds[1 + c]))

        def by_yx(i):
            return (members[i].coordinate.y, members[i].coordinate.x)

        taken = set()
        for centroid in centroids:
            pick = _nearest_tile(xy, by_yx, centroid)
            if pick in taken:
                # duplicate nearest tile is only possible for coincident
                # centroids; fall back to the next closest untaken tile
                d2 = ((xy - centroid) ** 2).sum(axis=1)
                for i in sorted(range(len(members)), key=lambda i: (d2[i], by_yx(i))):
                    if i not in taken:
                        pick = i
                        break
            taken.add(pick)
            selected.append(members[pick].coordinate)
            clusters.append(c)
    return Mosaic(wsi_id, tuple(selected), tuple(clusters))


def build_mosaic(source: RasterSource, cfg: MosaicConfig, wsi_id: str) -> Mosaic:
    return select_mosaic(tile_grid(source, cfg), cfg, wsi_id)


def _format_magnification(m: float) -> str:
    return str(int(m)) if float(m).is_integer() else repr(float(m))


def mosaic_to_csv_rows(mosaic: Mosaic) -> list[list[str]]:
    rows = []
    for coord, cluster in zip(mosaic.patches, mosaic.color_cluster_of_patch):
        rows.append(
            [
                mosaic.wsi_id,
                str(coord.x),
                str(coord.y),
                str(coord.width),
                str(coord.height),
                _format_magnification(coord.magnification),
                str(cluster),
            ]
        )
    return rows


def write_mosaic_csv(mosaics, path) -> None:
    """Write one or more mosaics to a CSV with the canonical header."""
    if isinstance(mosaics, Mosaic):
        mosaics = [mosaics]
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(MOSAIC_HEADER)
        for mosaic in mosaics:
            writer.writerows(mosaic_to_csv_rows(mosaic))


def read_mosaic_csv(path) -> list[Mosaic]:
    """Read mosaics back, grouped by wsi_id in first-appearance order."""
    path = Path(path)
    grouped: dict[str, tuple[list, list]] = {}
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != MOSAIC_HEADER:
            raise FileFormatError(f"{path}: bad mosaic header {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(MOSAIC_HEADER):
                raise FileFormatError(f"{path}:{lineno}: expected {len(MOSAIC_HEADER)} fields")
            try:
                wsi_id = row[0]
                coord = PatchCoordinate(
                    int(row[1]), int(row[2]), int(row[3]), int(row[4]), float(row[5])
                )
                cluster = int(row[6])
            except ValueError as exc:
                raise FileFormatError(f"{path}:{lineno}: {exc}") from exc
            grouped.setdefault(wsi_id, ([], []))
            grouped[wsi_id][0].append(coord)
            grouped[wsi_id][1].append(cluster)
    return [Mosaic(wsi, tuple(p), tuple(c)) for wsi, (p, c) in grouped.items()]
