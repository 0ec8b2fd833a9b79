"""WSI-to-WSI retrieval over bunches of barcodes.

A query slide is matched to a candidate by the median-of-minimums rule:
for each query barcode take its minimum Hamming distance to any candidate
barcode, then take the median of those minima (mean of the central pair
for even counts). Scores ascend; ties break on wsi_id. Scoring is an
exhaustive linear scan, which desk-scale cohorts keep affordable.

The distance is deliberately asymmetric: the query is always the first
argument.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .barcode import BunchOfBarcodes, bunch_from_embeddings, popcount_words
from .embedder import SlideVector
from .errors import SearchError
from .records import EvalConfig, PatchCoordinate, SlideRecord


@dataclass(frozen=True)
class RetrievalResult:
    """Ranked candidates, ascending by (distance, wsi_id); the query absent."""

    ranked: tuple

    def __post_init__(self):
        object.__setattr__(self, "ranked", tuple(self.ranked))

    def __len__(self):
        return len(self.ranked)

    def labels(self, k: int) -> list[str]:
        return [label for _, _, label in self.ranked[:k]]


@dataclass
class SlideIndex:
    """All indexed slides: records, their barcode bunches, optional slide vectors."""

    nbits: int
    entries: list = field(default_factory=list)
    slide_vectors: dict = field(default_factory=dict)
    _by_id: dict = field(default_factory=dict, repr=False)
    _by_organ: dict = field(default_factory=dict, repr=False)

    def add(self, record: SlideRecord, bunch: BunchOfBarcodes) -> None:
        if record.wsi_id != bunch.wsi_id:
            raise SearchError(
                f"record {record.wsi_id!r} paired with bunch {bunch.wsi_id!r}"
            )
        if bunch.nbits != self.nbits:
            raise SearchError(
                f"bunch for {record.wsi_id!r} has nbits {bunch.nbits}, index requires {self.nbits}"
            )
        if record.wsi_id in self._by_id:
            raise SearchError(f"duplicate wsi_id {record.wsi_id!r} in index")
        self.entries.append((record, bunch))
        self._by_id[record.wsi_id] = (record, bunch)
        self._by_organ.setdefault(record.organ, []).append((record, bunch))

    def add_slide_vector(self, sv: SlideVector) -> None:
        if self.slide_vectors and next(iter(self.slide_vectors.values())).dim != sv.dim:
            raise SearchError(f"slide vector for {sv.wsi_id!r} has mismatched dim {sv.dim}")
        self.slide_vectors[sv.wsi_id] = sv

    def __len__(self):
        return len(self.entries)

    def __contains__(self, wsi_id):
        return wsi_id in self._by_id

    def get(self, wsi_id: str):
        if wsi_id not in self._by_id:
            raise SearchError(f"wsi_id {wsi_id!r} not in index")
        return self._by_id[wsi_id]

    def organs(self) -> list[str]:
        return sorted(self._by_organ)

    def organ_entries(self, organ: str) -> list:
        return list(self._by_organ.get(organ, []))


def build_index(records, store) -> SlideIndex:
    """Index every manifest record from the embeddings in store.

    Barcodes each slide's embeddings (sorted by patch coordinate) and keys
    them under the record. All slides must share embedding dimension, which
    the store already guarantees.
    """
    records = list(records)
    if not records:
        raise SearchError("cannot build an index from zero records")
    index = None
    for record in sorted(records, key=lambda r: r.wsi_id):
        items = [
            (PatchCoordinate(x, y, 1, 1), vec)
            for (x, y), vec in store.slide_items(record.wsi_id)
        ]
        if not items:
            raise SearchError(f"no embeddings stored for slide {record.wsi_id!r}")
        bunch = bunch_from_embeddings(record.wsi_id, items)
        if index is None:
            index = SlideIndex(nbits=bunch.nbits)
        index.add(record, bunch)
    return index


def _min_hamming_per_query(query_words: np.ndarray, cand_words: np.ndarray) -> np.ndarray:
    """For each query barcode row, its min Hamming distance to any candidate row."""
    xor = query_words[:, None, :] ^ cand_words[None, :, :]
    dists = popcount_words(xor).sum(axis=2)
    return dists.min(axis=1)


def _median(values: np.ndarray) -> float:
    ordered = np.sort(values)
    n = ordered.size
    mid = n // 2
    if n % 2:
        return float(ordered[mid])
    return (float(ordered[mid - 1]) + float(ordered[mid])) / 2.0


def wsi_distance(query: BunchOfBarcodes, candidate: BunchOfBarcodes) -> float:
    """Median over query patches of the min Hamming distance into the candidate."""
    if query.nbits != candidate.nbits:
        raise SearchError(f"nbits mismatch: query {query.nbits}, candidate {candidate.nbits}")
    minima = _min_hamming_per_query(query.word_matrix(), candidate.word_matrix())
    return _median(minima)


def _candidate_pool(index: SlideIndex, record: SlideRecord, cfg: EvalConfig):
    pool = index.organ_entries(record.organ) if cfg.within_organ else list(index.entries)
    pool = [(r, b) for r, b in pool if r.wsi_id != record.wsi_id]
    if cfg.exclude_same_patient:
        pool = [(r, b) for r, b in pool if r.patient_id != record.patient_id]
    if not pool:
        raise SearchError(
            f"no candidates for {record.wsi_id!r} in organ {record.organ!r}"
        )
    return pool


def search(
    index: SlideIndex,
    query: BunchOfBarcodes,
    record: SlideRecord,
    k: int,
    cfg: EvalConfig | None = None,
) -> RetrievalResult:
    """Top-k slides for one query bunch, never including the query itself."""
    if k < 1:
        raise SearchError(f"k must be >= 1, got {k}")
    cfg = cfg or EvalConfig()
    pool = _candidate_pool(index, record, cfg)
    scored = [
        (wsi_distance(query, bunch), r.wsi_id, r.primary_diagnosis) for r, bunch in pool
    ]
    scored.sort(key=lambda s: (s[0], s[1]))
    return RetrievalResult(tuple((w, d, l) for d, w, l in scored[:k]))


def majority_label(result: RetrievalResult, k: int) -> str:
    """Most frequent label among the first k results, frequency ties to best rank."""
    if len(result) == 0:
        raise SearchError("cannot vote on an empty result")
    labels = result.labels(k)
    counts: dict[str, int] = {}
    first_rank: dict[str, int] = {}
    for rank, label in enumerate(labels):
        counts[label] = counts.get(label, 0) + 1
        first_rank.setdefault(label, rank)
    return max(counts, key=lambda lab: (counts[lab], -first_rank[lab]))


def slide_vector_search(
    index: SlideIndex,
    query: SlideVector,
    record: SlideRecord,
    k: int,
    cfg: EvalConfig | None = None,
) -> RetrievalResult:
    """Top-k by cosine distance over the slide-vector table."""
    if k < 1:
        raise SearchError(f"k must be >= 1, got {k}")
    if not index.slide_vectors:
        raise SearchError("index has no slide-vector table")
    cfg = cfg or EvalConfig()
    pool = _candidate_pool(index, record, cfg)
    qv = query.vector.astype(np.float64)
    qn = np.linalg.norm(qv)
    if qn == 0:
        raise SearchError(f"query slide vector {query.wsi_id!r} is all zeros")
    scored = []
    for r, _ in pool:
        if r.wsi_id not in index.slide_vectors:
            raise SearchError(f"no slide vector stored for candidate {r.wsi_id!r}")
        sv = index.slide_vectors[r.wsi_id]
        if sv.dim != query.dim:
            raise SearchError(
                f"slide vector dim mismatch: query {query.dim}, {r.wsi_id!r} has {sv.dim}"
            )
        cv = sv.vector.astype(np.float64)
        cn = np.linalg.norm(cv)
        if cn == 0:
            raise SearchError(f"stored slide vector {r.wsi_id!r} is all zeros")
        distance = 1.0 - float(qv @ cv) / (qn * cn)
        scored.append((distance, r.wsi_id, r.primary_diagnosis))
    scored.sort(key=lambda s: (s[0], s[1]))
    return RetrievalResult(tuple((w, d, l) for d, w, l in scored[:k]))
