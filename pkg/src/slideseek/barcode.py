"""Binary barcodes and Hamming distance on bit-packed codes.

A barcode is the sign pattern of consecutive differences of an embedding:
bit i = 1 iff v[i+1] - v[i] >= 0 (a tie maps to 1). An embedding of
dimension d yields d - 1 bits. Bits are packed little-endian into 64-bit
words: bit i of the code is bit (i mod 64) of word (i // 64), and unused
trailing bits of the last word are always zero, so equal codes are equal
word arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SearchError
from .records import PatchCoordinate

_U64 = np.uint64


def words_needed(nbits: int) -> int:
    return (nbits + 63) // 64


def _mask_trailing(words: np.ndarray, nbits: int) -> np.ndarray:
    """Zero the unused high bits of the last word; returns a fresh array."""
    words = np.array(words, dtype=_U64, copy=True)
    if words.shape != (words_needed(nbits),):
        raise ValueError(
            f"expected {words_needed(nbits)} words for {nbits} bits, got shape {words.shape}"
        )
    rem = nbits % 64
    if rem:
        words[-1] &= _U64((1 << rem) - 1)
    return words


def pack_bits(bits) -> np.ndarray:
    """Pack an array of 0/1 values into little-endian uint64 words."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.ndim != 1 or bits.size == 0:
        raise ValueError("bits must be a non-empty 1-D array")
    nbits = bits.size
    padded = np.zeros(words_needed(nbits) * 64, dtype=np.uint8)
    padded[:nbits] = bits
    return np.packbits(padded, bitorder="little").view("<u8").astype(_U64)


def unpack_bits(words: np.ndarray, nbits: int) -> np.ndarray:
    """Inverse of pack_bits; returns a uint8 array of length nbits."""
    raw = np.asarray(words, dtype=_U64).astype("<u8").view(np.uint8)
    return np.unpackbits(raw, bitorder="little")[:nbits]


@dataclass(frozen=True)
class Barcode:
    """An immutable bit-packed binary code of nbits bits."""

    words: np.ndarray
    nbits: int

    def __post_init__(self):
        if self.nbits < 1:
            raise ValueError(f"nbits must be >= 1, got {self.nbits}")
        clean = _mask_trailing(self.words, self.nbits)
        clean.flags.writeable = False
        object.__setattr__(self, "words", clean)

    @classmethod
    def from_bits(cls, bits) -> "Barcode":
        bits = np.asarray(bits)
        return cls(pack_bits(bits), int(bits.size))

    def bits(self) -> np.ndarray:
        return unpack_bits(self.words, self.nbits)

    def complement(self) -> "Barcode":
        return Barcode(~self.words, self.nbits)

    def __eq__(self, other):
        if not isinstance(other, Barcode):
            return NotImplemented
        return self.nbits == other.nbits and bool(np.array_equal(self.words, other.words))

    def __hash__(self):
        return hash((self.nbits, self.words.tobytes()))


def barcode_from_embedding(vector) -> Barcode:
    """Barcode an embedding via the sign of consecutive differences.

    Requires dimension >= 2 and finite components. The zero difference
    resolves to bit 1; the rule is arbitrary but fixed so that barcodes are
    identical across runs and platforms.
    """
    v = np.asarray(vector, dtype=np.float64)
    if v.ndim != 1 or v.size < 2:
        raise ValueError(f"embedding must be 1-D with dimension >= 2, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("embedding has non-finite components")
    bits = (np.diff(v) >= 0).astype(np.uint8)
    return Barcode.from_bits(bits)


def popcount_words(words: np.ndarray) -> np.ndarray:
    """Per-word population count (uint64 in, int64 out)."""
    return np.bitwise_count(words).astype(np.int64)


def hamming(a: Barcode, b: Barcode) -> int:
    """Exact Hamming distance via word-wise XOR and population count."""
    if a.nbits != b.nbits:
        raise SearchError(f"barcode length mismatch: {a.nbits} vs {b.nbits}")
    return int(popcount_words(a.words ^ b.words).sum())


@dataclass(frozen=True)
class BunchOfBarcodes:
    """The index payload of one WSI: one barcode per mosaic patch.

    All barcodes share nbits; coords is the parallel list of patch
    coordinates. word_matrix() exposes the codes as an (n, words) uint64
    matrix for vectorized distance computation.
    """

    wsi_id: str
    barcodes: tuple
    coords: tuple = field(default_factory=tuple)

    def __post_init__(self):
        barcodes = tuple(self.barcodes)
        coords = tuple(self.coords)
        if not barcodes:
            raise ValueError(f"bunch for {self.wsi_id!r} must be non-empty")
        nbits = barcodes[0].nbits
        if any(bc.nbits != nbits for bc in barcodes):
            raise ValueError(f"bunch for {self.wsi_id!r} mixes barcode lengths")
        if coords and len(coords) != len(barcodes):
            raise ValueError(
                f"bunch for {self.wsi_id!r}: {len(coords)} coords for {len(barcodes)} barcodes"
            )
        object.__setattr__(self, "barcodes", barcodes)
        object.__setattr__(self, "coords", coords)

    @property
    def nbits(self) -> int:
        return self.barcodes[0].nbits

    def __len__(self):
        return len(self.barcodes)

    def word_matrix(self) -> np.ndarray:
        return np.stack([bc.words for bc in self.barcodes])


def bunch_from_embeddings(wsi_id: str, items) -> BunchOfBarcodes:
    """Build a bunch from (PatchCoordinate, vector) pairs, sorted by (x, y)."""
    items = sorted(items, key=lambda it: (it[0].x, it[0].y))
    coords: list[PatchCoordinate] = []
    codes: list[Barcode] = []
    for coord, vec in items:
        coords.append(coord)
        codes.append(barcode_from_embedding(vec))
    return BunchOfBarcodes(wsi_id, tuple(codes), tuple(coords))
