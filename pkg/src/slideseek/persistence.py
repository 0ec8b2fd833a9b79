"""On-disk slide index: the YXIX binary format.

Little-endian throughout: magic 'YXIX', version u16 = 1, nbits u32, slide
count u32, then per slide the four identity strings (u32 length-prefixed
UTF-8: wsi_id, patient_id, organ, primary_diagnosis), the patch count u32,
and per patch [x u32, y u32, ceil(nbits/64) x u64 barcode words].

Slides are written sorted by wsi_id so identical indexes serialize to
identical bytes. Patch geometry beyond (x, y) and slide source paths are
not persisted; coordinates act as identity keys only.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .barcode import Barcode, BunchOfBarcodes, words_needed
from .errors import FileFormatError
from .records import PatchCoordinate, SlideRecord
from .search import SlideIndex

INDEX_MAGIC = b"YXIX"
INDEX_VERSION = 1


def write_index(index: SlideIndex, path) -> None:
    """Serialize a non-empty index canonically (slides sorted by wsi_id)."""
    if len(index) == 0:
        raise ValueError("refusing to write an empty index")
    entries = sorted(index.entries, key=lambda e: e[0].wsi_id)
    try:
        with open(path, "wb") as f:
            f.write(INDEX_MAGIC)
            f.write(struct.pack("<HII", INDEX_VERSION, index.nbits, len(entries)))
            for record, bunch in entries:
                for text in (
                    record.wsi_id,
                    record.patient_id,
                    record.organ,
                    record.primary_diagnosis,
                ):
                    raw = text.encode("utf-8")
                    f.write(struct.pack("<I", len(raw)))
                    f.write(raw)
                f.write(struct.pack("<I", len(bunch.barcodes)))
                for coord, code in zip(bunch.coords, bunch.barcodes):
                    f.write(struct.pack("<II", coord.x, coord.y))
                    f.write(np.ascontiguousarray(code.words, dtype="<u8").tobytes())
    except OSError as exc:
        raise FileFormatError(f"cannot write index to {path}: {exc}") from exc


class _Reader:
    def __init__(self, f, path):
        self.f = f
        self.path = path
        self.context = "header"

    def exact(self, n: int, what: str) -> bytes:
        data = self.f.read(n)
        if len(data) != n:
            offset = self.f.tell() - len(data)
            raise FileFormatError(
                f"{self.path}: truncated while reading {what} ({self.context}) at byte {offset}"
            )
        return data

    def string(self, what: str) -> str:
        (length,) = struct.unpack("<I", self.exact(4, f"{what} length"))
        raw = self.exact(length, what)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FileFormatError(f"{self.path}: {what} is not valid UTF-8: {exc}") from exc


def read_index(path) -> SlideIndex:
    """Decode a YXIX file; exact inverse of write_index."""
    path = Path(path)
    with open(path, "rb") as f:
        r = _Reader(f, path)
        magic = r.exact(4, "magic")
        if magic != INDEX_MAGIC:
            raise FileFormatError(f"{path}: bad magic {magic!r}, expected {INDEX_MAGIC!r}")
        version, nbits, n_slides = struct.unpack("<HII", r.exact(10, "header"))
        if version != INDEX_VERSION:
            raise FileFormatError(f"{path}: unsupported version {version}")
        if nbits < 1:
            raise FileFormatError(f"{path}: nbits must be >= 1, got {nbits}")
        if n_slides < 1:
            raise FileFormatError(f"{path}: empty index (slide count 0)")
        n_words = words_needed(nbits)
        index = SlideIndex(nbits=nbits)
        for ordinal in range(n_slides):
            r.context = f"slide {ordinal}"
            wsi_id = r.string("wsi_id")
            patient_id = r.string("patient_id")
            organ = r.string("organ")
            diagnosis = r.string("primary_diagnosis")
            (n_patches,) = struct.unpack("<I", r.exact(4, "patch count"))
            if n_patches < 1:
                raise FileFormatError(
                    f"{path}: slide {ordinal} ({wsi_id!r}) has patch count 0"
                )
            coords = []
            barcodes = []
            patch_bytes = 8 + 8 * n_words
            for p in range(n_patches):
                raw = r.exact(patch_bytes, f"patch {p}")
                x, y = struct.unpack_from("<II", raw)
                words = np.frombuffer(raw, dtype="<u8", count=n_words, offset=8)
                coords.append(PatchCoordinate(x, y, 1, 1))
                barcodes.append(Barcode(words.astype(np.uint64), nbits))
            record = SlideRecord(wsi_id, patient_id, organ, diagnosis)
            index.add(record, BunchOfBarcodes(wsi_id, tuple(barcodes), tuple(coords)))
        trailing = f.read(1)
        if trailing:
            raise FileFormatError(f"{path}: trailing bytes after {n_slides} slides")
    return index
