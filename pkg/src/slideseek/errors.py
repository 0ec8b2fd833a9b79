"""Exception types shared across the pipeline.

The CLI maps these onto exit codes: usage problems exit 1, data/format
problems exit 2, partial batch failures exit 3.
"""


class SlideSeekError(Exception):
    """Base class for all slideseek errors."""


class ManifestError(SlideSeekError):
    """Manifest CSV cannot be parsed or violates an invariant."""


class FileFormatError(SlideSeekError):
    """A binary file (YXEB/YXSV/YXIX) has a bad magic, version, length, or payload."""


class EmptySlideError(SlideSeekError):
    """A slide has no tissue tiles, or is smaller than one patch."""


class SearchError(SlideSeekError):
    """A query cannot be answered: empty candidate pool, length mismatch, missing table."""
