"""slideseek: zero-shot whole-slide image retrieval.

Pipeline: mosaic patch selection (two-stage k-means), patch embeddings,
binary barcoding, median-of-minimums Hamming matching, majority-vote
retrieval, and a leave-one-out macro-F1 evaluation harness.
"""

from .barcode import (
    Barcode,
    BunchOfBarcodes,
    barcode_from_embedding,
    bunch_from_embeddings,
    hamming,
)
from .embedder import (
    Embedding,
    EmbeddingStore,
    SlideVector,
    builtin_embed,
    load_embeddings,
    load_slide_vector,
    write_embeddings,
    write_slide_vector,
)
from .errors import (
    EmptySlideError,
    FileFormatError,
    ManifestError,
    SearchError,
    SlideSeekError,
)
from .evaluation import (
    ConfusionTable,
    EvalReport,
    aggregate_stats,
    leave_one_out,
    macro_f1,
    run_evaluation,
)
from .mosaic import (
    ArrayRaster,
    ImageRaster,
    Mosaic,
    RasterSource,
    RawRaster,
    TileDirectoryRaster,
    TilePatch,
    build_mosaic,
    color_features,
    kmeans,
    read_mosaic_csv,
    select_mosaic,
    tile_grid,
    write_mosaic_csv,
)
from .persistence import read_index, write_index
from .records import (
    DatasetManifest,
    EvalConfig,
    MosaicConfig,
    PatchCoordinate,
    SlideRecord,
    load_manifest,
    write_manifest,
)
from .search import (
    RetrievalResult,
    SlideIndex,
    build_index,
    majority_label,
    search,
    slide_vector_search,
    wsi_distance,
)
from .synth import ClassSpec, CohortSpec, generate_cohort, load_cohort_shapes

__version__ = "0.1.0"

__all__ = [
    "Barcode",
    "BunchOfBarcodes",
    "barcode_from_embedding",
    "bunch_from_embeddings",
    "hamming",
    "Embedding",
    "EmbeddingStore",
    "SlideVector",
    "builtin_embed",
    "load_embeddings",
    "load_slide_vector",
    "write_embeddings",
    "write_slide_vector",
    "EmptySlideError",
    "FileFormatError",
    "ManifestError",
    "SearchError",
    "SlideSeekError",
    "ConfusionTable",
    "EvalReport",
    "aggregate_stats",
    "leave_one_out",
    "macro_f1",
    "run_evaluation",
    "ArrayRaster",
    "ImageRaster",
    "Mosaic",
    "RasterSource",
    "RawRaster",
    "TileDirectoryRaster",
    "TilePatch",
    "build_mosaic",
    "color_features",
    "kmeans",
    "read_mosaic_csv",
    "select_mosaic",
    "tile_grid",
    "write_mosaic_csv",
    "read_index",
    "write_index",
    "DatasetManifest",
    "EvalConfig",
    "MosaicConfig",
    "PatchCoordinate",
    "SlideRecord",
    "load_manifest",
    "write_manifest",
    "RetrievalResult",
    "SlideIndex",
    "build_index",
    "majority_label",
    "search",
    "slide_vector_search",
    "wsi_distance",
    "ClassSpec",
    "CohortSpec",
    "generate_cohort",
    "load_cohort_shapes",
]
