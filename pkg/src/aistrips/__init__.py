"""aistrips: semantic trips, context enrichment, and narratives from AIS data."""

from .annotate import AnnotatedPoint, Annotation, AnnotationParams, annotate_stream
from .core import AisPoint, CompassDirection, ContextBundle, haversine_nm
from .enrich import GridSet, LayerStore, enrich_trip, load_grids, load_layers
from .ingest import ColumnMap, RejectionReason, load_points
from .narrate import (
    JudgeVerdict,
    ModelConfig,
    TripNarrative,
    deviation_stats,
    generate_narrative,
    judge_narrative,
)
from .segment import (
    Episode,
    EpisodeType,
    SegmentationParams,
    Trip,
    segment_vessel,
)

__version__ = "0.1.0"

__all__ = [
    "AisPoint",
    "AnnotatedPoint",
    "Annotation",
    "AnnotationParams",
    "ColumnMap",
    "CompassDirection",
    "ContextBundle",
    "Episode",
    "EpisodeType",
    "GridSet",
    "JudgeVerdict",
    "LayerStore",
    "ModelConfig",
    "RejectionReason",
    "SegmentationParams",
    "Trip",
    "TripNarrative",
    "annotate_stream",
    "deviation_stats",
    "enrich_trip",
    "generate_narrative",
    "haversine_nm",
    "judge_narrative",
    "load_grids",
    "load_layers",
    "load_points",
    "segment_vessel",
    "__version__",
]
