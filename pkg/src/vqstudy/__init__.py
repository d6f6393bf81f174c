"""vqstudy: subjective video-quality study platform and benchmark toolkit."""

__version__ = "0.1.0"

from .domain import (
    FrameFeatures,
    MosEntry,
    MosTable,
    Platform,
    QualityLevel,
    RatingEvent,
    ScoreMatrix,
    SessionKind,
    SubjectProfile,
    VideoRecord,
    quantize_score,
)
from .scoring import ScoringConfig, ScoredStudy, mos_to_level, run_pipeline

__all__ = [
    "__version__",
    "FrameFeatures",
    "MosEntry",
    "MosTable",
    "Platform",
    "QualityLevel",
    "RatingEvent",
    "ScoreMatrix",
    "ScoringConfig",
    "ScoredStudy",
    "SessionKind",
    "SubjectProfile",
    "VideoRecord",
    "mos_to_level",
    "quantize_score",
    "run_pipeline",
]
