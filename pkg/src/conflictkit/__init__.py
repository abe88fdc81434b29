"""Toolkit for synthesizing and evaluating modality-conflict VQA datasets."""

from .scene_graph import (
    ConflictType,
    ObjectEntity,
    Relationship,
    SceneGraph,
    TextAnalysis,
    check_attribute_conflict,
    check_object_conflict,
    check_relationship_conflict,
    classify_conflict,
    load_scene_graphs,
    normalize_name,
)
from .synthesis import (
    BaseQuestion,
    ConflictTriple,
    KeyComponents,
    PipelineConfig,
    ReviewStatus,
    SubstitutionPlan,
    run_pipeline,
)
from .textmetrics import RougeScore, lcs_length, rouge_l_f, tokenize

__version__ = "0.1.0"

__all__ = [
    "ConflictType",
    "ObjectEntity",
    "Relationship",
    "SceneGraph",
    "TextAnalysis",
    "check_object_conflict",
    "check_attribute_conflict",
    "check_relationship_conflict",
    "classify_conflict",
    "load_scene_graphs",
    "normalize_name",
    "BaseQuestion",
    "ConflictTriple",
    "KeyComponents",
    "PipelineConfig",
    "ReviewStatus",
    "SubstitutionPlan",
    "run_pipeline",
    "RougeScore",
    "rouge_l_f",
    "lcs_length",
    "tokenize",
    "__version__",
]
