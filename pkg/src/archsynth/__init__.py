"""archsynth: dataset-profile-driven synthesis of detector architectures.

The pipeline has three stages: profile a detection dataset into explicit
meta-features, run an architect agent that maps those features to module
choices from a structured knowledge base and assembles a blueprint, then
statically validate and compile the blueprint to a framework YAML or a
code-generation context bundle.
"""

from .errors import ToolError
from .kb import KnowledgeBase, load_kb, load_seed_kb
from .nadl import NadlDocument, parse_nadl, serialize_nadl
from .profiler import DatasetProfile, compute_profile
from .validator import ValidationReport, validate

__version__ = "0.1.0"

__all__ = [
    "ToolError",
    "KnowledgeBase",
    "load_kb",
    "load_seed_kb",
    "NadlDocument",
    "parse_nadl",
    "serialize_nadl",
    "DatasetProfile",
    "compute_profile",
    "ValidationReport",
    "validate",
    "__version__",
]
