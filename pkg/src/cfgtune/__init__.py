"""Crash-aware black-box autotuner for large typed configuration spaces."""

from .space import (
    ConfigSpace,
    EncodingLayout,
    JobSpec,
    ParameterDef,
    SpaceError,
    JobSyntaxError,
    config_key,
    infer_space,
    needs_rebuild,
    parse_job,
    sample_batch,
    sample_uniform,
)
from .harness import TrialResult, SyntheticLandscape, CommandTarget, objective_value
from .deeptune import DeepTuneModel, build_model
from .strategies import make_strategy, STRATEGY_NAMES
from .orchestrator import SearchHistory, SessionReport, run_session

__version__ = "0.1.0"

__all__ = [
    "ConfigSpace",
    "EncodingLayout",
    "JobSpec",
    "ParameterDef",
    "SpaceError",
    "JobSyntaxError",
    "config_key",
    "infer_space",
    "needs_rebuild",
    "parse_job",
    "sample_batch",
    "sample_uniform",
    "TrialResult",
    "SyntheticLandscape",
    "CommandTarget",
    "objective_value",
    "DeepTuneModel",
    "build_model",
    "make_strategy",
    "STRATEGY_NAMES",
    "SearchHistory",
    "SessionReport",
    "run_session",
    "__version__",
]
