"""Neural-network surrogate blackbox optimization without uncertainty estimates."""

from .core import Bounds, Dataset, RunRecord, SnboConfig, TrainerConfig, TrustState, load_config
from .optimizer import RunResult, run_random_search, run_snbo, select_infill
from .problems import ExternalObjective, Objective, make_problem

__all__ = [
    "Bounds",
    "Dataset",
    "ExternalObjective",
    "Objective",
    "RunRecord",
    "RunResult",
    "SnboConfig",
    "TrainerConfig",
    "TrustState",
    "load_config",
    "make_problem",
    "run_random_search",
    "run_snbo",
    "select_infill",
]
