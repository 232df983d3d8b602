"""Linear off-policy TD prediction with gap-separated A-transpose TD (A⊤tTD).

Exact oracle quantities, step-size and gap schedules, the learner zoo, the
benchmark instances and a reproducible sweep harness.
"""

from tdlab.config import ExperimentConfig, load_config, parse_config
from tdlab.envs import ProblemInstance, make_baird, make_boyan, make_env, make_random
from tdlab.errors import (
    AssumptionViolation,
    ConfigError,
    CoverageViolation,
    GenerationError,
    TdlabError,
    TdlabIOError,
    WindowError,
)
from tdlab.harness import gap_study, run_cell, sweep
from tdlab.mdp import FeatureMap, Mdp, Policy, sample_step, sample_trajectory, stationary_distribution
from tdlab.oracle import OracleQuantities, check_assumptions, compute_oracle, neu, rmspbe
from tdlab.schedules import GapFn, LrSchedule, check_gap_assumption, skeleton

__version__ = "0.1.0"

__all__ = [
    "AssumptionViolation", "ConfigError", "CoverageViolation", "ExperimentConfig", "FeatureMap",
    "GapFn", "GenerationError", "LrSchedule", "Mdp", "OracleQuantities", "Policy", "ProblemInstance",
    "TdlabError", "TdlabIOError", "WindowError", "check_assumptions", "check_gap_assumption",
    "compute_oracle", "gap_study", "load_config", "make_baird", "make_boyan", "make_env",
    "make_random", "neu", "parse_config", "rmspbe", "run_cell", "sample_step", "sample_trajectory",
    "skeleton", "stationary_distribution", "sweep",
]
