"""Learning-based reheat control for fleets of domestic hot-water vessels."""

from .config import ExperimentConfig, load_config
from .control import PlannerConfig, RbcConfig, plan, rbc_action
from .exploration import ExplorationPolicy, StateBinning, VisitCounts, choose_action, coverage
from .harness import MetricsReport, derive_seed, run_experiment, run_strategy, write_report
from .model_learning import KnowledgeConfig, TransitionDataset, evaluate_mae, fit, predict
from .occupants import HouseholdProfile, generate_draws, make_profile
from .sensing import Observation, SensorConfig, observe
from .vessel import StepInput, VesselParams, VesselState, step

__version__ = "0.1.0"

__all__ = [
    "ExperimentConfig", "load_config", "PlannerConfig", "RbcConfig", "plan", "rbc_action",
    "ExplorationPolicy", "StateBinning", "VisitCounts", "choose_action", "coverage",
    "MetricsReport", "derive_seed", "run_experiment", "run_strategy", "write_report",
    "KnowledgeConfig", "TransitionDataset", "evaluate_mae", "fit", "predict",
    "HouseholdProfile", "generate_draws", "make_profile", "Observation", "SensorConfig", "observe",
    "StepInput", "VesselParams", "VesselState", "step",
]
