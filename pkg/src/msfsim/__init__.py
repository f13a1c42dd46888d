"""Predictive safety filter and attack simulation for unicycle fleets."""

from .adversary import Adversary, AttackSpec, CovertState
from .constraints import AdmissibilityReport, ConstraintSet, check_admissible, in_terminal_set
from .detector import DetectorState, detect
from .dynamics import (
    FleetInput,
    FleetState,
    RobotInput,
    RobotState,
    StateTrajectory,
    rollout,
    step_fleet,
    step_unicycle,
)
from .errors import (
    ConfigError,
    InitialInfeasibilityError,
    InvalidProblemError,
    SimulationAbort,
)
from .harness import (
    MetricsSummary,
    ScenarioConfig,
    SimLog,
    export,
    load_config,
    load_log,
    run_scenario,
    summarize,
)
from .optimizer import NlpProblem, SolveResult, SolverConfig, gradient_check, solve
from .safety_filter import (
    BackupTrajectory,
    FilterConfig,
    FilterOutcome,
    SafetyFilter,
    filter_step,
    shift_backup,
    validate_backup,
)
from .tracking import ReferenceSpec, TrackerConfig, TrackingController, compute_command, reference

__version__ = "0.1.0"
