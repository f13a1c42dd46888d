"""Predictive safety filter: nearest safe command plus backup bookkeeping.

Each step the filter receives the true fleet state and a (possibly
hijacked) command u_a and returns a command that is certified safe by an
N-step backup trajectory ending in the terminal rest set:

1. Pass-through: complete u_a with the tail of the shifted previous backup
   (zero input appended). If that candidate satisfies every constraint,
   u_a is forwarded bit-for-bit, so an attack-free steady state never sees
   filter-induced deviations.
2. Otherwise solve the least-deviation problem whose first input chases
   u_a subject to separation/wall margins at every predicted step, input
   boxes, and zero terminal translational velocity.
3. Otherwise fall back to the shifted previous backup, which remains
   feasible whenever the previous step was (recursive feasibility).

Margins inside the solved problem are padded by margin_pad so the solver
feasibility tolerance can never eat into the configured safety margins.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .constraints import (
    ConstraintSet,
    inputs_in_box,
    min_pairwise_distance,
    min_wall_clearance,
)
from .dynamics import FleetInput, FleetState, StateTrajectory, rollout_poses
from .errors import InitialInfeasibilityError
from .optimizer import (
    NlpProblem,
    PairwiseMarginBlock,
    SolveResult,
    SolverConfig,
    TerminalRestBlock,
    WallMarginBlock,
    solve,
)

__all__ = [
    "PASS_THROUGH",
    "MODIFIED",
    "FALLBACK",
    "FilterConfig",
    "BackupTrajectory",
    "FilterOutcome",
    "filter_step",
    "shift_backup",
    "validate_backup",
    "build_filter_problem",
    "intervention_magnitude",
    "SafetyFilter",
]

PASS_THROUGH = "pass-through"
MODIFIED = "modified"
FALLBACK = "fallback"

# Penalty magnitude carried between consecutive solves. Warm multipliers do
# the heavy lifting; re-feeding an aggressively grown penalty would wreck
# the inner minimizer's conditioning.
_PENALTY_WARM_CAP = 1e4


@dataclass(frozen=True)
class FilterConfig:
    """Horizon, margins, and solver settings of the safety filter."""

    constraints: ConstraintSet
    horizon: int = 3
    dt: float = 0.02
    solver: SolverConfig = field(default_factory=SolverConfig)
    pass_tol: float = 1e-9
    margin_pad: float = 1e-6
    deviation_reg: float = 1e-6
    terminal_equality: str = "box"  # "box" pins last v via bounds, "residual" via h(z)=0

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.terminal_equality not in ("box", "residual"):
            raise ValueError(f"unknown terminal_equality {self.terminal_equality!r}")
        if self.margin_pad < 0 or self.deviation_reg < 0 or self.pass_tol < 0:
            raise ValueError("pads, regularization and pass_tol must be >= 0")


@dataclass(frozen=True, eq=False)
class BackupTrajectory:
    """Feasible N-step input/state certificate ending in the rest set."""

    inputs: np.ndarray  # (N, n, 2)
    states: StateTrajectory  # N+1 entries
    certified_at: int

    def __post_init__(self):
        arr = np.array(self.inputs, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "inputs", arr)

    @property
    def horizon(self) -> int:
        return self.inputs.shape[0]

    @property
    def input_sequence(self) -> tuple[FleetInput, ...]:
        return tuple(FleetInput(step) for step in self.inputs)


@dataclass(frozen=True, eq=False)
class FilterOutcome:
    """Filtered command, mode, normalized correction, and the new backup."""

    u_s: FleetInput
    mode: str
    intervention: float
    backup: BackupTrajectory
    solve_result: SolveResult | None = None


def intervention_magnitude(u_a: FleetInput, u_s: FleetInput, cs: ConstraintSet) -> float:
    """Normalized command correction ||u_a - u_s|| / (2 ||u_max||).

    u_max stacks the per-channel magnitude bounds for every agent, so the
    metric is dimensionless and bounded by 1 for in-box signals.
    """
    diff = u_a.commands - u_s.commands
    v_mag = max(abs(cs.v_bounds[0]), abs(cs.v_bounds[1]))
    w_mag = max(abs(cs.omega_bounds[0]), abs(cs.omega_bounds[1]))
    u_max = np.tile([v_mag, w_mag], u_a.n_agents)
    return float(np.linalg.norm(diff.ravel()) / (2.0 * np.linalg.norm(u_max)))


def _trajectory_from_array(states_arr: np.ndarray, dt: float) -> StateTrajectory:
    return StateTrajectory(tuple(FleetState(s) for s in states_arr), dt)


def _candidate_admissible(states_arr, inputs, cs: ConstraintSet) -> bool:
    """Exact (tolerance-free) check of box, margin, and terminal conditions.

    Margins are required at every state of the prediction including the
    measured one: a pass-through certificate must not start from a state
    already violating the admissible set.
    """
    if not inputs_in_box(inputs.reshape(-1, 2), cs):
        return False
    for k in range(states_arr.shape[0]):
        pos = states_arr[k, :, :2]
        if min_pairwise_distance(pos) < cs.delta_a:
            return False
        if min_wall_clearance(pos, cs.arena) < cs.delta_w:
            return False
    return bool(np.all(inputs[-1, :, 0] == 0.0))


def build_filter_problem(x: FleetState, u_a: FleetInput, cfg: FilterConfig) -> NlpProblem:
    """Least-deviation problem: first input chases u_a, margins padded.

    Constraints cover predicted steps 1..N (step 0 is the fixed measured
    state, so residuals there would be decision-independent constants).
    """
    cs = cfg.constraints
    n = x.n_agents
    N = cfg.horizon
    pad = cfg.margin_pad

    lb = np.tile([cs.v_bounds[0], cs.omega_bounds[0]], (N, n, 1))
    ub = np.tile([cs.v_bounds[1], cs.omega_bounds[1]], (N, n, 1))
    blocks = []
    for k in range(1, N + 1):
        if n >= 2:
            blocks.append(PairwiseMarginBlock(k, cs.delta_a + pad, n))
        blocks.append(WallMarginBlock(k, cs.arena, cs.delta_w + pad, n))
    if cfg.terminal_equality == "box":
        lb[N - 1, :, 0] = 0.0
        ub[N - 1, :, 0] = 0.0
    else:
        blocks.append(TerminalRestBlock(n))

    target = np.zeros((N, n, 2))
    target[0] = u_a.commands
    weights = np.full((N, n, 2), cfg.deviation_reg)
    weights[0] = 1.0
    return NlpProblem(
        x0=x.poses,
        horizon=N,
        dt=cfg.dt,
        lb=lb,
        ub=ub,
        target=target,
        weights=weights,
        blocks=blocks,
    )


def shift_backup(prev: BackupTrajectory) -> BackupTrajectory:
    """Drop the applied first input, append the zero terminal policy.

    States are re-rolled from prev.states[1]; feasibility of the result is
    exactly the recursive-feasibility argument: the surviving states were
    already certified and the appended zero input holds the terminal rest
    state fixed.
    """
    dt = prev.states.dt
    n = prev.inputs.shape[1]
    inputs = np.concatenate([prev.inputs[1:], np.zeros((1, n, 2))])
    states_arr = rollout_poses(prev.states.states[1].poses, inputs, dt)
    return BackupTrajectory(
        inputs=inputs,
        states=_trajectory_from_array(states_arr, dt),
        certified_at=prev.certified_at + 1,
    )


def validate_backup(b: BackupTrajectory, cs: ConstraintSet) -> float:
    """Max violation of the backup invariants (0 means all hold exactly).

    Checks state consistency with a fresh rollout, input boxes, per-step
    margins, and terminal rest membership; used by tests and the
    acceptance suite to re-certify logged backups independently.
    """
    states_arr = b.states.array
    rerolled = rollout_poses(states_arr[0], b.inputs, b.states.dt)
    worst = float(np.max(np.abs(rerolled - states_arr), initial=0.0))

    flat = b.inputs.reshape(-1, 2)
    worst = max(worst, float(np.max(cs.v_bounds[0] - flat[:, 0], initial=0.0)))
    worst = max(worst, float(np.max(flat[:, 0] - cs.v_bounds[1], initial=0.0)))
    worst = max(worst, float(np.max(cs.omega_bounds[0] - flat[:, 1], initial=0.0)))
    worst = max(worst, float(np.max(flat[:, 1] - cs.omega_bounds[1], initial=0.0)))

    for k in range(states_arr.shape[0]):
        pos = states_arr[k, :, :2]
        if pos.shape[0] >= 2:
            worst = max(worst, cs.delta_a - min_pairwise_distance(pos))
        worst = max(worst, cs.delta_w - min_wall_clearance(pos, cs.arena))
    worst = max(worst, float(np.max(np.abs(b.inputs[-1, :, 0]), initial=0.0)))
    return max(worst, 0.0)


def filter_step(
    x: FleetState,
    u_a: FleetInput,
    prev: BackupTrajectory | None,
    cfg: FilterConfig,
    warm_duals=None,
    warm_penalty: float | None = None,
) -> FilterOutcome:
    """One filter evaluation; see the module docstring for the three modes.

    warm_duals/warm_penalty optionally carry the dual state of the
    previous step's solve (the problems are structurally identical, so
    multiplier warm starts cut the outer loop down to a step or two).

    Raises InitialInfeasibilityError when there is no previous backup and
    no feasible backup exists from x (initial feasibility violated).
    """
    cs = cfg.constraints
    n = x.n_agents
    N = cfg.horizon
    if u_a.n_agents != n:
        raise ValueError("command size does not match fleet size")

    if prev is not None:
        shifted = shift_backup(prev)
        candidate = shifted.inputs.copy()
        step_index = prev.certified_at + 1
    else:
        shifted = None
        candidate = np.zeros((N, n, 2))
        step_index = 0
    candidate[0] = u_a.commands

    cand_states = rollout_poses(x.poses, candidate, cfg.dt)
    if _candidate_admissible(cand_states, candidate, cs):
        backup = BackupTrajectory(
            inputs=candidate,
            states=_trajectory_from_array(cand_states, cfg.dt),
            certified_at=step_index,
        )
        return FilterOutcome(
            u_s=u_a,
            mode=PASS_THROUGH,
            intervention=intervention_magnitude(u_a, u_a, cs),
            backup=backup,
        )

    problem = build_filter_problem(x, u_a, cfg)
    warm = shifted.inputs if shifted is not None else np.zeros((N, n, 2))
    result = solve(
        problem,
        warm_start=warm,
        cfg=cfg.solver,
        warm_multipliers=warm_duals,
        warm_penalty=warm_penalty,
    )

    if result.feasible:
        states_arr = rollout_poses(x.poses, result.z, cfg.dt)
        backup = BackupTrajectory(
            inputs=result.z,
            states=_trajectory_from_array(states_arr, cfg.dt),
            certified_at=step_index,
        )
        u_s = FleetInput(result.z[0])
        return FilterOutcome(
            u_s=u_s,
            mode=MODIFIED,
            intervention=intervention_magnitude(u_a, u_s, cs),
            backup=backup,
            solve_result=result,
        )

    if shifted is None:
        raise InitialInfeasibilityError(
            "no feasible backup from the initial state "
            f"(solver status {result.status}, max violation "
            f"{result.max_violation:.3e})"
        )
    u_s = FleetInput(shifted.inputs[0])
    return FilterOutcome(
        u_s=u_s,
        mode=FALLBACK,
        intervention=intervention_magnitude(u_a, u_s, cs),
        backup=shifted,
        solve_result=result,
    )


class SafetyFilter:
    """Stateful wrapper owning the backup trajectory across a scenario.

    Also carries the dual state of the last solve between steps so
    consecutive interventions converge in very few outer iterations.
    """

    def __init__(self, cfg: FilterConfig):
        self.cfg = cfg
        self.backup: BackupTrajectory | None = None
        self._duals = None
        self._penalty: float | None = None

    def step(self, x: FleetState, u_a: FleetInput) -> FilterOutcome:
        outcome = filter_step(
            x, u_a, self.backup, self.cfg, self._duals, self._penalty
        )
        self.backup = outcome.backup
        if outcome.solve_result is not None:
            self._duals = outcome.solve_result.multipliers
            self._penalty = min(outcome.solve_result.penalty, _PENALTY_WARM_CAP)
        return outcome
