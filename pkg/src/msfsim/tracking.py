"""Networked tracking controller: circular-formation reference plus MPC.

The reference places agent i (1-based) on a circle of radius r0 rotating
at rate w0, with equal phase spacing across the fleet. The controller is
a receding-horizon tracker over the same unicycle rollout the plant uses:
stage costs are squared position error, a small input effort term, and a
soft separation hinge, subject to the input box. The cost weights are
tuning choices of this implementation; only the reference shape, horizon
style, and input boxes are externally prescribed.

The controller consumes the received (possibly attacked) fleet state and
never the true plant state; safety is not its job.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constraints import ConstraintSet
from .dynamics import FleetInput, FleetState
from .optimizer import (
    FormationTrackingCost,
    NlpProblem,
    SoftSeparationCost,
    SolverConfig,
    solve,
)

__all__ = [
    "ReferenceSpec",
    "TrackerConfig",
    "reference",
    "reference_positions",
    "build_tracking_problem",
    "compute_command",
    "TrackingController",
]


@dataclass(frozen=True)
class ReferenceSpec:
    """Circular formation: radius r0 [m], angular rate w0 [rad/s], fleet size."""

    r0: float = 1.5
    w0: float = 0.4
    fleet_size: int = 20

    def __post_init__(self):
        if not self.r0 > 0:
            raise ValueError("r0 must be positive")
        if self.fleet_size < 1:
            raise ValueError("fleet_size must be >= 1")


@dataclass(frozen=True)
class TrackerConfig:
    """Receding-horizon tracker settings; dt=None inherits the scenario step."""

    horizon: int = 20
    position_weight: float = 1.0
    input_weight: float = 1e-3
    separation_weight: float = 10.0
    separation_margin: float = 0.3
    dt: float | None = None

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if min(self.position_weight, self.input_weight, self.separation_weight) < 0:
            raise ValueError("weights must be >= 0")


def reference(t: float, i: int, spec: ReferenceSpec) -> tuple[float, float]:
    """Reference position of agent i (1-based) at time t."""
    if not 1 <= i <= spec.fleet_size:
        raise ValueError(f"agent index {i} outside 1..{spec.fleet_size}")
    phase = spec.w0 * t + 2.0 * np.pi * (i - 1) / spec.fleet_size
    return (spec.r0 * np.sin(phase), spec.r0 * np.cos(phase))


def reference_positions(t, spec: ReferenceSpec) -> np.ndarray:
    """Reference positions of the whole fleet; t scalar -> (n, 2),
    t array of shape (k,) -> (k, n, 2)."""
    offsets = 2.0 * np.pi * np.arange(spec.fleet_size) / spec.fleet_size
    phase = spec.w0 * np.asarray(t, dtype=float)[..., None] + offsets
    return spec.r0 * np.stack([np.sin(phase), np.cos(phase)], axis=-1)


def build_tracking_problem(
    x_a: FleetState,
    t: float,
    cfg: TrackerConfig,
    spec: ReferenceSpec,
    cs: ConstraintSet,
    dt: float,
) -> NlpProblem:
    n = x_a.n_agents
    H = cfg.horizon
    times = t + dt * np.arange(1, H + 1)
    refs = reference_positions(times, spec)

    stage_costs = [FormationTrackingCost(refs, cfg.position_weight)]
    if n >= 2 and cfg.separation_weight > 0:
        stage_costs.append(
            SoftSeparationCost(cfg.separation_margin, cfg.separation_weight, n)
        )
    lb = np.tile([cs.v_bounds[0], cs.omega_bounds[0]], (H, n, 1))
    ub = np.tile([cs.v_bounds[1], cs.omega_bounds[1]], (H, n, 1))
    return NlpProblem(
        x0=x_a.poses,
        horizon=H,
        dt=dt,
        lb=lb,
        ub=ub,
        target=np.zeros((H, n, 2)),
        weights=np.full((H, n, 2), cfg.input_weight),
        stage_costs=stage_costs,
    )


def compute_command(
    x_a: FleetState,
    t: float,
    cfg: TrackerConfig,
    spec: ReferenceSpec,
    cs: ConstraintSet,
    dt: float | None = None,
    solver: SolverConfig | None = None,
    warm_start: np.ndarray | None = None,
) -> FleetInput:
    """One tracking command from the received state; box-safe by construction.

    An iteration-limited solve still returns its best iterate: tracking
    quality may degrade but the command is always produced.
    """
    step = cfg.dt if cfg.dt is not None else dt
    if step is None:
        raise ValueError("dt must come from cfg.dt or the dt argument")
    problem = build_tracking_problem(x_a, t, cfg, spec, cs, step)
    result = solve(problem, warm_start=warm_start, cfg=solver or SolverConfig())
    return FleetInput(result.z[0])


class TrackingController:
    """Stateless tracker except for the warm-start cache between calls."""

    def __init__(
        self,
        cfg: TrackerConfig,
        spec: ReferenceSpec,
        cs: ConstraintSet,
        dt: float,
        solver: SolverConfig | None = None,
    ):
        self.cfg = cfg
        self.spec = spec
        self.cs = cs
        self.dt = cfg.dt if cfg.dt is not None else dt
        self.solver = solver or SolverConfig()
        self._warm: np.ndarray | None = None

    def command(self, x_a: FleetState, t: float) -> FleetInput:
        problem = build_tracking_problem(
            x_a, t, self.cfg, self.spec, self.cs, self.dt
        )
        result = solve(problem, warm_start=self._warm, cfg=self.solver)
        # shift for the next call, repeating the final entry
        self._warm = np.concatenate([result.z[1:], result.z[-1:]])
        return FleetInput(result.z[0])
