"""Unicycle kinematics for a single robot and the stacked fleet.

A robot pose is (x, y, theta); a command is (v, omega). Discretization is
explicit Euler with a shared step dt. Headings are never wrapped: every
downstream use of theta is wrap-invariant, and unwrapped headings keep
multi-step rollouts smooth for gradient-based optimization.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "RobotState",
    "RobotInput",
    "FleetState",
    "FleetInput",
    "StateTrajectory",
    "step_unicycle",
    "step_fleet",
    "rollout",
]


@dataclass(frozen=True)
class RobotState:
    """Planar pose of one robot: position [m] and heading [rad, unbounded]."""

    x: float
    y: float
    theta: float


@dataclass(frozen=True)
class RobotInput:
    """Velocity command of one robot: translational [m/s] and angular [rad/s]."""

    v: float
    omega: float


def _as_locked(values, width, what):
    arr = np.array(values, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != width or arr.shape[0] < 1:
        raise ValueError(f"{what} must have shape (n, {width}), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FleetState:
    """Stacked poses of the fleet, shape (n, 3) with columns x, y, theta.

    The array is copied on construction and locked read-only; agent index 0
    of the array is agent 1 of the fleet.
    """

    poses: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "poses", _as_locked(self.poses, 3, "poses"))

    @classmethod
    def from_agents(cls, agents: Sequence[RobotState]) -> "FleetState":
        return cls(np.array([[a.x, a.y, a.theta] for a in agents], dtype=float))

    @property
    def n_agents(self) -> int:
        return self.poses.shape[0]

    @property
    def agents(self) -> tuple[RobotState, ...]:
        return tuple(RobotState(*row) for row in self.poses)

    @property
    def positions(self) -> np.ndarray:
        """(n, 2) view of the x, y columns."""
        return self.poses[:, :2]


@dataclass(frozen=True, eq=False)
class FleetInput:
    """Stacked commands of the fleet, shape (n, 2) with columns v, omega.

    Finiteness is enforced here; box membership is checked against a
    ConstraintSet where it matters (attacked commands may exceed the box).
    """

    commands: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "commands", _as_locked(self.commands, 2, "commands"))

    @classmethod
    def from_agents(cls, agents: Sequence[RobotInput]) -> "FleetInput":
        return cls(np.array([[a.v, a.omega] for a in agents], dtype=float))

    @classmethod
    def zero(cls, n_agents: int) -> "FleetInput":
        return cls(np.zeros((n_agents, 2)))

    @property
    def n_agents(self) -> int:
        return self.commands.shape[0]

    @property
    def agents(self) -> tuple[RobotInput, ...]:
        return tuple(RobotInput(*row) for row in self.commands)


@dataclass(frozen=True, eq=False)
class StateTrajectory:
    """Sequence of N+1 fleet states produced by an N-step rollout."""

    states: tuple[FleetState, ...]
    dt: float

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        if len(self.states) < 2:
            raise ValueError("a trajectory needs at least 2 states")
        if not (self.dt > 0):
            raise ValueError("dt must be positive")

    def __len__(self) -> int:
        return len(self.states)

    @property
    def array(self) -> np.ndarray:
        """(N+1, n, 3) stacked pose array."""
        return np.stack([s.poses for s in self.states])


def step_poses(poses: np.ndarray, commands: np.ndarray, dt: float) -> np.ndarray:
    """Euler step on raw arrays; no validation. Hot path for the optimizer."""
    c = np.cos(poses[:, 2])
    s = np.sin(poses[:, 2])
    out = np.empty_like(poses)
    out[:, 0] = poses[:, 0] + dt * commands[:, 0] * c
    out[:, 1] = poses[:, 1] + dt * commands[:, 0] * s
    out[:, 2] = poses[:, 2] + dt * commands[:, 1]
    return out


def rollout_poses(x0_poses: np.ndarray, z: np.ndarray, dt: float) -> np.ndarray:
    """Roll raw arrays forward: (n, 3) x0 and (N, n, 2) inputs -> (N+1, n, 3)."""
    n_steps = z.shape[0]
    states = np.empty((n_steps + 1,) + x0_poses.shape)
    states[0] = x0_poses
    for k in range(n_steps):
        states[k + 1] = step_poses(states[k], z[k], dt)
    return states


def _check_dt(dt):
    if not (np.isfinite(dt) and dt > 0):
        raise ValueError(f"dt must be positive and finite, got {dt}")


def step_unicycle(s: RobotState, u: RobotInput, dt: float) -> RobotState:
    """One Euler step of a single unicycle. No angle wrapping."""
    _check_dt(dt)
    vals = (s.x, s.y, s.theta, u.v, u.omega)
    if not all(np.isfinite(v) for v in vals):
        raise ValueError(f"state/input must be finite, got {vals}")
    pose = step_poses(
        np.array([[s.x, s.y, s.theta]], dtype=float),
        np.array([[u.v, u.omega]], dtype=float),
        dt,
    )[0]
    return RobotState(float(pose[0]), float(pose[1]), float(pose[2]))


def step_fleet(X: FleetState, U: FleetInput, dt: float) -> FleetState:
    """One Euler step of the whole fleet; agents do not interact in dynamics."""
    _check_dt(dt)
    if X.n_agents != U.n_agents:
        raise ValueError(
            f"fleet size mismatch: {X.n_agents} states vs {U.n_agents} inputs"
        )
    return FleetState(step_poses(X.poses, U.commands, dt))


def rollout(X0: FleetState, U_seq: Sequence[FleetInput], dt: float) -> StateTrajectory:
    """Roll the fleet forward through a sequence of inputs.

    Returns a trajectory of length len(U_seq) + 1 with states[0] = X0.
    """
    if len(U_seq) < 1:
        raise ValueError("rollout needs at least one input")
    states = [X0]
    for U in U_seq:
        states.append(step_fleet(states[-1], U, dt))
    return StateTrajectory(tuple(states), dt)
