"""Admissible-set geometry: pairwise separation, wall clearance, input boxes.

The arena is an axis-aligned box; wall clearance is the perpendicular
distance to each of the four wall lines (negative when outside). The
terminal rest set used by the safety filter contains fleet configurations
that keep all margins and have zero translational velocity, which makes
them invariant under the zero input.

Agent indices in reports are 1-based, wall indices are 1..4 in the order
(x - x_min, x_max - x, y - y_min, y_max - y).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import FleetInput, FleetState

__all__ = [
    "ConstraintSet",
    "AdmissibilityReport",
    "pairwise_distances",
    "wall_clearances",
    "check_admissible",
    "in_terminal_set",
]


@dataclass(frozen=True)
class ConstraintSet:
    """Safety margins, input boxes, and the arena.

    delta_a / delta_w are the minimum inter-agent distance and wall
    clearance [m]; arena is (x_min, x_max, y_min, y_max).
    """

    delta_a: float = 0.2
    delta_w: float = 0.2
    v_bounds: tuple[float, float] = (-2.0, 2.0)
    omega_bounds: tuple[float, float] = (-2.0, 2.0)
    arena: tuple[float, float, float, float] = (-2.0, 2.0, -2.0, 2.0)

    def __post_init__(self):
        if not (self.delta_a > 0 and self.delta_w > 0):
            raise ValueError("delta_a and delta_w must be positive")
        if not (self.v_bounds[0] < self.v_bounds[1]):
            raise ValueError(f"bad v_bounds {self.v_bounds}")
        if not (self.omega_bounds[0] < self.omega_bounds[1]):
            raise ValueError(f"bad omega_bounds {self.omega_bounds}")
        x_min, x_max, y_min, y_max = self.arena
        if not (x_min < x_max and y_min < y_max):
            raise ValueError(f"degenerate arena {self.arena}")
        if min(x_max - x_min, y_max - y_min) < 2 * self.delta_w:
            raise ValueError("arena too narrow for any point with wall clearance delta_w")


@dataclass(frozen=True)
class AdmissibilityReport:
    """Diagnostic result of an admissibility check.

    state_ok holds iff min_pairwise >= delta_a and min_wall >= delta_w;
    violating_pairs lists (i, j, distance) for pairs below delta_a, 1-based.
    """

    min_pairwise: float
    min_wall: float
    input_ok: bool
    state_ok: bool
    violating_pairs: tuple[tuple[int, int, float], ...] = field(default_factory=tuple)


def pair_indices(n_agents: int) -> tuple[np.ndarray, np.ndarray]:
    """Upper-triangle index pair arrays (i < j), 0-based."""
    return np.triu_indices(n_agents, 1)


def pairwise_distance_values(positions: np.ndarray) -> np.ndarray:
    """Distances for all i < j pairs of an (n, 2) position array."""
    iu, ju = pair_indices(positions.shape[0])
    diff = positions[iu] - positions[ju]
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def min_pairwise_distance(positions: np.ndarray) -> float:
    """Smallest inter-agent distance; +inf for a single agent."""
    if positions.shape[0] < 2:
        return math.inf
    return float(pairwise_distance_values(positions).min())


def wall_clearance_matrix(positions: np.ndarray, arena) -> np.ndarray:
    """(n, 4) perpendicular clearances to the four wall lines."""
    x_min, x_max, y_min, y_max = arena
    px, py = positions[:, 0], positions[:, 1]
    return np.stack([px - x_min, x_max - px, py - y_min, y_max - py], axis=1)


def min_wall_clearance(positions: np.ndarray, arena) -> float:
    return float(wall_clearance_matrix(positions, arena).min())


def inputs_in_box(commands: np.ndarray, c: ConstraintSet) -> bool:
    """Non-strict box membership of every (v, omega) command."""
    v, w = commands[:, 0], commands[:, 1]
    return bool(
        np.all(v >= c.v_bounds[0])
        and np.all(v <= c.v_bounds[1])
        and np.all(w >= c.omega_bounds[0])
        and np.all(w <= c.omega_bounds[1])
    )


def pairwise_distances(X: FleetState) -> list[tuple[int, int, float]]:
    """All (i, j, distance) tuples for i < j, agent ids 1-based."""
    iu, ju = pair_indices(X.n_agents)
    d = pairwise_distance_values(X.positions)
    return [(int(i) + 1, int(j) + 1, float(v)) for i, j, v in zip(iu, ju, d)]


def wall_clearances(X: FleetState, c: ConstraintSet) -> list[tuple[int, int, float]]:
    """All (agent, wall, clearance) tuples; agent and wall ids 1-based."""
    mat = wall_clearance_matrix(X.positions, c.arena)
    return [
        (i + 1, j + 1, float(mat[i, j]))
        for i in range(mat.shape[0])
        for j in range(4)
    ]


def check_admissible(X: FleetState, U: FleetInput, c: ConstraintSet) -> AdmissibilityReport:
    """Membership test for the admissible set; all inequalities non-strict."""
    if X.n_agents != U.n_agents:
        raise ValueError(
            f"fleet size mismatch: {X.n_agents} states vs {U.n_agents} inputs"
        )
    iu, ju = pair_indices(X.n_agents)
    d = pairwise_distance_values(X.positions)
    min_pair = float(d.min()) if d.size else math.inf
    min_wall = min_wall_clearance(X.positions, c.arena)
    bad = d < c.delta_a
    violating = tuple(
        (int(i) + 1, int(j) + 1, float(v))
        for i, j, v in zip(iu[bad], ju[bad], d[bad])
    )
    return AdmissibilityReport(
        min_pairwise=min_pair,
        min_wall=min_wall,
        input_ok=inputs_in_box(U.commands, c),
        state_ok=bool(min_pair >= c.delta_a and min_wall >= c.delta_w),
        violating_pairs=violating,
    )


def in_terminal_set(
    X: FleetState, U_last: FleetInput, c: ConstraintSet, tol: float = 0.0
) -> bool:
    """Membership in the terminal rest set.

    Requires all pairwise distances >= delta_a - tol, all wall clearances
    >= delta_w - tol, and translational velocity |v_i| <= tol for every
    agent. Only v is pinned: a unicycle with v = 0 holds its position
    regardless of omega, so the zero input keeps the set invariant.
    """
    if tol < 0:
        raise ValueError("tol must be non-negative")
    if min_pairwise_distance(X.positions) < c.delta_a - tol:
        return False
    if min_wall_clearance(X.positions, c.arena) < c.delta_w - tol:
        return False
    return bool(np.all(np.abs(U_last.commands[:, 0]) <= tol))
