"""One-step prediction-residual anomaly detector on the networked side.

The detector predicts the next received state by pushing the previously
received state through the plant map with the previously transmitted
command, and raises a binary flag when the received state deviates by at
least epsilon in Euclidean norm. It uses exactly the same dynamics code
as the plant, so an honest closed loop produces a residual of exactly
zero, not merely below threshold.

The flag is observational only: nothing in this package feeds it back
into any command path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import FleetInput, FleetState, step_poses

__all__ = ["DetectorState", "detect", "flags_at"]


@dataclass
class DetectorState:
    """Detector threshold, one-step memory, and per-step flag history.

    include_heading selects whether the residual norm covers the full
    stacked pose or positions only (full pose by default: headings carry
    attack-relevant information).
    """

    epsilon: float = 1e-6
    include_heading: bool = True
    history: list[int] = field(default_factory=list)
    residuals: list[float] = field(default_factory=list)
    _prev_x_a: FleetState | None = None
    _prev_u_c: FleetInput | None = None

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    @property
    def primed(self) -> bool:
        return self._prev_x_a is not None

    def record(self, x_a: FleetState, u_c: FleetInput) -> None:
        """Store the received state and transmitted command for the next step."""
        self._prev_x_a = x_a
        self._prev_u_c = u_c


def detect(ds: DetectorState, x_a_now: FleetState, dt: float) -> int:
    """Flag the received state against the one-step prediction.

    The first call (nothing recorded yet) returns 0 by convention with a
    stored residual of 0.0. Flag and residual are appended to the state's
    history.
    """
    if not ds.primed:
        residual = 0.0
    else:
        predicted = step_poses(ds._prev_x_a.poses, ds._prev_u_c.commands, dt)
        diff = x_a_now.poses - predicted
        if not ds.include_heading:
            diff = diff[:, :2]
        residual = float(np.linalg.norm(diff.ravel()))
    flag = 1 if residual >= ds.epsilon else 0
    ds.residuals.append(residual)
    ds.history.append(flag)
    return flag


def flags_at(ds: DetectorState, epsilon: float) -> list[int]:
    """Re-threshold the recorded residuals; flags shrink as epsilon grows."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    return [1 if r >= epsilon else 0 for r in ds.residuals]
