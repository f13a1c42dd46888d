"""Man-in-the-middle attack models on the networked channels.

Outside the active window every attack is the identity on both channels.
Inside the window:

* fdi hijacks the actuation channel per-agent as
  u_a = fdi_gain * u_c + fdi_offset (the stock rule negates the command
  and adds the forward-speed limit); an optional additive state offset on
  the sensor channel is representable but zero by default.
* covert hijacks both channels: the sensor channel reports a fabricated
  fleet state seeded from the true state at window start and evolved with
  the exact plant map under the controller's own commands (so one-step
  prediction residuals vanish identically), while the actuation channel
  replaces the command with a saturated greedy pursuit of a target point.

The window is half-open [t_start, t_end): the first transmission at or
after t_end carries the true state again, which is what finally trips a
prediction-residual detector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constraints import ConstraintSet
from .dynamics import FleetInput, FleetState, step_poses

__all__ = [
    "ATTACK_KINDS",
    "AttackSpec",
    "CovertState",
    "Adversary",
    "apply",
    "covert_state_update",
    "covert_attack_input",
    "fdi_rule",
    "wrap_angle",
]

ATTACK_KINDS = ("none", "fdi", "covert")


@dataclass(frozen=True)
class AttackSpec:
    """Which attack runs, when, and with what parameters."""

    kind: str = "none"
    window: tuple[float, float] = (5.0, 10.0)
    fdi_gain: float = -1.0
    fdi_offset: tuple[float, float] = (2.0, 0.0)
    fdi_state_offset: tuple[float, float, float] = (0.0, 0.0, 0.0)
    target: tuple[float, float] = (0.0, 0.0)
    heading_gain: float = 4.0
    creep_speed: float = 0.2

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if self.kind != "none" and not self.window[0] < self.window[1]:
            raise ValueError(f"empty attack window {self.window}")
        if self.heading_gain <= 0 or self.creep_speed < 0:
            raise ValueError("covert gains must be positive")

    def active(self, t: float) -> bool:
        return self.kind != "none" and self.window[0] <= t < self.window[1]


@dataclass
class CovertState:
    """Fabricated trajectory bookkeeping, owned by one scenario loop.

    x_a is seeded from the true state at the first in-window step and
    afterwards evolves only through the plant map under the recorded
    controller command (pending_command holds the last one intercepted).
    """

    x_a: FleetState | None = None
    initialized: bool = False
    pending_command: FleetInput | None = None


def wrap_angle(a):
    """Wrap angle(s) to (-pi, pi]; the only place headings get wrapped."""
    return np.arctan2(np.sin(a), np.cos(a))


def fdi_rule(commands: np.ndarray, gain: float, offset) -> np.ndarray:
    return gain * commands + np.asarray(offset, dtype=float)


def covert_state_update(
    cs: CovertState, u_c: FleetInput | None, x_true_at_start: FleetState, dt: float
) -> FleetState:
    """Advance the fabricated state by the exact plant map.

    The first call inside the window seeds x_a with the true state and
    returns it unchanged; later calls apply the plant step with the
    controller command transmitted at the previous step.
    """
    if not cs.initialized:
        cs.x_a = x_true_at_start
        cs.initialized = True
        return cs.x_a
    if u_c is None:
        raise ValueError("an initialized covert state needs the previous command")
    cs.x_a = FleetState(step_poses(cs.x_a.poses, u_c.commands, dt))
    return cs.x_a


def covert_attack_input(
    x_true: FleetState,
    target,
    heading_gain: float,
    creep_speed: float,
    cs: ConstraintSet,
) -> FleetInput:
    """Saturated greedy pursuit of the target point, per agent.

    Aim heading at the target; spin at clipped proportional rate; drive
    forward with v_max * cos(heading error) when pointing within a
    quarter turn, else creep forward while turning. Agents essentially at
    the target get the zero input.
    """
    pos = x_true.positions
    theta = x_true.poses[:, 2]
    delta = np.asarray(target, dtype=float) - pos
    dist = np.hypot(delta[:, 0], delta[:, 1])
    desired = np.arctan2(delta[:, 1], delta[:, 0])
    err = wrap_angle(desired - theta)

    v_max = cs.v_bounds[1]
    omega = np.clip(heading_gain * err, cs.omega_bounds[0], cs.omega_bounds[1])
    v = np.where(np.abs(err) <= np.pi / 2, v_max * np.cos(err), creep_speed)
    v = np.clip(v, cs.v_bounds[0], cs.v_bounds[1])

    at_target = dist < 1e-9
    v = np.where(at_target, 0.0, v)
    omega = np.where(at_target, 0.0, omega)
    return FleetInput(np.stack([v, omega], axis=1))


class Adversary:
    """Per-scenario attacker driving both channels of one simulation loop."""

    def __init__(self, spec: AttackSpec, cs: ConstraintSet, dt: float):
        self.spec = spec
        self.cs = cs
        self.dt = dt
        self.covert = CovertState()

    def sensor(self, t: float, x_true: FleetState) -> FleetState:
        """State as received by the networked controller at time t."""
        if not self.spec.active(t):
            return x_true
        if self.spec.kind == "covert":
            return covert_state_update(
                self.covert, self.covert.pending_command, x_true, self.dt
            )
        if any(self.spec.fdi_state_offset):
            return FleetState(
                x_true.poses + np.asarray(self.spec.fdi_state_offset, dtype=float)
            )
        return x_true

    def actuation(self, t: float, u_c: FleetInput, x_true: FleetState) -> FleetInput:
        """Command as received by the plant side at time t."""
        if not self.spec.active(t):
            return u_c
        if self.spec.kind == "fdi":
            return FleetInput(
                fdi_rule(u_c.commands, self.spec.fdi_gain, self.spec.fdi_offset)
            )
        # covert: remember u_c so the fabricated state tracks what the
        # detector will predict, then hijack the command entirely
        self.covert.pending_command = u_c
        return covert_attack_input(
            x_true,
            self.spec.target,
            self.spec.heading_gain,
            self.spec.creep_speed,
            self.cs,
        )


def apply(
    spec: AttackSpec,
    t: float,
    u_c: FleetInput,
    x_true: FleetState,
    cs: CovertState,
    constraints: ConstraintSet,
    dt: float,
) -> tuple[FleetInput, FleetState]:
    """Single-shot attacker map (u_c, x_true) -> (u_a, x_a) at time t.

    Composes the sensor channel (first, matching transmission order) and
    the actuation channel over the shared covert state cs.
    """
    adv = Adversary(spec, constraints, dt)
    adv.covert = cs
    x_a = adv.sensor(t, x_true)
    u_a = adv.actuation(t, u_c, x_true)
    return u_a, x_a
