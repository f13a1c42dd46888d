"""Deterministic closed-loop scenario runner, metrics, and log export.

Step order, per time step t (matching the transmission order of the
architecture): the adversary's sensor channel produces the received state
x_a from the true state; the tracker computes u_c from x_a; the
adversary's actuation channel produces u_a from u_c; the safety filter
(when enabled) maps the true state and u_a to the applied command u_s;
the plant steps with u_s; the detector scores x_a against its one-step
prediction. The tracker never sees the true state and the filter never
sees the received state.

Runs are fully deterministic for a fixed config: the only random element
is optional initial-position jitter drawn from the configured seed.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .adversary import Adversary, AttackSpec
from .constraints import (
    ConstraintSet,
    check_admissible,
    min_pairwise_distance,
    min_wall_clearance,
)
from .detector import DetectorState, detect
from .dynamics import FleetInput, FleetState, step_fleet
from .errors import ConfigError, InitialInfeasibilityError, SimulationAbort
from .optimizer import SolverConfig
from .safety_filter import FilterConfig, SafetyFilter
from .tracking import ReferenceSpec, TrackerConfig, TrackingController, reference_positions

__all__ = [
    "ScenarioConfig",
    "SimLog",
    "MetricsSummary",
    "initial_fleet",
    "run_scenario",
    "summarize",
    "export",
    "load_log",
    "read_csv_log",
    "config_from_dict",
    "config_to_dict",
    "load_config",
]

# Intervention classification threshold, aligned with the filter default.
INTERVENTION_TOL = 1e-9
# Averaging window for tracking-error recovery metrics [s].
RECOVERY_WINDOW = 1.0


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything a scenario run depends on; defaults are the stock setup."""

    fleet_size: int = 20
    duration: float = 15.0
    dt: float = 0.02
    filter_horizon: int = 3
    constraints: ConstraintSet = field(default_factory=ConstraintSet)
    reference: ReferenceSpec = field(default_factory=ReferenceSpec)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    attack: AttackSpec = field(default_factory=AttackSpec)
    solver: SolverConfig = field(default_factory=SolverConfig)
    filter_enabled: bool = True
    initial_states: tuple | None = None
    ring_radius: float = 1.7
    seed: int = 0
    jitter: float = 0.0

    def __post_init__(self):
        if self.fleet_size < 1:
            raise ConfigError("fleet_size must be >= 1")
        if not (self.duration > 0 and self.dt > 0):
            raise ConfigError("duration and dt must be positive")
        steps = self.duration / self.dt
        if abs(steps - round(steps)) > 1e-6:
            raise ConfigError(
                f"duration/dt = {steps} is not an integral step count"
            )
        if self.filter_horizon < 1:
            raise ConfigError("filter_horizon must be >= 1")
        if self.ring_radius <= 0 or self.jitter < 0:
            raise ConfigError("ring_radius must be > 0 and jitter >= 0")
        if self.initial_states is not None:
            states = tuple(tuple(float(v) for v in row) for row in self.initial_states)
            if len(states) != self.fleet_size or any(len(r) != 3 for r in states):
                raise ConfigError(
                    "initial_states must list (x, y, theta) for every agent"
                )
            object.__setattr__(self, "initial_states", states)
        # the reference spec always spans the configured fleet
        object.__setattr__(
            self,
            "reference",
            dataclasses.replace(self.reference, fleet_size=self.fleet_size),
        )

    @property
    def n_steps(self) -> int:
        return round(self.duration / self.dt)


@dataclass
class SimLog:
    """Per-step record of one scenario run (arrays indexed by step)."""

    config: ScenarioConfig
    t: np.ndarray
    x_true: np.ndarray
    x_a: np.ndarray
    u_c: np.ndarray
    u_a: np.ndarray
    u_s: np.ndarray
    mode: list[str]
    intervention: np.ndarray
    alarm: np.ndarray
    residual: np.ndarray
    min_pairwise: np.ndarray
    min_wall: np.ndarray
    solver_status: list[str]
    solver_iterations: np.ndarray
    tracking_error: np.ndarray
    final_state: FleetState
    backups: list = field(default_factory=list, repr=False)

    @property
    def n_steps(self) -> int:
        return self.t.shape[0]

    @property
    def n_agents(self) -> int:
        return self.x_true.shape[1]


@dataclass(frozen=True)
class MetricsSummary:
    """Scenario-level metrics derived purely from a SimLog."""

    min_pairwise_distance: float
    min_wall_clearance: float
    max_intervention: float
    intervention_intervals: tuple[tuple[float, float], ...]
    first_alarm_time: float | None
    recovery_time: float | None
    fallback_count: int
    pre_attack_tracking_error: float | None


def ring_placement(cfg: ScenarioConfig) -> np.ndarray:
    """Equally spaced ring aligned with the reference phases, headings
    tangential to the direction of formation motion."""
    n = cfg.fleet_size
    phi = 2.0 * np.pi * np.arange(n) / n
    x = cfg.ring_radius * np.sin(phi)
    y = cfg.ring_radius * np.cos(phi)
    w0 = cfg.reference.w0
    theta = np.arctan2(-w0 * np.sin(phi), w0 * np.cos(phi)) if w0 != 0 else -phi
    poses = np.stack([x, y, theta], axis=1)
    if cfg.jitter > 0:
        rng = np.random.default_rng(cfg.seed)
        poses[:, :2] += cfg.jitter * rng.standard_normal((n, 2))
    return poses


def initial_fleet(cfg: ScenarioConfig) -> FleetState:
    """Initial fleet state, strictly inside the admissible set."""
    if cfg.initial_states is not None:
        poses = np.array(cfg.initial_states, dtype=float)
    else:
        poses = ring_placement(cfg)
    X = FleetState(poses)
    cs = cfg.constraints
    if (
        min_pairwise_distance(X.positions) <= cs.delta_a
        or min_wall_clearance(X.positions, cs.arena) <= cs.delta_w
    ):
        report = check_admissible(X, FleetInput.zero(cfg.fleet_size), cs)
        raise InitialInfeasibilityError(
            "initial fleet state lacks a strict admissibility margin "
            f"(min pairwise {report.min_pairwise:.4f}, min wall "
            f"{report.min_wall:.4f})"
        )
    return X


def run_scenario(cfg: ScenarioConfig) -> SimLog:
    """Run one closed-loop scenario and log every step.

    Raises InitialInfeasibilityError when no safe backup exists at step 0
    and SimulationAbort when a state goes non-finite mid-run.
    """
    cs = cfg.constraints
    n = cfg.fleet_size
    steps = cfg.n_steps
    dt = cfg.dt

    x = initial_fleet(cfg)
    tracker = TrackingController(cfg.tracker, cfg.reference, cs, dt, cfg.solver)
    adversary = Adversary(cfg.attack, cs, dt)
    safety = (
        SafetyFilter(
            FilterConfig(
                constraints=cs,
                horizon=cfg.filter_horizon,
                dt=dt,
                solver=cfg.solver,
            )
        )
        if cfg.filter_enabled
        else None
    )
    det = DetectorState()

    t_arr = np.empty(steps)
    x_true = np.empty((steps, n, 3))
    x_recv = np.empty((steps, n, 3))
    u_cmd = np.empty((steps, n, 2))
    u_atk = np.empty((steps, n, 2))
    u_safe = np.empty((steps, n, 2))
    mode: list[str] = []
    intervention = np.zeros(steps)
    alarm = np.zeros(steps, dtype=int)
    residual = np.zeros(steps)
    min_pair = np.empty(steps)
    min_wall = np.empty(steps)
    solver_status: list[str] = []
    solver_iters = np.zeros(steps, dtype=int)
    tracking_err = np.empty(steps)
    backups: list = []

    for k in range(steps):
        t = k * dt
        x_a = adversary.sensor(t, x)
        u_c = tracker.command(x_a, t)
        u_a = adversary.actuation(t, u_c, x)

        if safety is not None:
            outcome = safety.step(x, u_a)
            u_s = outcome.u_s
            mode.append(outcome.mode)
            intervention[k] = outcome.intervention
            res = outcome.solve_result
            solver_status.append(res.status if res is not None else "none")
            solver_iters[k] = res.iterations if res is not None else 0
            backups.append(outcome.backup)
        else:
            u_s = u_a
            mode.append("off")
            solver_status.append("none")
            backups.append(None)

        x_next = step_fleet(x, u_s, dt)
        alarm[k] = detect(det, x_a, dt)
        residual[k] = det.residuals[-1]
        det.record(x_a, u_c)

        t_arr[k] = t
        x_true[k] = x.poses
        x_recv[k] = x_a.poses
        u_cmd[k] = u_c.commands
        u_atk[k] = u_a.commands
        u_safe[k] = u_s.commands
        min_pair[k] = min_pairwise_distance(x.positions)
        min_wall[k] = min_wall_clearance(x.positions, cs.arena)
        refs = reference_positions(t, cfg.reference)
        tracking_err[k] = float(
            np.mean(np.linalg.norm(x.positions - refs, axis=1))
        )

        if not np.all(np.isfinite(x_next.poses)):
            raise SimulationAbort("fleet state went non-finite", step=k)
        x = x_next

    return SimLog(
        config=cfg,
        t=t_arr,
        x_true=x_true,
        x_a=x_recv,
        u_c=u_cmd,
        u_a=u_atk,
        u_s=u_safe,
        mode=mode,
        intervention=intervention,
        alarm=alarm,
        residual=residual,
        min_pairwise=min_pair,
        min_wall=min_wall,
        solver_status=solver_status,
        solver_iterations=solver_iters,
        tracking_error=tracking_err,
        final_state=x,
        backups=backups,
    )


def _intervals(t: np.ndarray, active: np.ndarray) -> tuple[tuple[float, float], ...]:
    """Maximal closed [t_first, t_last] spans where active is true."""
    spans = []
    start = None
    for k, flag in enumerate(active):
        if flag and start is None:
            start = k
        elif not flag and start is not None:
            spans.append((float(t[start]), float(t[k - 1])))
            start = None
    if start is not None:
        spans.append((float(t[start]), float(t[-1])))
    return tuple(spans)


def summarize(log: SimLog) -> MetricsSummary:
    """Scenario metrics from the log alone."""
    if log.n_steps == 0:
        raise ValueError("empty log")
    cfg = log.config
    t = log.t
    dt = cfg.dt
    window = max(1, round(RECOVERY_WINDOW / dt))

    alarms = np.flatnonzero(log.alarm)
    first_alarm = float(t[alarms[0]]) if alarms.size else None

    pre_error = None
    recovery = None
    if cfg.attack.kind != "none":
        t_start, t_end = cfg.attack.window
        before = (t >= t_start - RECOVERY_WINDOW) & (t < t_start)
        if np.any(before):
            pre_error = float(np.mean(log.tracking_error[before]))
        after = np.flatnonzero(t >= t_end)
        if pre_error is not None and after.size:
            threshold = 1.1 * pre_error
            for s in range(after[0], log.n_steps - window + 1):
                if float(np.mean(log.tracking_error[s : s + window])) <= threshold:
                    recovery = float(t[s])
                    break

    return MetricsSummary(
        min_pairwise_distance=float(np.min(log.min_pairwise)),
        min_wall_clearance=float(np.min(log.min_wall)),
        max_intervention=float(np.max(log.intervention)),
        intervention_intervals=_intervals(t, log.intervention > INTERVENTION_TOL),
        first_alarm_time=first_alarm,
        recovery_time=recovery,
        fallback_count=sum(1 for m in log.mode if m == "fallback"),
        pre_attack_tracking_error=pre_error,
    )


# --------------------------------------------------------------------------
# config file handling

_NESTED_FIELDS = {
    "constraints": ConstraintSet,
    "reference": ReferenceSpec,
    "tracker": TrackerConfig,
    "attack": AttackSpec,
    "solver": SolverConfig,
}
_TUPLE_FIELDS = {
    "v_bounds",
    "omega_bounds",
    "arena",
    "window",
    "fdi_offset",
    "fdi_state_offset",
    "target",
}


def _build_dataclass(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be an object, got {type(data).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        if key in _NESTED_FIELDS and cls is ScenarioConfig:
            kwargs[key] = _build_dataclass(_NESTED_FIELDS[key], value, f"{where}.{key}")
        elif key in _TUPLE_FIELDS and isinstance(value, (list, tuple)):
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {where}: {exc}") from exc


def config_from_dict(data: dict) -> ScenarioConfig:
    """Build a ScenarioConfig from nested key-value data; unknown keys error."""
    return _build_dataclass(ScenarioConfig, data, "config")


def config_to_dict(cfg: ScenarioConfig) -> dict:
    return dataclasses.asdict(cfg)


def load_config(path) -> ScenarioConfig:
    """Read a JSON config file mirroring the ScenarioConfig field names."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(data)


# --------------------------------------------------------------------------
# export / reload

_SCALAR_COLUMNS = ["intervention", "a", "min_d", "min_wall", "mode", "solver_status"]


def csv_header(n_agents: int) -> list[str]:
    cols = ["t"]
    for i in range(1, n_agents + 1):
        cols += [
            f"x_{i}",
            f"y_{i}",
            f"theta_{i}",
            f"v_c_{i}",
            f"omega_c_{i}",
            f"v_s_{i}",
            f"omega_s_{i}",
        ]
    return cols + _SCALAR_COLUMNS


def _fmt(value: float) -> str:
    return repr(float(value))


def csv_text(log: SimLog) -> str:
    """The full CSV export as a string (also handy for byte-level checks)."""
    n = log.n_agents
    lines = [",".join(csv_header(n))]
    for k in range(log.n_steps):
        row = [_fmt(log.t[k])]
        for i in range(n):
            row += [
                _fmt(log.x_true[k, i, 0]),
                _fmt(log.x_true[k, i, 1]),
                _fmt(log.x_true[k, i, 2]),
                _fmt(log.u_c[k, i, 0]),
                _fmt(log.u_c[k, i, 1]),
                _fmt(log.u_s[k, i, 0]),
                _fmt(log.u_s[k, i, 1]),
            ]
        row += [
            _fmt(log.intervention[k]),
            str(int(log.alarm[k])),
            _fmt(log.min_pairwise[k]),
            _fmt(log.min_wall[k]),
            log.mode[k],
            log.solver_status[k],
        ]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def _log_to_dict(log: SimLog) -> dict:
    return {
        "t": log.t.tolist(),
        "x_true": log.x_true.tolist(),
        "x_a": log.x_a.tolist(),
        "u_c": log.u_c.tolist(),
        "u_a": log.u_a.tolist(),
        "u_s": log.u_s.tolist(),
        "mode": list(log.mode),
        "intervention": log.intervention.tolist(),
        "alarm": log.alarm.tolist(),
        "residual": log.residual.tolist(),
        "min_pairwise": log.min_pairwise.tolist(),
        "min_wall": log.min_wall.tolist(),
        "solver_status": list(log.solver_status),
        "solver_iterations": log.solver_iterations.tolist(),
        "tracking_error": log.tracking_error.tolist(),
        "final_state": log.final_state.poses.tolist(),
    }


def export(log: SimLog, summary: MetricsSummary, path, fmt: str) -> Path:
    """Write the log to path as csv (steps table) or json (config +
    summary + full log). Floats are serialized with round-trip precision
    so a reload reproduces values bit-for-bit."""
    path = Path(path)
    try:
        if fmt == "csv":
            path.write_text(csv_text(log))
        elif fmt == "json":
            payload = {
                "config": config_to_dict(log.config),
                "summary": dataclasses.asdict(summary),
                "log": _log_to_dict(log),
            }
            path.write_text(json.dumps(payload, separators=(",", ":")) + "\n")
        else:
            raise ValueError(f"unknown export format {fmt!r}")
    except OSError as exc:
        raise OSError(f"cannot write {fmt} log to {path}: {exc}") from exc
    return path


def load_log(path) -> tuple[SimLog, MetricsSummary]:
    """Reload a JSON export into a SimLog plus its stored summary."""
    with open(path) as fh:
        payload = json.load(fh)
    cfg = config_from_dict(payload["config"])
    raw = payload["log"]
    log = SimLog(
        config=cfg,
        t=np.asarray(raw["t"], dtype=float),
        x_true=np.asarray(raw["x_true"], dtype=float),
        x_a=np.asarray(raw["x_a"], dtype=float),
        u_c=np.asarray(raw["u_c"], dtype=float),
        u_a=np.asarray(raw["u_a"], dtype=float),
        u_s=np.asarray(raw["u_s"], dtype=float),
        mode=list(raw["mode"]),
        intervention=np.asarray(raw["intervention"], dtype=float),
        alarm=np.asarray(raw["alarm"], dtype=int),
        residual=np.asarray(raw["residual"], dtype=float),
        min_pairwise=np.asarray(raw["min_pairwise"], dtype=float),
        min_wall=np.asarray(raw["min_wall"], dtype=float),
        solver_status=list(raw["solver_status"]),
        solver_iterations=np.asarray(raw["solver_iterations"], dtype=int),
        tracking_error=np.asarray(raw["tracking_error"], dtype=float),
        final_state=FleetState(np.asarray(raw["final_state"], dtype=float)),
        backups=[],
    )
    s = payload["summary"]
    summary = MetricsSummary(
        min_pairwise_distance=s["min_pairwise_distance"],
        min_wall_clearance=s["min_wall_clearance"],
        max_intervention=s["max_intervention"],
        intervention_intervals=tuple(tuple(x) for x in s["intervention_intervals"]),
        first_alarm_time=s["first_alarm_time"],
        recovery_time=s["recovery_time"],
        fallback_count=s["fallback_count"],
        pre_attack_tracking_error=s["pre_attack_tracking_error"],
    )
    return log, summary


def read_csv_log(path) -> tuple[list[str], list[list]]:
    """Parse an exported CSV back into (header, rows); numeric fields become
    floats, mode/status stay strings. Used for round-trip verification."""
    text = Path(path).read_text().rstrip("\n").split("\n")
    header = text[0].split(",")
    str_cols = {header.index("mode"), header.index("solver_status")}
    rows = []
    for line in text[1:]:
        parts = line.split(",")
        rows.append(
            [p if idx in str_cols else float(p) for idx, p in enumerate(parts)]
        )
    return header, rows
