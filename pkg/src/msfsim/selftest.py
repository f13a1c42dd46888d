"""Fast built-in invariant suite behind `msf-sim selftest`.

Each check exercises one structural guarantee end to end on a small
scenario; together they catch wiring regressions in seconds without the
full test suite.
"""

from __future__ import annotations

import numpy as np

from .constraints import ConstraintSet, in_terminal_set
from .dynamics import FleetInput, FleetState, rollout, step_fleet
from .harness import ScenarioConfig, csv_text, run_scenario, summarize
from .adversary import AttackSpec
from .optimizer import NlpProblem, gradient_check
from .safety_filter import shift_backup, validate_backup
from .tracking import ReferenceSpec, TrackerConfig

__all__ = ["run_selftest", "CHECKS"]


def _mini_config(**overrides) -> ScenarioConfig:
    base = dict(
        fleet_size=4,
        duration=2.0,
        dt=0.02,
        reference=ReferenceSpec(r0=0.8, w0=0.6),
        ring_radius=1.0,
        tracker=TrackerConfig(horizon=8),
        attack=AttackSpec(kind="covert", window=(0.5, 1.4)),
    )
    base.update(overrides)
    return ScenarioConfig(**base)


def check_rollout_composition() -> None:
    rng = np.random.default_rng(7)
    X0 = FleetState(rng.normal(size=(3, 3)))
    seq = [FleetInput(rng.uniform(-2, 2, size=(3, 2))) for _ in range(6)]
    full = rollout(X0, seq, 0.02)
    first = rollout(X0, seq[:3], 0.02)
    second = rollout(first.states[-1], seq[3:], 0.02)
    assert np.array_equal(full.states[3].poses, first.states[-1].poses)
    assert np.array_equal(full.states[-1].poses, second.states[-1].poses)


def check_zero_input_fixed_point() -> None:
    rng = np.random.default_rng(11)
    X = FleetState(rng.normal(size=(5, 3)))
    stepped = step_fleet(X, FleetInput.zero(5), 0.02)
    assert np.array_equal(stepped.poses, X.poses)


def check_terminal_set_invariance() -> None:
    cs = ConstraintSet()
    X = FleetState(np.array([[0.0, 0.0, 0.3], [1.0, 0.0, -1.0], [0.0, 1.0, 2.0]]))
    zero = FleetInput.zero(3)
    assert in_terminal_set(X, zero, cs)
    assert in_terminal_set(step_fleet(X, zero, 0.02), zero, cs)


def check_solver_gradients() -> None:
    from .safety_filter import FilterConfig, build_filter_problem

    rng = np.random.default_rng(3)
    cs = ConstraintSet()
    x = FleetState(
        np.stack(
            [rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3), rng.uniform(-3, 3, 3)],
            axis=1,
        )
    )
    u_a = FleetInput(rng.uniform(-1.5, 1.5, size=(3, 2)))
    problem = build_filter_problem(x, u_a, FilterConfig(constraints=cs))
    z = rng.uniform(-1.0, 1.0, size=problem.shape)
    z[-1, :, 0] = 0.0
    # keep z strictly interior for the symmetric stencil
    problem_interior = NlpProblem(
        x0=problem.x0,
        horizon=problem.horizon,
        dt=problem.dt,
        lb=-10.0,
        ub=10.0,
        target=problem.target,
        weights=problem.weights,
        blocks=problem.ineq + problem.eq,
    )
    assert gradient_check(problem_interior, z) <= 1e-5


def check_filter_safety_and_recursion() -> None:
    log = run_scenario(_mini_config())
    assert summarize(log).fallback_count == 0
    cs = log.config.constraints
    assert log.min_pairwise.min() >= cs.delta_a - 1e-6
    assert log.min_wall.min() >= cs.delta_w - 1e-6
    for backup in log.backups[:: max(1, len(log.backups) // 20)]:
        assert validate_backup(shift_backup(backup), cs) <= 1e-6


def check_covert_silence() -> None:
    log = run_scenario(_mini_config())
    t0, t1 = log.config.attack.window
    inside = (log.t > t0) & (log.t < t1)
    assert np.all(log.residual[inside] == 0.0)
    assert np.all(log.alarm[inside] == 0)


def check_determinism() -> None:
    def render() -> str:
        return csv_text(run_scenario(_mini_config(duration=1.0)))

    assert render() == render()


CHECKS = [
    ("rollout composition", check_rollout_composition),
    ("zero-input fixed point", check_zero_input_fixed_point),
    ("terminal set invariance", check_terminal_set_invariance),
    ("solver gradients", check_solver_gradients),
    ("filter safety + recursive feasibility", check_filter_safety_and_recursion),
    ("covert detector silence", check_covert_silence),
    ("run determinism", check_determinism),
]


def run_selftest(stream=None) -> bool:
    """Run every check, print one line each; True when all pass."""
    import sys

    out = stream or sys.stdout
    all_ok = True
    for name, fn in CHECKS:
        try:
            fn()
        except AssertionError as exc:
            all_ok = False
            print(f"[FAIL] {name}: {exc}", file=out)
        except Exception as exc:  # noqa: BLE001 - report, keep going
            all_ok = False
            print(f"[FAIL] {name}: {type(exc).__name__}: {exc}", file=out)
        else:
            print(f"[PASS] {name}", file=out)
    return all_ok
