import math

import numpy as np
import pytest

from msfsim.constraints import (
    ConstraintSet,
    check_admissible,
    in_terminal_set,
    pairwise_distances,
    wall_clearances,
)
from msfsim.dynamics import FleetInput, FleetState, step_fleet


def fleet(*rows):
    return FleetState(np.array(rows, dtype=float))


CS = ConstraintSet()


class TestPairwiseDistances:
    def test_three_four_five(self):
        d = pairwise_distances(fleet([0, 0, 0], [3, 4, 0]))
        assert d == [(1, 2, 5.0)]

    def test_single_agent_empty(self):
        assert pairwise_distances(fleet([0, 0, 0])) == []

    def test_admissible_pair_at_margin(self):
        d = pairwise_distances(fleet([0, 0, 0], [0.3, 0, 0]))
        assert d[0][2] == pytest.approx(0.3)
        assert d[0][2] >= CS.delta_a

    def test_count_and_symmetric_labels(self):
        rng = np.random.default_rng(0)
        X = FleetState(rng.uniform(-1, 1, size=(6, 3)))
        d = pairwise_distances(X)
        assert len(d) == 15
        assert all(i < j for i, j, _ in d)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(1)
        poses = rng.uniform(-1, 1, size=(5, 3))
        base = {frozenset((i, j)): v for i, j, v in pairwise_distances(FleetState(poses))}
        perm = rng.permutation(5)
        permuted = pairwise_distances(FleetState(poses[perm]))
        inverse = {int(p) + 1: k + 1 for k, p in enumerate(perm)}
        for i, j, v in permuted:
            orig = frozenset((inverse[i], inverse[j]))
            assert v == base[orig]


class TestWallClearances:
    def test_centered_point(self):
        vals = [d for _, _, d in wall_clearances(fleet([0, 0, 0]), CS)]
        assert vals == [2.0, 2.0, 2.0, 2.0]

    def test_near_wall_violation(self):
        vals = [d for _, _, d in wall_clearances(fleet([1.9, 0, 0]), CS)]
        assert min(vals) == pytest.approx(0.1)
        assert min(vals) < CS.delta_w

    def test_outside_is_negative(self):
        vals = {j: d for _, j, d in wall_clearances(fleet([2.5, 0, 0]), CS)}
        assert vals[2] == pytest.approx(-0.5)  # x_max wall

    def test_orders_and_sizes(self):
        out = wall_clearances(fleet([0, 0, 0], [1, 1, 0]), CS)
        assert len(out) == 8
        assert out[0][:2] == (1, 1)
        assert out[-1][:2] == (2, 4)


class TestCheckAdmissible:
    def test_bounds_inclusive(self):
        X = fleet([0, 0, 0], [1, 0, 0])
        U = FleetInput(np.array([[2.0, -2.0], [0.0, 0.0]]))
        assert check_admissible(X, U, CS).input_ok

    def test_bound_exceeded(self):
        X = fleet([0, 0, 0])
        U = FleetInput(np.array([[2.01, 0.0]]))
        assert not check_admissible(X, U, CS).input_ok

    def test_coincident_agents_violate(self):
        X = fleet([0, 0, 0], [0, 0, 0])
        rep = check_admissible(X, FleetInput.zero(2), CS)
        assert not rep.state_ok
        assert (1, 2, 0.0) in rep.violating_pairs

    def test_report_invariant(self):
        rng = np.random.default_rng(2)
        for _ in range(30):
            X = FleetState(rng.uniform(-2.2, 2.2, size=(4, 3)))
            rep = check_admissible(X, FleetInput.zero(4), CS)
            assert rep.state_ok == (
                rep.min_pairwise >= CS.delta_a and rep.min_wall >= CS.delta_w
            )

    def test_monotone_in_margins(self):
        rng = np.random.default_rng(3)
        tighter = ConstraintSet(delta_a=0.3, delta_w=0.3)
        looser = ConstraintSet(delta_a=0.15, delta_w=0.1)
        for _ in range(30):
            X = FleetState(rng.uniform(-1.8, 1.8, size=(4, 3)))
            U = FleetInput.zero(4)
            if check_admissible(X, U, tighter).state_ok:
                assert check_admissible(X, U, looser).state_ok

    def test_single_agent_min_pairwise_infinite(self):
        rep = check_admissible(fleet([0, 0, 0]), FleetInput.zero(1), CS)
        assert rep.min_pairwise == math.inf
        assert rep.state_ok


class TestTerminalSet:
    def test_separated_resting_fleet(self):
        X = fleet([0, 0, 0], [1, 0, 1], [0, 1, 2])
        assert in_terminal_set(X, FleetInput.zero(3), CS)

    def test_moving_agent_not_at_rest(self):
        X = fleet([0, 0, 0], [1, 0, 1])
        U = FleetInput(np.array([[0.0, 0.0], [0.5, 0.0]]))
        assert not in_terminal_set(X, U, CS)

    def test_boundary_distance_counts(self):
        X = fleet([0, 0, 0], [CS.delta_a, 0, 0])
        assert in_terminal_set(X, FleetInput.zero(2), CS, tol=0.0)

    def test_omega_left_free(self):
        X = fleet([0, 0, 0], [1, 0, 0])
        U = FleetInput(np.array([[0.0, 2.0], [0.0, -2.0]]))
        assert in_terminal_set(X, U, CS)

    def test_invariance_under_zero_input(self):
        rng = np.random.default_rng(4)
        count = 0
        while count < 20:
            X = FleetState(
                np.stack(
                    [
                        rng.uniform(-1.5, 1.5, 4),
                        rng.uniform(-1.5, 1.5, 4),
                        rng.uniform(-4, 4, 4),
                    ],
                    axis=1,
                )
            )
            zero = FleetInput.zero(4)
            if not in_terminal_set(X, zero, CS):
                continue
            count += 1
            stepped = step_fleet(X, zero, 0.02)
            assert in_terminal_set(stepped, zero, CS)

    def test_negative_tol_rejected(self):
        with pytest.raises(ValueError):
            in_terminal_set(fleet([0, 0, 0]), FleetInput.zero(1), CS, tol=-1.0)


class TestConstraintSetValidation:
    def test_bad_margins(self):
        with pytest.raises(ValueError):
            ConstraintSet(delta_a=0.0)

    def test_bad_bounds(self):
        with pytest.raises(ValueError):
            ConstraintSet(v_bounds=(2.0, -2.0))

    def test_arena_too_narrow_for_clearance(self):
        with pytest.raises(ValueError):
            ConstraintSet(arena=(0.0, 0.3, -2.0, 2.0), delta_w=0.2)
