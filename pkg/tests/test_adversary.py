import numpy as np
import pytest

from msfsim.adversary import (
    Adversary,
    AttackSpec,
    CovertState,
    apply,
    covert_attack_input,
    covert_state_update,
    fdi_rule,
    wrap_angle,
)
from msfsim.constraints import ConstraintSet
from msfsim.dynamics import FleetInput, FleetState, step_fleet

CS = ConstraintSet()
DT = 0.02


def fleet(*rows):
    return FleetState(np.array(rows, dtype=float))


def cmd(*rows):
    return FleetInput(np.array(rows, dtype=float))


class TestWindowGating:
    @pytest.mark.parametrize("kind", ["none", "fdi", "covert"])
    def test_identity_outside_window(self, kind):
        spec = AttackSpec(kind=kind, window=(5.0, 10.0))
        adv = Adversary(spec, CS, DT)
        x = fleet([0.5, 0.5, 1.0])
        u_c = cmd([1.0, -0.5])
        assert adv.sensor(2.0, x) is x
        assert adv.actuation(2.0, u_c, x) is u_c

    def test_window_half_open(self):
        spec = AttackSpec(kind="fdi", window=(5.0, 10.0))
        assert not spec.active(4.999999)
        assert spec.active(5.0)
        assert spec.active(9.9999)
        assert not spec.active(10.0)

    def test_bad_specs_rejected(self):
        with pytest.raises(ValueError):
            AttackSpec(kind="replay")
        with pytest.raises(ValueError):
            AttackSpec(kind="fdi", window=(5.0, 5.0))


class TestFdi:
    def test_stock_rule_example(self):
        out = fdi_rule(np.array([[1.0, 0.5]]), -1.0, (2.0, 0.0))
        assert np.array_equal(out, [[1.0, -0.5]])

    def test_max_speed_command_stalls(self):
        out = fdi_rule(np.array([[2.0, 0.0]]), -1.0, (2.0, 0.0))
        assert np.array_equal(out, [[0.0, 0.0]])

    def test_involution(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            u = rng.uniform(-2, 2, size=(4, 2))
            offset = rng.uniform(-1, 1, size=2)
            assert np.allclose(
                fdi_rule(fdi_rule(u, -1.0, offset), -1.0, offset), u, atol=1e-15
            )

    def test_actuation_channel_only_by_default(self):
        spec = AttackSpec(kind="fdi", window=(0.0, 1.0))
        adv = Adversary(spec, CS, DT)
        x = fleet([0.3, -0.2, 0.5])
        assert adv.sensor(0.5, x) is x
        u_a = adv.actuation(0.5, cmd([1.0, 0.5]), x)
        assert np.array_equal(u_a.commands, [[1.0, -0.5]])

    def test_state_offset_representable(self):
        spec = AttackSpec(
            kind="fdi", window=(0.0, 1.0), fdi_state_offset=(0.1, 0.0, 0.0)
        )
        adv = Adversary(spec, CS, DT)
        x = fleet([0.3, -0.2, 0.5])
        x_a = adv.sensor(0.5, x)
        assert np.allclose(x_a.poses, [[0.4, -0.2, 0.5]])


class TestCovertState:
    def test_seeding_returns_true_state(self):
        cs_state = CovertState()
        x0 = fleet([0.1, 0.2, 0.3])
        out = covert_state_update(cs_state, None, x0, DT)
        assert np.array_equal(out.poses, x0.poses)
        assert cs_state.initialized

    def test_zero_commands_freeze_the_fabrication(self):
        cs_state = CovertState()
        x0 = fleet([0.1, 0.2, 0.3])
        covert_state_update(cs_state, None, x0, DT)
        for _ in range(5):
            out = covert_state_update(cs_state, FleetInput.zero(1), x0, DT)
        assert np.array_equal(out.poses, x0.poses)

    def test_fabrication_matches_plant_map_exactly(self):
        rng = np.random.default_rng(1)
        cs_state = CovertState()
        x = fleet([0.0, 0.0, 0.0])
        prev = covert_state_update(cs_state, None, x, DT)
        for _ in range(10):
            u_c = FleetInput(rng.uniform(-2, 2, size=(1, 2)))
            out = covert_state_update(cs_state, u_c, x, DT)
            predicted = step_fleet(prev, u_c, DT)
            assert np.array_equal(out.poses, predicted.poses)  # residual 0
            prev = out

    def test_update_requires_command_once_initialized(self):
        cs_state = CovertState()
        covert_state_update(cs_state, None, fleet([0, 0, 0]), DT)
        with pytest.raises(ValueError):
            covert_state_update(cs_state, None, fleet([0, 0, 0]), DT)


class TestCovertAttackInput:
    def test_aligned_pursuit_saturates(self):
        x = fleet([1.0, 0.0, np.pi])  # at (1,0) facing the origin
        u = covert_attack_input(x, (0.0, 0.0), 4.0, 0.2, CS)
        assert u.commands[0, 0] == pytest.approx(2.0)
        assert u.commands[0, 1] == pytest.approx(0.0, abs=1e-12)

    def test_facing_away_turns_hard(self):
        x = fleet([1.0, 0.0, 0.0])
        u = covert_attack_input(x, (0.0, 0.0), 4.0, 0.2, CS)
        assert abs(u.commands[0, 1]) == pytest.approx(2.0)
        assert u.commands[0, 0] == pytest.approx(0.2)

    def test_mirror_symmetry(self):
        # mirror through the y-axis: omega flips sign, v unchanged
        a = fleet([1.0, 0.5, 0.5])
        b = fleet([-1.0, 0.5, np.pi - 0.5])
        ua = covert_attack_input(a, (0.0, 0.0), 4.0, 0.2, CS)
        ub = covert_attack_input(b, (0.0, 0.0), 4.0, 0.2, CS)
        assert ua.commands[0, 0] == pytest.approx(ub.commands[0, 0], abs=1e-12)
        assert ua.commands[0, 1] == pytest.approx(-ub.commands[0, 1], abs=1e-12)

    def test_at_target_guard(self):
        x = fleet([0.0, 0.0, 1.0])
        u = covert_attack_input(x, (0.0, 0.0), 4.0, 0.2, CS)
        assert np.array_equal(u.commands, [[0.0, 0.0]])

    def test_outputs_clipped_to_boxes(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            x = FleetState(
                np.column_stack(
                    [
                        rng.uniform(-2, 2, 5),
                        rng.uniform(-2, 2, 5),
                        rng.uniform(-7, 7, 5),
                    ]
                )
            )
            u = covert_attack_input(x, (0.0, 0.0), 4.0, 0.2, CS)
            assert np.all(u.commands[:, 0] >= CS.v_bounds[0])
            assert np.all(u.commands[:, 0] <= CS.v_bounds[1])
            assert np.all(np.abs(u.commands[:, 1]) <= CS.omega_bounds[1])


class TestApplyComposition:
    def test_attack_free_identity(self):
        spec = AttackSpec(kind="none")
        state = CovertState()
        u_c = cmd([1.0, 0.0])
        x = fleet([0.5, 0.5, 0.0])
        u_a, x_a = apply(spec, 3.0, u_c, x, state, CS, DT)
        assert u_a is u_c
        assert x_a is x

    def test_covert_two_channel_behavior(self):
        spec = AttackSpec(kind="covert", window=(1.0, 2.0))
        state = CovertState()
        x = fleet([1.0, 0.0, np.pi])
        u_c = cmd([0.5, 0.1])
        u_a, x_a = apply(spec, 1.0, u_c, x, state, CS, DT)
        # sensor seeded with the true state, actuation hijacked to pursuit
        assert np.array_equal(x_a.poses, x.poses)
        assert u_a.commands[0, 0] == pytest.approx(2.0)
        # next step the fabrication evolves with the recorded u_c
        x2 = fleet([0.9, 0.0, np.pi])
        _, x_a2 = apply(spec, 1.02, u_c, x2, state, CS, DT)
        assert np.array_equal(x_a2.poses, step_fleet(x_a, u_c, DT).poses)


class TestWrapAngle:
    def test_range(self):
        vals = wrap_angle(np.array([0.0, np.pi, -np.pi, 3 * np.pi, -7.5]))
        assert np.all(vals <= np.pi)
        assert np.all(vals >= -np.pi)

    def test_identity_inside_range(self):
        assert wrap_angle(1.2) == pytest.approx(1.2, abs=1e-15)
