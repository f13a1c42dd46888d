import numpy as np
import pytest

from msfsim.detector import DetectorState, detect, flags_at
from msfsim.dynamics import FleetInput, FleetState, step_fleet

DT = 0.02


def fleet(*rows):
    return FleetState(np.array(rows, dtype=float))


class TestDetect:
    def test_first_call_returns_zero(self):
        ds = DetectorState()
        assert detect(ds, fleet([1, 2, 3]), DT) == 0
        assert ds.residuals == [0.0]

    def test_honest_loop_has_exactly_zero_residual(self):
        rng = np.random.default_rng(0)
        ds = DetectorState()
        x = fleet([0.2, -0.1, 0.4], [1.0, 1.0, -2.0])
        for _ in range(20):
            u_c = FleetInput(rng.uniform(-2, 2, size=(2, 2)))
            detect(ds, x, DT)
            ds.record(x, u_c)
            x = step_fleet(x, u_c, DT)  # plant applies exactly u_c
        assert ds.residuals == [0.0] * 20
        assert ds.history == [0] * 20

    def test_deviation_fires(self):
        ds = DetectorState()
        x = fleet([0.0, 0.0, 0.0])
        u_c = FleetInput(np.array([[1.0, 0.0]]))
        detect(ds, x, DT)
        ds.record(x, u_c)
        # plant applied something else entirely
        x_next = step_fleet(x, FleetInput(np.array([[-1.0, 0.0]])), DT)
        assert detect(ds, x_next, DT) == 1
        assert ds.residuals[-1] >= ds.epsilon

    def test_fabricated_consistent_states_stay_silent(self):
        rng = np.random.default_rng(1)
        ds = DetectorState()
        x_a = fleet([0.5, 0.5, 1.0])
        for _ in range(15):
            u_c = FleetInput(rng.uniform(-2, 2, size=(1, 2)))
            detect(ds, x_a, DT)
            ds.record(x_a, u_c)
            x_a = step_fleet(x_a, u_c, DT)  # the covert fabrication map
        assert all(r == 0.0 for r in ds.residuals)

    def test_jump_when_truth_returns(self):
        ds = DetectorState()
        x_a = fleet([0.5, 0.5, 1.0])
        u_c = FleetInput(np.array([[1.0, 0.0]]))
        detect(ds, x_a, DT)
        ds.record(x_a, u_c)
        truth = fleet([-0.5, 0.2, 0.0])  # true state revealed after the window
        assert detect(ds, truth, DT) == 1

    def test_epsilon_threshold_behavior(self):
        ds = DetectorState(epsilon=0.5)
        x = fleet([0.0, 0.0, 0.0])
        detect(ds, x, DT)
        ds.record(x, FleetInput.zero(1))
        assert detect(ds, fleet([0.4, 0.0, 0.0]), DT) == 0
        ds.record(x, FleetInput.zero(1))
        assert detect(ds, fleet([0.6, 0.0, 0.0]), DT) == 1

    def test_heading_inclusion_config(self):
        full = DetectorState()
        pos_only = DetectorState(include_heading=False)
        x = fleet([0.0, 0.0, 0.0])
        for ds in (full, pos_only):
            detect(ds, x, DT)
            ds.record(x, FleetInput.zero(1))
        rotated = fleet([0.0, 0.0, 0.3])  # heading-only deviation
        assert detect(full, rotated, DT) == 1
        assert detect(pos_only, rotated, DT) == 0

    def test_invalid_epsilon(self):
        with pytest.raises(ValueError):
            DetectorState(epsilon=0.0)


class TestFlagsAt:
    def test_monotone_in_epsilon(self):
        rng = np.random.default_rng(2)
        ds = DetectorState()
        ds.residuals = list(rng.uniform(0, 1e-4, size=50))
        tight = flags_at(ds, 1e-6)
        loose = flags_at(ds, 1e-5)
        # flags at a larger threshold are a subset of those at a smaller one
        assert all(t >= l for t, l in zip(tight, loose))

    def test_matches_online_flags(self):
        ds = DetectorState()
        x = fleet([0.0, 0.0, 0.0])
        detect(ds, x, DT)
        ds.record(x, FleetInput.zero(1))
        detect(ds, fleet([1.0, 0.0, 0.0]), DT)
        assert flags_at(ds, ds.epsilon) == ds.history
