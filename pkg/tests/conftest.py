import pytest

from msfsim.adversary import AttackSpec
from msfsim.harness import ScenarioConfig, run_scenario
from msfsim.tracking import ReferenceSpec, TrackerConfig


def mini_config(**overrides) -> ScenarioConfig:
    """Small, fast scenario used across harness-level tests."""
    base = dict(
        fleet_size=4,
        duration=3.0,
        dt=0.02,
        reference=ReferenceSpec(r0=0.9, w0=0.5),
        ring_radius=1.1,
        tracker=TrackerConfig(horizon=16),
        attack=AttackSpec(kind="none"),
    )
    base.update(overrides)
    return ScenarioConfig(**base)


@pytest.fixture(scope="session")
def mini_covert_log():
    cfg = mini_config(attack=AttackSpec(kind="covert", window=(1.0, 2.0)))
    return run_scenario(cfg)


@pytest.fixture(scope="session")
def mini_attack_free_log():
    return run_scenario(mini_config())
