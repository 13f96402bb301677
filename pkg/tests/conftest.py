import pytest
from hypothesis import HealthCheck, settings

from derivlab.world import ScenarioConfig, build_chain

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def small_config(**kw) -> ScenarioConfig:
    base = dict(seed=7, channel_timeout_s=60, range_l2_blocks=120, noise_txs_per_block=5)
    base.update(kw)
    return ScenarioConfig(**base)


@pytest.fixture(scope="session")
def small_cfg():
    return small_config()


@pytest.fixture(scope="session")
def small_chain(small_cfg):
    return build_chain(small_cfg)


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.result_lines():
            terminalreporter.write_line(line)
