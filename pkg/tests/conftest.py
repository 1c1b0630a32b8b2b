import dataclasses

import pytest

from piezoleg.harness.calibration import calibrate
from piezoleg.harness.config import ExperimentConfig
from piezoleg.harness.models import identify

SEED = 7


@pytest.fixture(scope="session")
def config():
    return ExperimentConfig(seed=SEED)


@pytest.fixture(scope="session")
def calibration(config):
    return calibrate(config)


@pytest.fixture(scope="session")
def bundle(config, calibration):
    return identify(config, calibration)


@pytest.fixture(scope="session")
def small_config(config):
    """Short trials on a reduced grid, for sweep plumbing tests."""
    gait = dataclasses.replace(config.gait, freqs=(30.0, 50.0), S1=(50.0, 70.0),
                               S2=(0.0, 25.0), S3=(50.0,))
    harness = dataclasses.replace(config.harness, strides=4, transient_strides=1)
    return dataclasses.replace(config, gait=gait, harness=harness)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for key in ("passed", "failed", "xfailed", "xpassed"):
        for rep in terminalreporter.stats.get(key, []):
            lines += [v for k, v in getattr(rep, "user_properties", ()) if k == "criterion"]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
