import numpy as np
import pytest

from resf_enhance.dsp import StftConfig
from resf_enhance.simulate import FfrBand


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def cfg():
    return StftConfig()


@pytest.fixture
def ffr():
    return FfrBand()


@pytest.fixture
def band(ffr, cfg):
    return ffr.bin_mask(cfg.n_fft, 16000)


def pytest_terminal_summary(terminalreporter):
    lines = [
        value
        for reports in terminalreporter.stats.values()
        for report in reports
        for key, value in getattr(report, "user_properties", [])
        if key == "acceptance" and getattr(report, "when", "call") == "call"
    ]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
