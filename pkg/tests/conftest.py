import numpy as np
import pytest

from denoise_ad.data_pipeline import SyntheticSpec, generate_synthetic, write_csv

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


class ZeroRng:
    """Stand-in RNG whose draws are all 0.0, so every element is dropped."""

    def uniform(self, size):
        return np.zeros(size)


@pytest.fixture
def small_csv(tmp_path):
    series = generate_synthetic(SyntheticSpec(length=400, anomaly_rate=0.01, seed=3, name="small"))
    path = tmp_path / "small.csv"
    write_csv(series, path)
    return path
