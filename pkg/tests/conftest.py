import numpy as np
import pytest

from osiris.wavegen.dataset import Dataset, generate_dataset
from osiris.wavegen.interferers import InterferenceClass

ACCEPTANCE_KEY = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(ACCEPTANCE_KEY, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(results):
        ok, detail = results[num]
        terminalreporter.write_line(f"criterion {num:>2}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def record_criterion(request):
    """Store one acceptance verdict for the terminal summary."""
    store = request.config.stash[ACCEPTANCE_KEY]

    def record(num: int, ok: bool, detail: str = ""):
        store[num] = (bool(ok), detail)
        print(f"criterion {num}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok

    return record


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """Every class at one SNR and all five SIRs, 2 records per cell (70 records)."""
    path = tmp_path_factory.mktemp("data") / "small.osds"
    generate_dataset(list(InterferenceClass), [4.0], [-10.0, -5.0, 0.0, 5.0, 10.0], 2, 77, path, workers=1)
    return Dataset(path)


@pytest.fixture(scope="session")
def three_class_dataset(tmp_path_factory):
    """Noise, Radar and WiFi at SIR -10 dB and SNR 4 dB, 128 records per class."""
    path = tmp_path_factory.mktemp("data3") / "three.osds"
    classes = [InterferenceClass.Noise, InterferenceClass.Radar, InterferenceClass.WiFi]
    generate_dataset(classes, [4.0], [-10.0], 128, 2024, path)
    return Dataset(path)
