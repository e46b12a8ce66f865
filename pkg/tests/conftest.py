import numpy as np
import pytest

from specmap.ingest import ChannelGrid, Measurement

TVWS = ChannelGrid(470.0, 6.0, 23)
T0 = 1_700_000_000.0


def planted_stream(site, duty, n_slots, rng, grid=TVWS, drop=0.0, samples_per_cell=1):
    """Measurements with channel c hot in a slot with probability duty[c]."""
    recs = []
    for s in range(n_slots):
        for c in range(grid.n_channels):
            if drop and rng.random() < drop:
                continue
            for _ in range(samples_per_cell):
                hot = rng.random() < duty[c]
                p = float(rng.uniform(-100.0, -60.0)) if hot else float(rng.uniform(-125.0, -108.0))
                f = grid.start_mhz + (c + float(rng.uniform(0.0, 0.999))) * grid.channel_width_mhz
                t = T0 + s + float(rng.uniform(0.0, 0.999))
                recs.append(Measurement(t, site, 42.0, -93.6, f, p))
    return recs


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def two_site_fixture():
    """23-channel x 900-slot two-site stream with planted duty cycles and gaps."""
    rng = np.random.default_rng(2024)
    duty_a = np.linspace(0.0, 1.0, TVWS.n_channels)
    duty_b = duty_a[::-1].copy()
    a = planted_stream("suburban", duty_a, 900, rng, drop=0.03, samples_per_cell=2)
    b = planted_stream("farm", duty_b, 900, rng, drop=0.03)
    # pin both windows to start at T0 exactly
    a[0] = Measurement(T0, "suburban", 42.0, -93.6, 470.0, -150.0)
    b[0] = Measurement(T0, "farm", 42.0, -93.6, 470.0, -150.0)
    return a, b


ACCEPTANCE_LINES = []


def record_criterion(label, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} {label}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def harmonic_bench():
    """Kriging / NN / PINN on the five benchmark seeds, with total wall-clock."""
    import time

    from specmap.benchmark import harmonic_test_set, run_harmonic

    test = harmonic_test_set()
    t0 = time.perf_counter()
    runs = [run_harmonic(seed, test=test) for seed in range(5)]
    return runs, time.perf_counter() - t0
