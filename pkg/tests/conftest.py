import numpy as np
import pytest

from privemb.datagen import SynthParams, synth_graph

# One verdict line per release-gate check, echoed after the run summary so
# they stay visible without -s.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_synth():
    """A small planted graph shared by tests that only need shapes/behavior,
    not statistical power."""
    params = SynthParams(n=60, private_classes=2, utility_classes=3,
                         p_in=0.3, p_out=0.05, rho=0.4, flip_rate=0.1, seed=11)
    return synth_graph(params)


@pytest.fixture(scope="session")
def default_synth():
    return synth_graph(SynthParams(seed=1))


def assert_close(a, b, tol=1e-9):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    assert a.shape == b.shape, f"shape {a.shape} vs {b.shape}"
    err = np.max(np.abs(a - b)) if a.size else 0.0
    assert err <= tol, f"max abs err {err:.3e} > {tol:.1e}"
