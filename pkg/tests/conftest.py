import numpy as np
import pytest

from wdnfdi.network import Junction, Network, Pipe, Tank

_ACCEPTANCE: list[str] = []


@pytest.fixture
def acceptance_log():
    """Collects one PASS/FAIL line per acceptance criterion for the summary."""
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)


def make_series(n=3, length=500.0, diameter=0.3, roughness=120.0, demand=0.01, head=80.0):
    """Tank T feeding a chain J1 - J2 - ... - Jn."""
    tanks = (Tank("T", head),)
    junctions = tuple(Junction(f"J{k}", 0.0, demand) for k in range(1, n + 1))
    names = ["T"] + [j.id for j in junctions]
    pipes = tuple(Pipe(f"P{k}", names[k - 1], names[k], length, diameter, roughness)
                  for k in range(1, n + 1))
    return Network(junctions, tanks, pipes, name="series")


@pytest.fixture
def series_net():
    return make_series()


@pytest.fixture
def loop_net():
    """Tank plus a 4-junction loop with one chord."""
    tanks = (Tank("R", 60.0),)
    junctions = tuple(Junction(f"N{k}", float(k), 0.005 * k) for k in range(1, 5))
    pipes = (
        Pipe("a", "R", "N1", 300.0, 0.4, 130.0),
        Pipe("b", "N1", "N2", 400.0, 0.3, 120.0),
        Pipe("c", "N2", "N3", 350.0, 0.25, 110.0),
        Pipe("d", "N3", "N4", 500.0, 0.2, 100.0),
        Pipe("e", "N4", "N1", 450.0, 0.25, 120.0),
        Pipe("f", "N2", "N4", 600.0, 0.15, 100.0),
    )
    return Network(junctions, tanks, pipes, name="loop")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
