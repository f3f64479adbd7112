import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from uchybrid.forecast import ArmaSpec  # noqa: E402
from uchybrid.system import Generator, ProblemInstance, bundled_fleet  # noqa: E402

ARMA5 = dict(ar=(0.4, 0.2, 0.1, 0.05, 0.025), ma=(0.2, 0.1, 0.05, 0.025, 0.0125))


def random_generator(rng, k, dt=1.0):
    p_min = float(rng.uniform(10, 50))
    on = int(rng.integers(2))
    up, down = float(rng.integers(1, 4)), float(rng.integers(1, 4))
    elapsed = float(rng.integers(0, 4))
    return Generator(f"R{k}", p_min, p_min + float(rng.uniform(20, 100)),
                     (float(rng.uniform(50, 300)), float(rng.uniform(10, 30)), float(rng.uniform(0.001, 0.05))),
                     float(rng.uniform(0, 500)), up, down, on,
                     elapsed if on else 0.0, 0.0 if on else elapsed)


def random_tiny_instance(seed, G=None, T=None):
    """2-3 units, at most 12 commitment bits, hourly periods."""
    rng = np.random.default_rng(seed)
    G = G or int(rng.integers(2, 4))
    T = T or (int(rng.integers(4, 7)) if G == 2 else 4)
    fleet = [random_generator(rng, k) for k in range(G)]
    cap = sum(g.p_max for g in fleet)
    demand = rng.uniform(0.2, 1.0, T) * cap
    wind = rng.uniform(0, 30, T)
    arma = ArmaSpec((0.5,), (), float(rng.uniform(2, 15)))
    return ProblemInstance.from_fleet(fleet, demand, wind, dt=1.0, n_segments=int(rng.integers(1, 4)),
                                      demand_arma=arma, wind_arma=arma.scaled(0.5), name=f"tiny{seed}")


def desk_instance(demand=None, wind=None, G=5, sigma_d=15.0, sigma_w=10.0):
    """5-unit hourly instance used across the integration tests."""
    T = 24
    t = np.arange(T)
    if demand is None:
        demand = 700 + 300 * np.sin(np.pi * t / T) ** 2
    if wind is None:
        wind = 100 + 50 * np.cos(t / 3)
    return ProblemInstance.from_fleet(bundled_fleet()[:G], demand, wind, dt=1.0,
                                      demand_arma=ArmaSpec(sigma=sigma_d, **ARMA5),
                                      wind_arma=ArmaSpec(sigma=sigma_w, **ARMA5), name="desk")


@pytest.fixture
def desk():
    return desk_instance()


@pytest.fixture
def tiny():
    return random_tiny_instance(7)


ACCEPTANCE = {}  # criterion number -> PASS/FAIL line, filled by test_acceptance


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
