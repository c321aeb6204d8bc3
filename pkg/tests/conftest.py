import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from deeplse.network import DeepLseNet, LayerParams, init

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_net(rng: np.random.Generator, depth=None, widths=None, d=None, spread=1.0) -> DeepLseNet:
    """Network with every raw parameter drawn at random (skips and temperatures varied)."""
    depth = depth or int(rng.integers(1, 4))
    d = d or int(rng.integers(1, 4))
    widths = widths or [int(rng.integers(1, 5)) for _ in range(depth)]
    layers = []
    for ell, k in enumerate(widths):
        a = rng.normal(0, spread, size=(k, d))
        b = rng.normal(0, spread, size=k)
        eta = None if ell == 0 else rng.normal(-0.5, 1.0, size=k)
        layers.append(LayerParams(a, b, eta, float(rng.normal(-0.5, 1.0))))
    return DeepLseNet(tuple(layers), float(rng.normal()), d)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_net():
    return init(2, [3, 3], 1, seed=7)


# acceptance-criterion verdicts, echoed at the end of the run
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
