import numpy as np
import pytest

from pontryagin.geomkit import PolyLoop
from pontryagin.mapdsl import builtin
from pontryagin.preimage import FramedLoop, FramedLoops, PontryaginManifold, pontryagin_manifold


def circle_manifold(samples: int = 256, radius: float = 1.0, center=(0.0, 0.0, 0.0)) -> PontryaginManifold:
    """Circle in a horizontal plane framed by (vertical, radial) normals.

    The order makes (ω1, ω2, tangent) a positive basis, the orientation
    convention of traced fibers.
    """
    t = np.linspace(0.0, 2 * np.pi, samples + 1)
    t[-1] = 0.0
    c = np.asarray(center, dtype=float)
    pts = c + radius * np.c_[np.cos(t), np.sin(t), np.zeros_like(t)]
    radial = np.c_[np.cos(t), np.sin(t), np.zeros_like(t)]
    up = np.tile([0.0, 0.0, 1.0], (len(t), 1))
    frames = np.stack([up, radial], axis=2)
    loop = FramedLoop(PolyLoop(pts), frames)
    return PontryaginManifold(1, 2, None, FramedLoops(3, (loop,)))


@pytest.fixture(scope="session")
def hopf_manifold() -> PontryaginManifold:
    return pontryagin_manifold(builtin("hopf"), 2, 1, rng_seed=1)


@pytest.fixture(scope="session")
def circle():
    return circle_manifold()


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(request) -> list:
    return request.config.stash.setdefault(_ACCEPTANCE, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
