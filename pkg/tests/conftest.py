import numpy as np
import pytest

from lanelock import synth
from lanelock.imagestore import GeoPose


@pytest.fixture(scope="session")
def world():
    return synth.make_world(seed=11)


@pytest.fixture(scope="session")
def small_world():
    # compact world for fast unit tests
    return synth.make_world(seed=4, size=1400)


@pytest.fixture(scope="session")
def grid_store(world, tmp_path_factory):
    """3x3 store of 480px views around the world origin."""
    root = tmp_path_factory.mktemp("grid_store")
    store = synth.build_store(root, world, world.origin, step=1e-4, n=3, width=480, height=480)
    return store


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


def make_textured(seed: int, size: int = 128) -> np.ndarray:
    """Small single-channel test image with block texture."""
    r = np.random.default_rng(seed)
    img = np.full((size, size), 100, dtype=np.uint8)
    for _ in range(40):
        w = int(r.integers(6, 30))
        h = int(r.integers(6, 30))
        x = int(r.integers(0, size - w))
        y = int(r.integers(0, size - h))
        img[y : y + h, x : x + w] = int(r.integers(20, 230))
    return img


@pytest.fixture()
def textured():
    return make_textured(7)
