import numpy as np
import pytest

from deltaplan.atlas import AtlasConfig, Rect, build_atlas
from deltaplan.beacons import BeaconsEnv


def rng_of(*key) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))


@pytest.fixture(scope="session")
def beacons_env() -> BeaconsEnv:
    return BeaconsEnv()


@pytest.fixture(scope="session")
def small_atlas(beacons_env):
    """Reduced-size beacons atlas for unit tests (full size lives in acceptance)."""
    cfg = AtlasConfig(
        n_delta=512,
        n_z=128,
        threshold=1e-4,
        rect=Rect(np.array([-3.0, -2.5]), np.array([13.0, 7.0])),
    )
    return build_atlas(
        cfg,
        beacons_env.obs_model("original"),
        beacons_env.obs_model("simplified"),
        seed=20240817,
    )
