import numpy as np
import pytest

from sramtrng.config import load
from sramtrng.faultmodel import FaultModelConfig, SramBlock, SramGeometry, build_block


def custom_block(v_meta, config=None, d_prob=0.0, a_slope=2.0, seed=0, stored=None):
    """Block with hand-picked cell parameters (one bank)."""
    v_meta = np.atleast_2d(np.asarray(v_meta, dtype=float))
    rows, cols = v_meta.shape
    config = config or FaultModelConfig(d_max=0.0)
    geom = SramGeometry(rows, cols, 1)
    stored = np.ones((rows, cols), np.uint8) if stored is None else np.asarray(stored, np.uint8)
    return SramBlock(geom, config, seed, v_meta, np.full_like(v_meta, a_slope),
                     np.broadcast_to(np.asarray(d_prob, float), v_meta.shape).copy(),
                     stored.copy())


@pytest.fixture(scope="session")
def shipped():
    return load()


@pytest.fixture
def small_block(shipped):
    return build_block(shipped.seed, SramGeometry(64, 16, 1), shipped.fault_model)
