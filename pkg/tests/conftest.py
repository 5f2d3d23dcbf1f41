import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from lenglart.paths import CadlagPath

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("default")


def jump_path(times, jumps, x0=0.0, drift=0.0):
    """Path with the given jumps at ``times[1:]`` and a linear drift between them."""
    times = np.asarray(times, dtype=float)
    jumps = np.concatenate([[0.0], np.asarray(jumps, dtype=float)])
    values = x0 + np.cumsum(jumps) + drift * times
    left = values - jumps
    flags = jumps != 0
    return CadlagPath(times, values, left, flags, fv_continuous=True)


@st.composite
def event_times(draw, min_size=1, max_size=6):
    raw = draw(st.lists(st.floats(0.01, 0.99, allow_nan=False), min_size=min_size,
                        max_size=max_size, unique=True))
    t = np.unique(np.round(np.asarray(raw), 6))
    return np.concatenate([[0.0], t, [1.0]])


@st.composite
def pure_jump_pair(draw):
    """``(X, Z)`` on a shared event grid; ``Z`` stays strictly positive."""
    times = draw(event_times())
    k = len(times) - 1
    xj = draw(st.lists(st.floats(-3, 3, allow_nan=False), min_size=k, max_size=k))
    zf = draw(st.lists(st.floats(-0.8, 2.0, allow_nan=False), min_size=k, max_size=k))
    X = jump_path(times, xj, x0=draw(st.floats(-2, 2)))
    zvals = np.cumprod(np.concatenate([[1.0], 1.0 + np.asarray(zf)]))
    Z = CadlagPath(times, zvals, np.concatenate([[1.0], zvals[:-1]]),
                   np.concatenate([[False], np.asarray(zf) != 0]), fv_continuous=True)
    return X, Z


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)
