import numpy as np
import pytest

from lidarweather.frames import DEFAULT_SENSOR, Frame


def random_frame(rng, n=None, k=0, sensor=DEFAULT_SENSOR, with_object_ids=False):
    """Arbitrary (non-physical) frame for oracle tests: coordinates roughly in
    sensor range, echoes 1..3, pulses in [0, 100]."""
    if n is None:
        n = int(rng.integers(0, 400))
    x = rng.uniform(-5.0, 30.0, n)
    y = rng.uniform(-6.0, 6.0, n)
    z = rng.uniform(-2.5, 2.5, n)
    echo = rng.integers(1, 4, n)
    pulse = rng.uniform(0.0, 100.0, n)
    ids = rng.integers(-1, 5, n) if with_object_ids else None
    return Frame.from_cartesian(k, x, y, z, echo, pulse, sensor=sensor, object_ids=ids)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
