import numpy as np
import pytest

from eivh2 import NoiseBounds, corrupt, example_system, simulate

PAPER_BOUNDS = NoiseBounds(v_x=5e-4, v_zp=5e-4, d_bar=0.01)
ZERO_BOUNDS = NoiseBounds(v_x=0.0, v_zp=0.0, d_bar=0.0)


@pytest.fixture(scope="session")
def paper_system():
    return example_system()


def make_dataset(system, N, seed, bounds=PAPER_BOUNDS, disturbance=None):
    """One benchmark experiment draw: uniform x0/inputs, constant
    disturbance, ball-bounded measurement noise."""
    rng = np.random.default_rng(seed)
    x0 = rng.uniform(-1.0, 1.0, size=system.n)
    wp = rng.uniform(-1.0, 1.0, size=(system.m_p, N - 1))
    if disturbance is None:
        disturbance = (rng.uniform(-bounds.d_bar, bounds.d_bar)
                       if system.m_d else 0.0)
    traj = simulate(system, x0, wp, disturbance)
    return corrupt(traj, bounds, rng)
