"""Ground-truth simulation, bounded-noise corruption, and closed-loop H2.

The benchmark system is a stable 4-state plant with two performance inputs,
two measured outputs, and one constant process disturbance entering the last
state.  Measurement noise is drawn uniformly in per-instant Euclidean balls,
which keeps every retained noise block inside its spectral QMI
(``||V||_2 <= ||V||_F <= radius * sqrt(N-1)``).
"""

from __future__ import annotations

import numpy as np

from .analysis import AnalysisLft
from .data import CleanTrajectory, NoiseBounds, NoiseRecord, NoisyDataset
from .lti import LtiSystem, h2_norm


def example_system() -> LtiSystem:
    """The 4-state benchmark plant."""
    A = np.array([
        [1.0, 0.2, 0.0, 0.0],
        [-1.0, 0.5, 0.6, 0.3],
        [0.0, 0.0, 1.0, 0.2],
        [0.3, 0.15, -0.3, 0.85],
    ])
    Bp = np.array([
        [0.0, 0.0],
        [0.2, 0.0],
        [0.0, 0.0],
        [0.0, 0.1],
    ])
    Bd = np.array([[0.0], [0.0], [0.0], [0.2]])
    Cp = np.array([
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
    ])
    Dp = np.zeros((2, 2))
    return LtiSystem(A=A, Bp=Bp, Bd=Bd, Cp=Cp, Dp=Dp)


def simulate(sys: LtiSystem, x0: np.ndarray, wp: np.ndarray,
             d: float = 0.0) -> CleanTrajectory:
    """Run the exact recursion with a constant disturbance value."""
    x0 = np.asarray(x0, dtype=float).ravel()
    wp = np.atleast_2d(np.asarray(wp, dtype=float))
    if x0.size != sys.n:
        raise ValueError(f"x0 must have {sys.n} entries")
    if wp.shape[0] != sys.m_p:
        raise ValueError(f"wp must have {sys.m_p} rows")
    T = wp.shape[1]
    if T < 1:
        raise ValueError("need at least one input sample (N >= 2)")
    d_term = sys.Bd @ np.full(sys.m_d, float(d)) if sys.m_d else np.zeros(sys.n)
    states = np.zeros((sys.n, T + 1))
    states[:, 0] = x0
    for k in range(T):
        states[:, k + 1] = sys.A @ states[:, k] + sys.Bp @ wp[:, k] + d_term
    outputs = sys.Cp @ states[:, :T] + sys.Dp @ wp
    return CleanTrajectory(states=states, inputs=wp, outputs=outputs,
                           disturbance=float(d))


def _ball_noise(rng: np.random.Generator, dim: int, count: int,
                radius: float) -> np.ndarray:
    """Columns drawn uniformly from the Euclidean ball of given radius."""
    if radius == 0.0:
        return np.zeros((dim, count))
    directions = rng.standard_normal((dim, count))
    norms = np.linalg.norm(directions, axis=0)
    norms[norms == 0] = 1.0
    radii = radius * rng.uniform(0.0, 1.0, size=count) ** (1.0 / dim)
    return directions / norms * radii


def corrupt(traj: CleanTrajectory, bounds: NoiseBounds,
            seed) -> NoisyDataset:
    """Add per-instant ball-bounded measurement noise to states and outputs.

    Inputs are known exactly and stay untouched.  The realized noise blocks
    are retained so oracle tests can check QMI membership and reconstruct
    the clean data.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    N = traj.n_samples
    state_noise = _ball_noise(rng, traj.states.shape[0], N, bounds.v_x)
    output_noise = _ball_noise(rng, traj.outputs.shape[0], N - 1, bounds.v_zp)
    noise = NoiseRecord(V_X=state_noise[:, :N - 1],
                        V_Xp=state_noise[:, 1:],
                        V_Zp=output_noise,
                        d=traj.disturbance)
    return NoisyDataset(states=traj.states + state_noise,
                        inputs=traj.inputs,
                        outputs=traj.outputs + output_noise,
                        noise=noise)


def closed_loop_h2(lft: AnalysisLft, delta: np.ndarray) -> float:
    """H2 norm of the LFT closed at one frozen admissible uncertainty.

    Raises :class:`WellPosednessError` for an ill-posed closure and
    :class:`UnstableSystemError` for an unstable closed loop.
    """
    return h2_norm(*lft.close(delta))
