import numpy as np
import pytest

from eivh2 import (MultiplierFamily, QmiSource, RankDeficientError,
                   membership, multiplier_matrix, reduce_source, sample_delta,
                   scalar_interval, spectral_ball, stack_sources)


def benchmark_set(T=24):
    """Source stack shaped like the 4-state benchmark at N = T + 1."""
    b = 5e-4 * np.sqrt(T)
    return stack_sources([
        spectral_ball("V_X", 4, T, b),
        spectral_ball("V_X+", 4, T, b),
        spectral_ball("V_Zp", 2, T, b),
        scalar_interval("d", 0.01),
    ])


class TestConstructors:
    def test_spectral_ball_zero_bound_only_origin(self):
        src = spectral_ball("s", 2, 3, 0.0)
        assert membership(src, np.zeros((2, 3))).ok
        assert not membership(src, 1e-4 * np.ones((2, 3))).ok

    def test_benchmark_state_source(self):
        src = spectral_ball("V_X", 4, 99, 5e-4 * np.sqrt(99))
        assert src.rows == 4 and src.cols == 99
        np.testing.assert_allclose(src.Q, -np.eye(4))
        np.testing.assert_allclose(src.R, (5e-4) ** 2 * 99 * np.eye(99))

    def test_boundary_membership_at_bound(self):
        rng = np.random.default_rng(0)
        bound = 0.7
        src = spectral_ball("s", 3, 5, bound)
        u = rng.standard_normal(3)
        v = rng.standard_normal(5)
        V = bound * np.outer(u / np.linalg.norm(u), v / np.linalg.norm(v))
        report = membership(src, V)
        assert report.ok
        assert abs(report.min_eig) <= 1e-10

    def test_scalar_interval(self):
        src = scalar_interval("d", 0.01)
        assert (src.rows, src.cols) == (1, 1)
        assert membership(src, [[0.01]]).ok
        assert not membership(src, [[0.015]]).ok

    def test_negative_bound_rejected(self):
        with pytest.raises(ValueError):
            spectral_ball("s", 1, 1, -0.1)
        with pytest.raises(ValueError):
            scalar_interval("d", -1e-9)

    def test_sign_validation(self):
        with pytest.raises(ValueError, match="negative semidefinite"):
            QmiSource("bad", Q=np.eye(2), R=np.eye(2))
        with pytest.raises(ValueError, match="positive semidefinite"):
            QmiSource("bad", Q=-np.eye(2), R=-np.eye(2))


class TestStacking:
    def test_single_source_spans(self):
        uset = stack_sources([spectral_ball("s", 2, 3, 1.0)])
        assert uset.row_spans == ((0, 2),)
        assert uset.col_spans == ((0, 3),)
        assert (uset.w_dim, uset.z_dim) == (2, 3)

    def test_benchmark_dimensions(self):
        uset = benchmark_set()
        assert uset.w_dim == 4 + 4 + 2 + 1
        assert uset.z_dim == 24 + 24 + 24 + 1

    def test_two_scalar_sources(self):
        uset = stack_sources([scalar_interval("a", 1.0),
                              scalar_interval("b", 2.0)])
        delta = uset.embed([[[0.5]], [[-1.5]]])
        np.testing.assert_allclose(delta, [[0.5, 0.0], [0.0, -1.5]])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            stack_sources([])


class TestReduction:
    def test_identity_reduction_is_noop(self):
        src = spectral_ball("s", 2, 3, 0.5)
        reduced = reduce_source(src, np.eye(3))
        np.testing.assert_allclose(reduced.R, src.R)

    def test_ball_to_scalar(self):
        src = spectral_ball("s", 1, 3, 0.4)
        reduced = reduce_source(src, np.array([[1.0], [0.0], [0.0]]))
        np.testing.assert_allclose(reduced.R, [[0.16]])
        assert reduced.cols == 1

    def test_benchmark_column_drop(self):
        rng = np.random.default_rng(1)
        src = spectral_ball("V_X", 4, 99, 5e-4 * np.sqrt(99))
        E = rng.standard_normal((99, 6))
        reduced = reduce_source(src, E)
        assert reduced.cols == 6

    def test_rank_deficient_rejected(self):
        src = spectral_ball("s", 2, 3, 1.0)
        E = np.array([[1.0, 1.0], [1.0, 1.0], [0.0, 0.0]])
        with pytest.raises(RankDeficientError):
            reduce_source(src, E)

    def test_reduced_set_contains_mapped_samples(self):
        rng = np.random.default_rng(2)
        src = spectral_ball("s", 2, 3, 0.8)
        E = rng.standard_normal((3, 2))
        reduced = reduce_source(src, E)
        uset = stack_sources([src])
        for _ in range(300):
            V = sample_delta(uset, rng, mode="interior")
            assert membership(reduced, V @ E).min_eig >= -1e-10
        for _ in range(100):
            V = sample_delta(uset, rng, mode="boundary")
            assert membership(reduced, V @ E).min_eig >= -1e-8

    def test_reduced_boundary_is_approached(self):
        # Hausdorff-style gap between sampled {V E} and the reduced boundary
        # shrinks as the sample count grows.
        rng = np.random.default_rng(3)
        bound = 0.9
        src = spectral_ball("s", 1, 3, bound)
        E = rng.standard_normal((3, 2))
        reduced = reduce_source(src, E)
        M = reduced.R  # boundary: v M^-1 v' = 1 for row vectors v
        w, U = np.linalg.eigh(M)
        M_sqrt = (U * np.sqrt(w)) @ U.T
        angles = np.linspace(0.0, 2 * np.pi, 40, endpoint=False)
        boundary = np.stack([np.cos(angles), np.sin(angles)], axis=1) @ M_sqrt

        def gap(n_samples, seed):
            r = np.random.default_rng(seed)
            pts = []
            for _ in range(n_samples):
                V = r.standard_normal((1, 3))
                V *= bound / np.linalg.norm(V) * r.uniform() ** 0.5
                pts.append((V @ E).ravel())
            pts = np.array(pts)
            dists = np.linalg.norm(boundary[:, None, :] - pts[None, :, :],
                                   axis=2)
            return float(dists.min(axis=1).max())

        scale = float(np.sqrt(w[-1]))
        coarse, fine = gap(60, seed=4), gap(4000, seed=5)
        assert fine < coarse
        assert fine <= 0.2 * scale


class TestMembership:
    def test_origin(self):
        src = spectral_ball("s", 2, 2, 0.3)
        report = membership(src, np.zeros((2, 2)))
        assert report.ok
        assert report.min_eig == pytest.approx(0.09)

    def test_outside(self):
        src = spectral_ball("s", 2, 2, 0.3)
        V = 0.6 * np.outer([1.0, 0.0], [1.0, 0.0])
        assert not membership(src, V).ok

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            membership(spectral_ball("s", 2, 2, 1.0), np.zeros((3, 2)))


class TestSampling:
    def test_zero_bound_interior_is_zero(self):
        uset = stack_sources([spectral_ball("a", 2, 3, 0.0),
                              scalar_interval("d", 0.0)])
        delta = sample_delta(uset, seed=0, mode="interior")
        np.testing.assert_allclose(delta, 0.0)

    def test_boundary_tightness(self):
        uset = benchmark_set()
        delta = sample_delta(uset, seed=1, mode="boundary")
        for src, blk in zip(uset.sources, uset.extract(delta)):
            report = membership(src, blk)
            assert abs(report.min_eig) <= 1e-8

    def test_seed_determinism(self):
        uset = benchmark_set()
        a = sample_delta(uset, seed=7, mode="interior")
        b = sample_delta(uset, seed=7, mode="interior")
        np.testing.assert_array_equal(a, b)

    def test_block_diagonal_structure(self):
        uset = benchmark_set()
        delta = sample_delta(uset, seed=2, mode="interior")
        mask = np.ones_like(delta, dtype=bool)
        for (r0, r1), (c0, c1) in zip(uset.row_spans, uset.col_spans):
            mask[r0:r1, c0:c1] = False
        assert np.all(delta[mask] == 0.0)

    def test_membership_of_samples(self):
        uset = benchmark_set()
        rng = np.random.default_rng(8)
        for _ in range(200):
            delta = sample_delta(uset, rng, mode="interior")
            for src, blk in zip(uset.sources, uset.extract(delta)):
                assert membership(src, blk).ok


class TestMultipliers:
    def test_zero_tau_is_zero_matrix(self):
        fam = MultiplierFamily(benchmark_set())
        P = multiplier_matrix(fam, np.zeros(4))
        assert np.all(P == 0.0)

    def test_single_ball_structure(self):
        uset = stack_sources([spectral_ball("s", 2, 3, 0.5)])
        P = multiplier_matrix(MultiplierFamily(uset), [1.0])
        np.testing.assert_allclose(P[:2, :2], -np.eye(2))
        np.testing.assert_allclose(P[2:, 2:], 0.25 * np.eye(3))
        np.testing.assert_allclose(P[:2, 2:], 0.0)

    def test_negative_tau_rejected(self):
        fam = MultiplierFamily(benchmark_set())
        with pytest.raises(ValueError):
            multiplier_matrix(fam, [-1.0, 0.0, 0.0, 0.0])

    def test_multiplier_validity_property(self):
        # S-procedure certificate: nonneg for every admissible blockdiag delta
        uset = benchmark_set(T=6)
        fam = MultiplierFamily(uset)
        rng = np.random.default_rng(9)
        for i in range(1000):
            tau = rng.exponential(1.0, size=4)
            mode = "boundary" if i % 3 == 0 else "interior"
            delta = sample_delta(uset, rng, mode=mode)
            P = multiplier_matrix(fam, tau)
            stacked = np.vstack([delta, np.eye(uset.z_dim)])
            form = stacked.T @ P @ stacked
            assert np.linalg.eigvalsh(form)[0] >= -1e-9
