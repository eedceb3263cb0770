"""Covariance and eigenvalue tests against brute-force oracles."""

import numpy as np
import pytest

from hdcovtest.covariance import (
    DataMatrix,
    sample_covariance,
    shrink,
    sym_eigenvalues,
)
from hdcovtest.errors import DomainError
from hdcovtest.rmt import ShrinkageParams


def _brute_force_covariance(x):
    """Double-loop centered covariance with divisor n - 1."""
    n, p = x.shape
    mean = x.mean(axis=0)
    out = np.zeros((p, p))
    for i in range(n):
        d = x[i] - mean
        for a in range(p):
            for b in range(p):
                out[a, b] += d[a] * d[b]
    return out / (n - 1)


def _charpoly_eigenvalues(m):
    """Characteristic polynomial by the trace recursion, then its roots.

    A completely different algorithm from the symmetric eigensolver: builds
    the monic characteristic coefficients c_k via M_k = A (M_{k-1} + c_{k-1} I),
    c_k = -tr(A M_{k-1} + c_{k-1} A)/k, and solves the polynomial.
    """
    a = np.asarray(m, dtype=float)
    p = a.shape[0]
    coeffs = [1.0]
    mk = np.zeros_like(a)
    ck = 1.0
    for k in range(1, p + 1):
        mk = a @ mk + ck * a
        ck = -np.trace(mk) / k
        coeffs.append(ck)
    roots = np.roots(coeffs)
    return np.sort(roots.real)[::-1]


def _random_orthogonal(p, rng):
    q, r = np.linalg.qr(rng.standard_normal((p, p)))
    return q * np.sign(np.diag(r))


class TestSampleCovariance:
    def test_identical_rows_give_zero(self):
        x = np.tile([1.5, -2.0, 7.0], (6, 1))
        s = sample_covariance(x)
        assert np.all(s.matrix == 0.0)

    def test_hand_variance(self):
        s = sample_covariance(np.array([[0.0], [1.0], [2.0]]))
        assert s.matrix == pytest.approx(np.array([[1.0]]))
        assert s.n_tilde == 2

    def test_brute_force_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            x = rng.standard_normal((5, 3))
            s = sample_covariance(x)
            np.testing.assert_allclose(s.matrix, _brute_force_covariance(x), atol=1e-12)

    def test_gram_structure(self):
        # centered orthonormal rows scaled by sqrt(n-1) make S the identity
        rng = np.random.default_rng(11)
        n, p = 9, 4
        x = rng.standard_normal((n, p))
        x -= x.mean(axis=0)
        u, _, vt = np.linalg.svd(x, full_matrices=False)
        whitened = (u @ vt) * np.sqrt(n - 1)
        s = sample_covariance(whitened)
        np.testing.assert_allclose(s.matrix, np.eye(p), atol=1e-10)

    def test_row_permutation_invariance(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((8, 4))
        perm = rng.permutation(8)
        np.testing.assert_allclose(
            sample_covariance(x).matrix, sample_covariance(x[perm]).matrix, atol=1e-12
        )

    def test_rotation_equivariance(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((10, 5))
        q = _random_orthogonal(5, rng)
        lhs = sample_covariance(x @ q).matrix
        rhs = q.T @ sample_covariance(x).matrix @ q
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_psd_and_symmetric(self):
        rng = np.random.default_rng(13)
        x = rng.standard_normal((12, 6))
        s = sample_covariance(x).matrix
        np.testing.assert_allclose(s, s.T, atol=1e-14)
        eigs = np.linalg.eigvalsh(s)
        assert eigs.min() >= -1e-10 * max(1.0, eigs.max())

    def test_input_validation(self):
        with pytest.raises(DomainError):
            sample_covariance(np.ones((1, 3)))
        with pytest.raises(DomainError):
            sample_covariance(np.array([[1.0, np.nan], [0.0, 1.0]]))
        with pytest.raises(DomainError):
            DataMatrix(np.ones(5))


class TestShrink:
    def test_identity_shrinkage(self):
        rng = np.random.default_rng(2)
        s = sample_covariance(rng.standard_normal((10, 4)))
        out = shrink(s, ShrinkageParams(1.0))
        np.testing.assert_array_equal(out.matrix, s.matrix)

    def test_full_shrinkage_limit(self):
        rng = np.random.default_rng(2)
        s = sample_covariance(rng.standard_normal((10, 4)))
        out = shrink(s, ShrinkageParams(1e-12))
        np.testing.assert_allclose(out.matrix, np.eye(4), atol=1e-10)

    def test_diag_example(self):
        from hdcovtest.covariance import SampleCovariance

        handmade = SampleCovariance(matrix=np.diag([3.0, 1.0]), n_tilde=9)
        out = shrink(handmade, ShrinkageParams(0.5))
        np.testing.assert_allclose(out.matrix, np.diag([2.0, 1.0]), atol=1e-15)

    def test_spectrum_map(self):
        rng = np.random.default_rng(17)
        s = sample_covariance(rng.standard_normal((20, 6)))
        lam = 0.3
        shrunk = shrink(s, ShrinkageParams(lam))
        got = sym_eigenvalues(shrunk.matrix)
        want = lam * sym_eigenvalues(s.matrix) + (1 - lam)
        np.testing.assert_allclose(got, want, atol=1e-10)

    def test_positive_definite_floor(self):
        # smallest eigenvalue of the shrunken matrix is at least 1 - lam
        rng = np.random.default_rng(23)
        x = rng.standard_normal((5, 8))  # rank deficient: p > n
        s = sample_covariance(x)
        lam = 0.7
        eigs = sym_eigenvalues(shrink(s, ShrinkageParams(lam)).matrix)
        assert eigs[-1] >= (1 - lam) - 1e-10

    def test_shape_validation(self):
        with pytest.raises(DomainError):
            shrink(np.ones((3, 4)), ShrinkageParams(0.5))


class TestSymEigenvalues:
    def test_identity(self):
        np.testing.assert_array_equal(sym_eigenvalues(np.eye(5)), np.ones(5))

    def test_two_by_two(self):
        got = sym_eigenvalues(np.array([[2.0, 1.0], [1.0, 2.0]]))
        np.testing.assert_allclose(got, [3.0, 1.0], atol=1e-14)

    def test_descending_and_trace(self):
        rng = np.random.default_rng(29)
        a = rng.standard_normal((7, 7))
        m = a + a.T
        eigs = sym_eigenvalues(m)
        assert np.all(np.diff(eigs) <= 1e-12)
        assert eigs.sum() == pytest.approx(np.trace(m), rel=1e-10)

    def test_charpoly_oracle(self):
        rng = np.random.default_rng(31)
        for _ in range(10):
            a = rng.standard_normal((6, 6))
            m = 0.5 * (a + a.T)
            got = sym_eigenvalues(m)
            want = _charpoly_eigenvalues(m)
            np.testing.assert_allclose(got, want, atol=1e-8)

    def test_rotation_invariance(self):
        rng = np.random.default_rng(37)
        a = rng.standard_normal((6, 6))
        m = a + a.T
        q = _random_orthogonal(6, rng)
        np.testing.assert_allclose(
            sym_eigenvalues(q.T @ m @ q), sym_eigenvalues(m), atol=1e-8
        )

    def test_determinant_consistency(self):
        rng = np.random.default_rng(41)
        a = rng.standard_normal((5, 5))
        m = a @ a.T + 0.5 * np.eye(5)
        eigs = sym_eigenvalues(m)
        assert np.prod(eigs) == pytest.approx(np.linalg.det(m), rel=1e-8)

    def test_rejects_nonsymmetric(self):
        with pytest.raises(DomainError):
            sym_eigenvalues(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_rejects_nonsquare(self):
        with pytest.raises(DomainError):
            sym_eigenvalues(np.ones((2, 3)))
