import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import dense_sigma, random_sre
from srecopula.basis import build_E, evaluate_basis, regular_basis
from srecopula.geometry import build_grid
from srecopula.lowrank import SRECovariance


def _instance(seed, n=50, b=5, kernel="exponential"):
    gen = np.random.default_rng(seed)
    S, E = random_sre(gen, n, b, kernel)
    return SRECovariance(S, E), dense_sigma(S, E), gen


class TestDiagonal:
    def test_zero_basis(self):
        np.testing.assert_array_equal(SRECovariance(np.zeros((4, 3)), np.eye(3)).diagonal(), 1.0)

    def test_scalar(self):
        cov = SRECovariance(np.ones((3, 1)), np.array([[4.0]]))
        np.testing.assert_allclose(cov.diagonal(), np.sqrt(5.0))

    def test_dense(self):
        cov, Sig, _ = _instance(0)
        np.testing.assert_allclose(cov.diagonal(), np.sqrt(np.diag(Sig)), rtol=1e-12)

    def test_at_least_one(self):
        cov, _, _ = _instance(1)
        assert np.all(cov.diagonal() >= 1.0)


class TestSolve:
    def test_zero_basis(self):
        v = np.arange(4.0)
        np.testing.assert_array_equal(SRECovariance(np.zeros((4, 2)), np.eye(2)).solve(v), v)

    def test_zero_vector(self):
        cov, _, _ = _instance(2)
        np.testing.assert_array_equal(cov.solve(np.zeros(50)), 0.0)

    def test_multiply_back(self):
        cov, Sig, gen = _instance(3)
        v = gen.standard_normal(50)
        assert np.max(np.abs(Sig @ cov.solve(v) - v)) < 1e-8


class TestQuadraticForm:
    def test_zero(self):
        cov, _, _ = _instance(4)
        assert cov.quadratic_form(np.zeros(50)) == 0.0

    def test_zero_basis(self):
        v = np.array([1.0, -2.0, 3.0])
        assert SRECovariance(np.zeros((3, 2)), np.eye(2)).quadratic_form(v) == pytest.approx(14.0)

    def test_dense(self):
        cov, Sig, gen = _instance(5)
        v = gen.standard_normal(50)
        assert cov.quadratic_form(v) == pytest.approx(v @ np.linalg.solve(Sig, v), rel=1e-8)


class TestLogDet:
    def test_zero_basis(self):
        assert SRECovariance(np.zeros((5, 3)), np.diag([1.0, 2.0, 3.0])).log_det() == pytest.approx(0.0, abs=1e-14)

    def test_scalar(self):
        assert SRECovariance(np.ones((1, 1)), np.array([[3.0]])).log_det() == pytest.approx(np.log(4.0))

    def test_dense(self):
        cov, Sig, _ = _instance(6)
        assert cov.log_det() == pytest.approx(np.linalg.slogdet(Sig)[1], abs=1e-8)


class TestPosterior:
    def test_mean_and_cov(self):
        cov, _, gen = _instance(7, n=20, b=3)
        w = gen.standard_normal(20)
        Q = cov.S.T @ cov.S + np.linalg.inv(cov.E)
        np.testing.assert_allclose(cov.posterior_cov(), np.linalg.inv(Q), rtol=1e-8, atol=1e-10)
        np.testing.assert_allclose(cov.posterior_mean(w), np.linalg.solve(Q, cov.S.T @ w), rtol=1e-8, atol=1e-10)


@pytest.mark.parametrize("kernel", ["exponential", "spherical"])
def test_woodbury_against_dense_random(kernel):
    gen = np.random.default_rng(100)
    for _ in range(50):
        n, b = int(gen.integers(1, 201)), int(gen.integers(1, 13))
        S, E = random_sre(gen, n, b, kernel)
        cov, Sig = SRECovariance(S, E), dense_sigma(S, E)
        v = gen.standard_normal(n)
        dense_q = v @ np.linalg.solve(Sig, v)
        assert cov.quadratic_form(v) == pytest.approx(dense_q, rel=1e-8)
        np.testing.assert_allclose(cov.solve(v), np.linalg.solve(Sig, v), rtol=1e-8, atol=1e-10)
        assert cov.log_det() == pytest.approx(np.linalg.slogdet(Sig)[1], abs=1e-8)


def test_subset_is_principal_submatrix(rng):
    S, E = random_sre(rng, 30, 4)
    rows = rng.choice(30, 12, replace=False)
    full = SRECovariance(S, E)
    np.testing.assert_allclose(full.subset(rows).dense(), dense_sigma(S, E)[np.ix_(rows, rows)], rtol=1e-14)


@given(st.floats(0.1, 50), st.floats(1.01, 3.0))
def test_diagonal_increases_with_theta_s(ts, factor):
    g = build_grid((0, 0, 1, 1), 5, 5)
    b = regular_basis((0, 0, 1, 1), (2,), (0.6,))
    S = evaluate_basis(g, b)
    d1 = SRECovariance(S, build_E(b, "exponential", ts, 0.3)).diagonal()
    d2 = SRECovariance(S, build_E(b, "exponential", ts * factor, 0.3)).diagonal()
    nz = (S**2).sum(1) > 0
    assert np.all(d2[nz] > d1[nz])


def test_shape_validation():
    with pytest.raises(ValueError):
        SRECovariance(np.zeros((3, 2)), np.eye(3))
