import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from srecopula.marginals import (
    GaussianAdditive,
    LGMultiplicative,
    LogGaussian,
    SkewGaussian,
    make_data_model,
    make_marginal,
    sg_moments_from_params,
    sg_params_from_moments,
    sn_cdf,
    sn_from_score,
    sn_score,
)
from srecopula.priors import default_priors

mp.mp.dps = 40
U99 = np.linspace(0.01, 0.99, 99)


def mp_sn_cdf(h, lam):
    """Skew-normal cdf by high-precision quadrature of 2 phi(t) Phi(lam t).

    The integral runs over s = h - t so that the nodes concentrate where the
    integrand lives in the far lower tail.
    """
    h, lam = mp.mpf(h), mp.mpf(lam)
    f = lambda s: 2 * mp.npdf(h - s) * mp.ncdf(lam * (h - s))  # noqa: E731
    return mp.quad(f, [0, 0.01, 0.05, 0.1, 0.3, 1, 3, mp.inf])


def quad_line(f, centre, **kw):
    """Integral over the real line split at ``centre``."""
    kw.setdefault("limit", 400)
    return integrate.quad(f, -np.inf, centre, **kw)[0] + integrate.quad(f, centre, np.inf, **kw)[0]


class TestLogGaussian:
    m = LogGaussian(np.log(1000.0), 0.1)

    def test_mean(self):
        assert self.m.mean() == pytest.approx(1000.0)

    def test_median(self):
        assert self.m.ppf(0.5) == pytest.approx(np.exp(np.log(1000) - 0.005), rel=1e-14)

    @pytest.mark.parametrize("u", [0.01, 0.5, 0.99])
    def test_roundtrip(self, u):
        assert self.m.cdf(self.m.ppf(u)) == pytest.approx(u, abs=1e-12)

    def test_roundtrip_grid(self):
        assert np.max(np.abs(self.m.cdf(self.m.ppf(U99)) - U99)) < 1e-9

    def test_outside_support(self):
        assert self.m.pdf(-1.0) == 0.0 and self.m.cdf(0.0) == 0.0 and self.m.sf(-2.0) == 1.0

    @pytest.mark.parametrize("u", [0.0, 1.0, -0.1, 1.5])
    def test_ppf_domain(self, u):
        with pytest.raises(ValueError):
            self.m.ppf(u)

    def test_matches_scipy(self):
        y = np.linspace(800, 1300, 7)
        ref = stats.lognorm(s=0.1, scale=np.exp(np.log(1000) - 0.005))
        np.testing.assert_allclose(self.m.logpdf(y), ref.logpdf(y), rtol=1e-12)
        np.testing.assert_allclose(self.m.cdf(y), ref.cdf(y), rtol=1e-12)

    def test_moments_by_quadrature(self):
        m = LogGaussian(1.0, 0.5)
        mean = integrate.quad(lambda y: y * m.pdf(y), 0, np.inf)[0]
        var = integrate.quad(lambda y: (y - mean) ** 2 * m.pdf(y), 0, np.inf)[0]
        assert mean == pytest.approx(m.mean(), rel=1e-8)
        assert var == pytest.approx(m.var(), rel=1e-8)

    def test_bad_sigma(self):
        with pytest.raises(ValueError):
            LogGaussian(0.0, 0.0)


class TestSkewNormalCore:
    @pytest.mark.parametrize("lam", [-5.0, -0.7, 0.0, 2.0, 5.0])
    @pytest.mark.parametrize("h", [-6.0, -3.0, -1.0, 0.0, 0.8, 2.5, 6.0])
    def test_cdf_against_quadrature(self, h, lam):
        from srecopula.marginals import _lower_tail

        ref = float(mp_sn_cdf(h, lam))
        assert float(_lower_tail(np.array(h), lam)) == pytest.approx(ref, rel=1e-8, abs=1e-300)

    @pytest.mark.parametrize("h", [-1.0, -2.0, -3.0])
    def test_thin_tail_relative_accuracy(self, h):
        # for lam = 5 and h < 0 the lower tail is far below Phi(h)
        from srecopula.marginals import _lower_tail

        ref = float(mp_sn_cdf(h, 5.0))
        assert float(_lower_tail(np.array(h), 5.0)) == pytest.approx(ref, rel=1e-8)

    def test_zero_lambda_is_normal(self):
        h = np.linspace(-4, 4, 17)
        np.testing.assert_allclose(sn_cdf(h, 0.0), stats.norm.cdf(h), rtol=1e-14)

    @pytest.mark.parametrize("lam", [-5.0, 0.0, 0.3, 5.0, 20.0])
    def test_score_inverse(self, lam):
        z = np.linspace(-7.9, 7.9, 81)
        np.testing.assert_allclose(sn_score(sn_from_score(z, lam), lam), z, atol=1e-9)


class TestSkewGaussian:
    @pytest.mark.parametrize("lam", [-5.0, 0.0, 5.0])
    def test_pdf_integrates_to_one(self, lam):
        m = SkewGaussian(np.log(1000.0), 100.0, lam)
        total = quad_line(m.pdf, m.psi)
        assert total == pytest.approx(1.0, abs=1e-8)

    def test_symmetric_case(self):
        m = SkewGaussian(np.log(50.0), 3.0, 0.0)
        assert m.psi == pytest.approx(50.0) and m.omega == pytest.approx(3.0)
        assert m.cdf(m.psi) == pytest.approx(0.5, abs=1e-15)

    def test_zeta(self):
        lam = -5.0
        assert lam / np.sqrt(1 + lam**2) == pytest.approx(-0.980581, abs=1e-6)

    @pytest.mark.parametrize("lam", [-5.0, -1.0, 0.5, 5.0])
    def test_moments_by_quadrature(self, lam):
        psi, omega, _ = sg_params_from_moments(1000.0, 100.0**2, lam)
        m = SkewGaussian(np.log(1000.0), 100.0, lam)
        assert (m.psi, m.omega) == pytest.approx((psi, omega))
        pdf = lambda y: m.pdf(y)  # noqa: E731
        mean = quad_line(lambda y: y * pdf(y), psi)
        var = quad_line(lambda y: (y - mean) ** 2 * pdf(y), psi)
        assert mean == pytest.approx(1000.0, rel=1e-6)
        assert var == pytest.approx(100.0**2, rel=1e-6)

    @given(st.floats(-1e4, 1e4), st.floats(1e-3, 1e4), st.floats(-30, 30))
    def test_moment_map_identity(self, mean, sd, lam):
        psi, omega, _ = sg_params_from_moments(mean, sd**2, lam)
        m2, v2 = sg_moments_from_params(psi, omega, lam)
        p2, o2, _ = sg_params_from_moments(m2, v2, lam)
        assert p2 == pytest.approx(psi, rel=1e-10, abs=1e-10 * omega)
        assert o2 == pytest.approx(omega, rel=1e-10)

    @pytest.mark.parametrize("lam", [-5.0, -0.5, 0.0, 3.0, 5.0])
    def test_roundtrip_grid(self, lam):
        m = SkewGaussian(np.log(1000.0), 100.0, lam)
        assert np.max(np.abs(m.cdf(m.ppf(U99)) - U99)) < 1e-9

    @pytest.mark.parametrize("lam", [-5.0, 0.0, 5.0])
    def test_tabulated_gap(self, lam):
        exact = SkewGaussian(np.log(1000.0), 100.0, lam)
        tab = SkewGaussian(np.log(1000.0), 100.0, lam, tabulated=True)
        y = np.linspace(exact.ppf(1e-6), exact.ppf(1 - 1e-6), 5001)
        assert np.max(np.abs(tab.cdf(y) - exact.cdf(y))) < 1e-4
        u = np.linspace(1e-6, 1 - 1e-6, 2001)
        assert np.max(np.abs(exact.cdf(tab.ppf(u)) - u)) < 1e-4

    def test_tabulated_falls_back_outside_range(self):
        exact = SkewGaussian(0.0, 1.0, 5.0)
        tab = SkewGaussian(0.0, 1.0, 5.0, tabulated=True)
        y = exact.ppf(np.array([1e-9, 1 - 1e-9]))
        np.testing.assert_allclose(tab.score(y), exact.score(y), rtol=1e-12)

    @pytest.mark.parametrize("lam", [-5.0, 5.0])
    def test_cdf_strictly_increasing(self, lam):
        m = SkewGaussian(np.log(1000.0), 100.0, lam)
        y = np.linspace(m.ppf(1e-8), m.ppf(1 - 1e-8), 20001)
        assert np.all(np.diff(m.cdf(y)) > 0) or np.all(np.diff(m.score(y)) > 0)
        assert np.all(np.diff(m.score(y)) > 0)


class TestPriorDrawn:
    def test_pdfs_integrate_to_one(self):
        gen = np.random.default_rng(8)
        lg = default_priors("lg", "gau")
        sg = default_priors("sg", "gau")
        for _ in range(10):
            s = float(np.clip(lg["sigma_p"].sample(gen), 0.02, 3.0))
            m = LogGaussian(gen.uniform(-3, 8), s)
            med = float(m.ppf(0.5))
            tot = integrate.quad(m.pdf, 0, med, limit=400)[0] + integrate.quad(m.pdf, med, np.inf, limit=400)[0]
            assert tot == pytest.approx(1.0, abs=1e-8)
            s = float(np.clip(sg["sigma_p"].sample(gen), 1.0, 1e4))
            m = SkewGaussian(gen.uniform(0, 8), s, float(sg["lambda"].sample(gen)))
            tot = quad_line(m.pdf, m.psi)
            assert tot == pytest.approx(1.0, abs=1e-8)
            assert np.all(m.pdf(np.linspace(m.psi - 5 * s, m.psi + 5 * s, 50)) >= 0)


class TestMakeMarginal:
    def test_lg_rejects_lambda(self):
        with pytest.raises(ValueError):
            make_marginal("lg", 0.0, 1.0, lam=1.0)

    def test_sg_requires_lambda(self):
        with pytest.raises(ValueError):
            make_marginal("sg", 0.0, 1.0)

    def test_unknown(self):
        with pytest.raises(ValueError):
            make_marginal("gamma", 0.0, 1.0)


class TestDataModels:
    def test_gaussian_mode(self):
        assert GaussianAdditive.logpdf(3.0, 3.0, 2.0) == pytest.approx(-0.5 * np.log(2 * np.pi * 4.0))

    @given(st.floats(-100, 100), st.floats(-100, 100), st.floats(0.01, 10))
    def test_gaussian_symmetric(self, z, y, s):
        assert GaussianAdditive.logpdf(z, y, s) == GaussianAdditive.logpdf(y, z, s)

    @pytest.mark.parametrize("y,s", [(1000.0, 0.0224), (2.0, 0.5), (0.01, 1.0)])
    def test_lg_unbiased(self, y, s):
        f = lambda z: z * np.exp(LGMultiplicative.logpdf(z, y, s))  # noqa: E731
        med = y * np.exp(-0.5 * s * s)
        ez = integrate.quad(f, 0, med, limit=400)[0] + integrate.quad(f, med, np.inf, limit=400)[0]
        assert ez == pytest.approx(y, rel=1e-8)

    def test_lg_rejects_nonpositive_latent(self):
        with pytest.raises(ValueError):
            LGMultiplicative.logpdf(1.0, 0.0, 0.1)

    def test_sampling_unbiased(self, rng):
        y = np.full(200_000, 5.0)
        for dm in (LGMultiplicative, GaussianAdditive):
            z = dm.sample(y, 0.3, rng)
            assert abs(z.mean() - 5.0) < 4 * z.std() / np.sqrt(z.size)

    @pytest.mark.parametrize("name", ["lg-multiplicative", "gaussian-additive"])
    def test_factory(self, name):
        assert make_data_model(name).name == name

    def test_factory_unknown(self):
        with pytest.raises(ValueError):
            make_data_model("poisson")
