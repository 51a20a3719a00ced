import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from oracles import dense_gau_copula_logpdf, dense_process_logpdf, dense_sigma, dense_t_copula_logpdf, random_sre
from srecopula.copulas import (
    ClampCounter,
    Copula,
    gau_anamorphosis,
    gau_anamorphosis_inverse,
    gau_sre_copula_logdensity,
    mvn_logpdf_sre,
    mvt_logpdf_sre,
    process_logdensity,
    t_anamorphosis,
    t_anamorphosis_inverse,
    t_sre_copula_logdensity,
)
from srecopula.lowrank import SRECovariance
from srecopula.marginals import LogGaussian, SkewGaussian


def _cov(rng, n, b, kernel="exponential"):
    S, E = random_sre(rng, n, b, kernel)
    return SRECovariance(S, E), dense_sigma(S, E)


class TestCopulaTag:
    def test_t_requires_nu(self):
        with pytest.raises(ValueError):
            Copula("t")

    @pytest.mark.parametrize("nu", [2.0, 1.5, -1.0])
    def test_t_requires_nu_above_two(self, nu):
        with pytest.raises(ValueError):
            Copula("t", nu)

    def test_unknown(self):
        with pytest.raises(ValueError):
            Copula("clayton")


class TestCopulaDensity:
    def test_single_location_is_uniform(self, rng):
        cov, _ = _cov(rng, 1, 3)
        for u in (0.01, 0.3, 0.999):
            assert gau_sre_copula_logdensity([u], cov) == pytest.approx(0.0, abs=1e-12)
            assert t_sre_copula_logdensity([u], cov, 5.0) == pytest.approx(0.0, abs=1e-12)

    def test_empty(self, rng):
        cov, _ = _cov(rng, 3, 2)
        assert gau_sre_copula_logdensity(np.zeros(0), cov.subset([])) == 0.0

    def test_zero_basis_is_independence(self, rng):
        S = np.zeros((6, 3))
        cov = SRECovariance(S, np.eye(3))
        u = rng.random(6)
        assert gau_sre_copula_logdensity(u, cov) == pytest.approx(0.0, abs=1e-12)
        # the t copula keeps dependence through the shared scale even when S = 0
        ref = dense_t_copula_logpdf(u, np.eye(6), 6.0)
        assert t_sre_copula_logdensity(u, cov, 6.0) == pytest.approx(ref, rel=1e-8)

    @pytest.mark.parametrize("kernel", ["exponential", "spherical"])
    @pytest.mark.parametrize("seed", range(5))
    def test_gau_matches_dense(self, kernel, seed):
        rng = np.random.default_rng(seed)
        cov, Sigma = _cov(rng, 12, 4, kernel)
        u = rng.uniform(0.001, 0.999, 12)
        assert gau_sre_copula_logdensity(u, cov) == pytest.approx(dense_gau_copula_logpdf(u, Sigma), rel=1e-8, abs=1e-8)

    @pytest.mark.parametrize("nu", [2.5, 4.0, 30.0])
    @pytest.mark.parametrize("seed", range(4))
    def test_t_matches_dense(self, nu, seed):
        rng = np.random.default_rng(100 + seed)
        cov, Sigma = _cov(rng, 10, 3)
        u = rng.uniform(0.001, 0.999, 10)
        assert t_sre_copula_logdensity(u, cov, nu) == pytest.approx(dense_t_copula_logpdf(u, Sigma, nu), rel=1e-8, abs=1e-8)

    def test_t_approaches_gaussian(self, rng):
        cov, _ = _cov(rng, 8, 3)
        u = rng.uniform(0.05, 0.95, 8)
        assert t_sre_copula_logdensity(u, cov, 1e6) == pytest.approx(gau_sre_copula_logdensity(u, cov), abs=1e-3)

    def test_clamped_probabilities_stay_finite(self, rng):
        cov, _ = _cov(rng, 4, 2)
        counter = ClampCounter()
        u = np.array([0.0, 1.0, 1e-300, 0.5])
        assert np.isfinite(gau_sre_copula_logdensity(u, cov, counter))
        assert np.isfinite(t_sre_copula_logdensity(u, cov, 4.0, counter))
        assert counter.count == 6


class TestScaleMixture:
    @pytest.mark.parametrize("nu", [3.0, 7.5])
    def test_mvt_is_gamma_mixture_of_normals(self, rng, nu):
        cov, Sigma = _cov(rng, 5, 2)
        v = rng.standard_normal(5) * 1.5
        q = cov.quadratic_form(v)
        k = 5

        def integrand(g):
            return np.exp(
                stats.gamma.logpdf(g, 0.5 * nu, scale=2.0 / nu)
                + 0.5 * k * np.log(g) - 0.5 * g * q - 0.5 * cov.log_det() - 0.5 * k * np.log(2 * np.pi)
            )

        val = integrate.quad(integrand, 0, np.inf, limit=200, epsrel=1e-12)[0]
        assert mvt_logpdf_sre(v, cov, nu) == pytest.approx(np.log(val), abs=1e-9)

    def test_mvn_matches_scipy(self, rng):
        cov, Sigma = _cov(rng, 9, 4)
        w = rng.standard_normal(9)
        assert mvn_logpdf_sre(w, cov) == pytest.approx(stats.multivariate_normal(np.zeros(9), Sigma).logpdf(w), rel=1e-10)


class TestAnamorphosis:
    m = LogGaussian(np.log(1000.0), 0.1)

    def test_median_maps_to_zero(self):
        med = self.m.ppf(0.5)
        assert gau_anamorphosis(med, self.m, 3.0) == pytest.approx(0.0, abs=1e-12)
        assert t_anamorphosis(med, self.m, 3.0, 4.0) == pytest.approx(0.0, abs=1e-12)

    def test_one_sd_point_scales(self):
        y = self.m.ppf(stats.norm.cdf(1.0))
        assert gau_anamorphosis(y, self.m, 2.0) == pytest.approx(2.0, rel=1e-12)

    def test_t_quantile(self):
        y = self.m.ppf(0.9)
        assert t_anamorphosis(y, self.m, 1.0, 4.0) == pytest.approx(stats.t.ppf(0.9, 4.0), rel=1e-12)
        assert t_anamorphosis(y, self.m, 1.0, 4.0) == pytest.approx(1.5332062740589, rel=1e-12)

    @given(st.floats(-7.5, 7.5), st.floats(0.1, 10))
    def test_gau_roundtrip(self, z, sd):
        y = gau_anamorphosis_inverse(z * sd, self.m, sd)
        assert gau_anamorphosis(y, self.m, sd) == pytest.approx(z * sd, abs=1e-9 * sd)

    def test_scores_beyond_clamp_saturate(self):
        from srecopula.special import Z_CLAMP

        counter = ClampCounter()
        y = gau_anamorphosis_inverse(9.0, self.m, 1.0)
        assert gau_anamorphosis(y, self.m, 1.0, counter) == pytest.approx(Z_CLAMP)
        assert counter.count == 1

    @given(st.floats(-7.5, 7.5), st.floats(0.1, 10), st.floats(2.1, 50))
    def test_t_roundtrip(self, z, sd, nu):
        from srecopula.special import t_from_score

        m = SkewGaussian(np.log(100.0), 10.0, 3.0)
        v = float(t_from_score(np.array(z), nu))
        y = t_anamorphosis_inverse(v * sd, m, sd, nu)
        assert t_anamorphosis(y, m, sd, nu) == pytest.approx(v * sd, rel=1e-8, abs=1e-9 * sd)


class TestProcessDensity:
    @pytest.mark.parametrize("copula", [Copula("gau"), Copula("t", 4.0)])
    @pytest.mark.parametrize("marginal", [LogGaussian(1.0, 0.4), SkewGaussian(1.0, 2.0, -3.0)])
    def test_matches_dense(self, rng, copula, marginal):
        cov, Sigma = _cov(rng, 4, 2)
        y = marginal.ppf(rng.uniform(0.05, 0.95, 4))
        ref = dense_process_logpdf(y, marginal, Sigma, copula.tag, copula.nu)
        assert process_logdensity(y, marginal, copula, cov) == pytest.approx(ref, rel=1e-8)

    def test_outside_support(self, rng):
        cov, _ = _cov(rng, 3, 2)
        y = np.array([1.0, -1.0, 2.0])
        assert process_logdensity(y, LogGaussian(0.0, 1.0), Copula("gau"), cov) == -np.inf

    @pytest.mark.parametrize("copula", [Copula("gau"), Copula("t", 5.0)])
    def test_marginalizes_to_subset(self, rng, copula):
        cov, _ = _cov(rng, 2, 2)
        m = LogGaussian(0.0, 0.5)
        y1 = 1.3

        def f(y2):
            return np.exp(process_logdensity(np.array([y1, y2]), m, copula, cov))

        med = float(m.ppf(0.5))
        total = integrate.quad(f, 0, med, limit=200)[0] + integrate.quad(f, med, np.inf, limit=200)[0]
        sub = np.exp(process_logdensity(np.array([y1]), m, copula, cov.subset([0])))
        assert total == pytest.approx(sub, rel=1e-4)
        assert sub == pytest.approx(m.pdf(y1), rel=1e-10)
