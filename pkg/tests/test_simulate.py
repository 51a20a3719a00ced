import filecmp
import math

import numpy as np
import pytest
from scipy import integrate, stats

from srecopula.io import load_dataset, load_truth
from srecopula.marginals import make_marginal
from srecopula.simulate import Scenario, ScenarioSpec, run_study, simulate_latent, simulate_replicate

SMALL = dict(nx=12, ny=12, basis_counts=(3,), apertures=(0.75,), replicates=2)


class TestScenario:
    def test_defaults(self):
        s = ScenarioSpec()
        assert s.beta0 == pytest.approx(math.log(1000)) and s.lam == -5.0 and s.theta_s == 10.0
        assert s.theta_r == pytest.approx(math.sqrt(2) / 4) and s.nu == 4.0
        assert (s.nx, s.ny, s.missing_fraction) == (100, 100, 0.5)

    @pytest.mark.parametrize("model,sp", [("lg-t", 0.1), ("sg-gau", 100.0)])
    def test_noise_rule(self, model, sp):
        s = ScenarioSpec(model=model)
        assert s.sigma_p_value == sp
        assert s.sigma_o_value**2 == pytest.approx(0.05 * sp**2)

    def test_true_params(self):
        p = ScenarioSpec(model="sg-t", theta_s=(10.0, 2.0), basis_counts=(2, 4), apertures=(1.0, 0.5)).true_params()
        assert list(p) == ["beta0", "sigma_p", "lambda", "theta_s_1", "theta_s_2", "theta_r", "nu"]

    def test_mar_partition_size(self):
        rep = simulate_replicate(ScenarioSpec(**SMALL), 1)
        assert rep.partition.k == 72 and rep.z_obs.size == 72

    def test_mbd_corner_blocks(self):
        rep = simulate_replicate(ScenarioSpec(missingness="mbd", **SMALL), 1)
        assert 0 < rep.partition.k < 144

    def test_unknown_missingness(self):
        with pytest.raises(ValueError):
            simulate_replicate(ScenarioSpec(missingness="mnar", **SMALL), 1)


class TestStudy:
    def test_files(self, tmp_path):
        files = run_study(ScenarioSpec(**SMALL), tmp_path)
        assert sorted(p.name for p in tmp_path.iterdir()) == ["data_1.csv", "data_2.csv", "truth_1.csv", "truth_2.csv"]
        assert len(files) == 4

    def test_deterministic(self, tmp_path):
        spec = ScenarioSpec(**SMALL)
        run_study(spec, tmp_path / "a")
        run_study(spec, tmp_path / "b")
        for name in ("data_1.csv", "truth_2.csv"):
            assert filecmp.cmp(tmp_path / "a" / name, tmp_path / "b" / name, shallow=False)

    def test_alignment(self, tmp_path):
        run_study(ScenarioSpec(**SMALL), tmp_path)
        ds = load_dataset(tmp_path / "data_1.csv")
        y = load_truth(tmp_path / "truth_1.csv")
        assert ds.n == y.size == 144
        assert np.all(np.isfinite(y[ds.bau_id]))

    def test_unbiased_data(self):
        spec = ScenarioSpec(model="sg-gau", nx=60, ny=60, basis_counts=(3,), apertures=(0.75,))
        scen = Scenario(spec)
        d = []
        for r in range(1, 6):
            rep = simulate_replicate(scen, r)
            d.append(rep.z_obs - rep.y[rep.partition.observed])
        d = np.concatenate(d)
        assert abs(d.mean()) < 3 * d.std() / math.sqrt(d.size)


class TestLatent:
    @pytest.mark.parametrize("family,lam", [("lg", None), ("sg", -5.0)])
    def test_zero_basis_marginal(self, rng, family, lam):
        m = make_marginal(family, math.log(1000), 0.1 if family == "lg" else 100.0, lam)
        y, _, _ = simulate_latent(np.zeros((100_000, 2)), np.eye(2), m, "gau", None, rng)
        assert stats.kstest(y, m.cdf).statistic < 0.01

    def test_marginal_mean(self, rng):
        m = make_marginal("lg", math.log(1000), 0.1)
        y, _, _ = simulate_latent(np.zeros((1_000_000, 1)), np.eye(1), m, "gau", None, rng)
        assert abs(y.mean() - 1000) < 3 * y.std() / 1000

    def test_near_independence(self, rng):
        spec = ScenarioSpec(model="lg-gau", theta_s=1e-12, nx=50, ny=50, basis_counts=(4,), apertures=(0.5,))
        rep = simulate_replicate(spec, 1)
        w = make_marginal("lg", spec.beta0, 0.1).score(rep.y).reshape(50, 50)
        r_x = np.corrcoef(w[:, 1:].ravel(), w[:, :-1].ravel())[0, 1]
        r_y = np.corrcoef(w[1:].ravel(), w[:-1].ravel())[0, 1]
        assert abs(r_x) < 3 / math.sqrt(w[:, 1:].size) and abs(r_y) < 3 / math.sqrt(w[1:].size)

    @pytest.mark.parametrize("copula,nu", [("gau", None), ("t", 4.0)])
    def test_spearman_two_sites(self, copula, nu):
        S = np.array([[1.0], [0.6]])
        E = np.array([[2.0]])
        C = S @ E @ S.T + np.eye(2)
        rho = C[0, 1] / math.sqrt(C[0, 0] * C[1, 1])
        if copula == "gau":
            dens = stats.multivariate_normal([0, 0], [[1, rho], [rho, 1]]).pdf
            F = stats.norm.cdf
        else:
            dens = stats.multivariate_t([0, 0], [[1, rho], [rho, 1]], df=nu).pdf
            F = lambda x: stats.t.cdf(x, nu)  # noqa: E731
        lim = 12 if copula == "gau" else 60
        e_uv = integrate.dblquad(lambda b, a: F(a) * F(b) * dens([a, b]), -lim, lim, -lim, lim, epsabs=1e-9)[0]
        ref = 12 * e_uv - 3
        m = make_marginal("lg", 0.0, 0.5)
        g = np.random.default_rng(21)
        y = np.array([simulate_latent(S, E, m, copula, nu, g)[0] for _ in range(100_000)])
        assert stats.spearmanr(y[:, 0], y[:, 1]).statistic == pytest.approx(ref, abs=0.01)
