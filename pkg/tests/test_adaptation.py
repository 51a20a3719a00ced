import numpy as np
import pytest
from scipy import stats

from srecopula.adaptation import RunningCovariance, ScaleAdapter, robbins_monro_constant


class TestConstant:
    def test_scalar_value(self):
        a = -stats.norm.ppf(0.22)
        assert robbins_monro_constant(0.44, 1) == pytest.approx(1 / (0.44 * 0.56), rel=1e-12)
        ref = (1 - 1 / 4) * np.sqrt(2 * np.pi) * np.exp(a * a / 2) / (2 * a) + 1 / (4 * 0.44 * 0.56)
        assert robbins_monro_constant(0.44, 4) == pytest.approx(ref, rel=1e-12)

    @pytest.mark.parametrize("target", [0.0, 1.0, 1.2])
    def test_invalid_target(self, target):
        with pytest.raises(ValueError):
            robbins_monro_constant(target, 1)


class TestScaleAdapter:
    def test_direction(self):
        ad = ScaleAdapter([1.0, 1.0], 0.44)
        ad.update(np.array([True, False]), 1)
        assert ad.scale[0] > 1.0 > ad.scale[1]

    def test_step_denominator_floor(self):
        ad = ScaleAdapter(1.0, 0.44, d_min=200)
        ad.update(True, 5)
        assert float(ad.scale) == pytest.approx(1 + ad.c * 0.56 / 200)

    @pytest.mark.parametrize("target", [0.24, 0.44])
    def test_reaches_target_on_gaussian(self, target):
        # random walk on N(0, 1); long-run acceptance should settle at the target
        rng = np.random.default_rng(3)
        ad = ScaleAdapter(0.1, target)
        x, acc = 0.0, []
        for i in range(1, 40_001):
            y = x + float(ad.scale) * rng.standard_normal()
            a = np.log(rng.random()) < 0.5 * (x * x - y * y)
            if a:
                x = y
            ad.update(a, i)
            if i > 20_000:
                acc.append(a)
        assert np.mean(acc) == pytest.approx(target, abs=0.02)


class TestRunningCovariance:
    def test_matches_numpy(self, rng):
        x = rng.standard_normal((500, 3)) @ np.array([[1, 0, 0], [0.5, 2, 0], [0.1, -0.3, 0.7]])
        rc = RunningCovariance(3)
        for row in x:
            rc.add(row)
        np.testing.assert_allclose(rc.mean, x.mean(0), rtol=1e-12)
        np.testing.assert_allclose(rc.cov, np.cov(x.T), rtol=1e-10)

    def test_short(self):
        rc = RunningCovariance(2)
        rc.add([1.0, 2.0])
        assert np.all(rc.cov == 0)
