"""Marginal families for the latent process and measurement-error data models.

Conventions for ``sigma_p``:

* log-Gaussian: ``sigma_p`` is the log-scale standard deviation; the
  log-scale mean is ``beta0 - sigma_p**2 / 2`` so that ``E(Y) = exp(beta0)``.
* skew-Gaussian: ``sigma_p`` is the natural-scale standard deviation and
  ``E(Y) = exp(beta0)``.

Both families expose ``score(y)``, the normal score ``Phi^{-1}(F(y))`` computed
from whichever tail is smaller, and its inverse ``from_score``.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy import special as sp
from scipy.interpolate import PchipInterpolator

from .special import LOG_2PI, norm_logpdf, score_from_probs

__all__ = [
    "LogGaussian",
    "SkewGaussian",
    "make_marginal",
    "sg_params_from_moments",
    "sg_moments_from_params",
    "sn_cdf",
    "sn_sf",
    "sn_score",
    "sn_from_score",
    "LGMultiplicative",
    "GaussianAdditive",
    "make_data_model",
]

SQRT_2_OVER_PI = float(np.sqrt(2 / np.pi))


def _check_u(u):
    u = np.asarray(u, dtype=float)
    if np.any(~((u > 0) & (u < 1))):
        raise ValueError("probabilities must lie strictly inside (0, 1)")
    return u


class LogGaussian:
    """Log-Gaussian marginal with ``E(Y) = exp(beta0)``.

    Parameters
    ----------
    beta0 : float or ndarray
        Log of the mean; an array gives a per-BAU value (covariate fit).
    sigma_p : float
        Log-scale standard deviation.
    """

    family = "lg"

    def __init__(self, beta0, sigma_p: float):
        if not sigma_p > 0:
            raise ValueError("sigma_p must be positive")
        self.beta0 = beta0
        self.sigma_p = float(sigma_p)
        self.mu = np.asarray(beta0, dtype=float) - 0.5 * self.sigma_p**2

    def mean(self):
        return np.exp(self.beta0)

    def var(self):
        return np.exp(2 * np.asarray(self.beta0, dtype=float)) * np.expm1(self.sigma_p**2)

    def in_support(self, y):
        return np.asarray(y) > 0

    def score(self, y):
        with np.errstate(divide="ignore", invalid="ignore"):
            return (np.log(y) - self.mu) / self.sigma_p

    def from_score(self, z):
        return np.exp(self.mu + self.sigma_p * np.asarray(z, dtype=float))

    def logpdf(self, y):
        y = np.asarray(y, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            ly = np.log(y)
            out = norm_logpdf((ly - self.mu) / self.sigma_p) - np.log(self.sigma_p) - ly
        return np.where(y > 0, out, -np.inf)

    def pdf(self, y):
        return np.exp(self.logpdf(y))

    def cdf(self, y):
        y = np.asarray(y, dtype=float)
        return np.where(y > 0, sp.ndtr(self.score(np.where(y > 0, y, 1.0))), 0.0)

    def sf(self, y):
        y = np.asarray(y, dtype=float)
        return np.where(y > 0, sp.ndtr(-self.score(np.where(y > 0, y, 1.0))), 1.0)

    def ppf(self, u):
        return self.from_score(sp.ndtri(_check_u(u)))


# standardized skew-normal SN(0, 1, lam)


def sn_cdf(h, lam):
    return sp.ndtr(h) - 2.0 * sp.owens_t(h, lam)


def sn_sf(h, lam):
    return sp.ndtr(-h) + 2.0 * sp.owens_t(h, lam)


def sn_logpdf(h, lam):
    return np.log(2.0) + norm_logpdf(h) + sp.log_ndtr(lam * h)


_LAG_X, _LAG_W = np.polynomial.laguerre.laggauss(40)


def _thin_tail(h, lam):
    """``F(h; lam)`` for ``h < 0 < lam`` by Gauss-Laguerre quadrature.

    The integrand ``2 phi(t) Phi(lam t)`` on ``t < h`` is log-concave, so after
    scaling by its log-slope ``r`` at ``h`` it decays like ``exp(-x)``.
    """
    h = np.asarray(h, dtype=float)[..., None]
    logg_h = sn_logpdf(h, lam)
    r = -h + lam * np.exp(norm_logpdf(lam * h) - sp.log_ndtr(lam * h))
    t = h - _LAG_X / r
    vals = np.exp(sn_logpdf(t, lam) - logg_h + _LAG_X)
    return (np.exp(logg_h[..., 0]) / r[..., 0]) * (vals @ _LAG_W)


def _lower_tail(h, lam):
    """``F(h; lam)`` accurate in both tails."""
    h = np.asarray(h, dtype=float)
    out = np.clip(sn_cdf(h, lam), 0.0, 1.0)
    if lam > 0:
        # Phi(h) - 2T(h, lam) cancels when the result is far below Phi(h)
        thin = (h < 0) & (out < 1e-5 * sp.ndtr(h))
        if np.any(thin):
            out = np.where(thin, _thin_tail(np.where(thin, h, -1.0), lam), out)
    return out


def _tail_probs(h, lam):
    """(lower, upper) tail probabilities with full relative precision.

    Uses the reflection ``1 - F(h; lam) = F(-h; -lam)``.
    """
    return _lower_tail(h, lam), _lower_tail(-np.asarray(h, dtype=float), -lam)


def sn_score(h, lam):
    """Normal score ``Phi^{-1}(F_SN(h; lam))``."""
    lower, upper = _tail_probs(np.asarray(h, dtype=float), lam)
    return score_from_probs(lower, upper)


def sn_from_score(z, lam, tol: float = 1e-13, max_iter: int = 100):
    """Invert ``sn_score`` by safeguarded Newton iteration on ``h``.

    Solves ``Phi^{-1}(F(h)) = z``. The derivative of the score with respect to
    ``h`` is ``f(h) / phi(score)``, which stays well scaled in both tails.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float)).copy()
    shape = z.shape
    z = z.ravel()
    lam = float(lam)
    if lam < 0:
        return -sn_from_score(-z, -lam, tol, max_iter).reshape(shape)
    # For lam >= 0 the root lies between the normal and half-normal quantiles.
    lo = z.copy()
    hi = np.where(z > 0, -sp.ndtri(0.5 * sp.ndtr(-z)), sp.ndtri(0.5 + 0.5 * sp.ndtr(z)))
    hi = np.maximum(hi, lo)
    lo = lo - 1e-12 * (1 + np.abs(lo))
    hi = hi + 1e-12 * (1 + np.abs(hi))
    # start from a moment-matched normal approximation inside the bracket
    delta = lam / np.sqrt(1 + lam * lam)
    m = delta * SQRT_2_OVER_PI
    s = np.sqrt(1 - m * m)
    h = np.clip(m + s * z, lo, hi)
    active = np.ones(z.size, dtype=bool)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        hh = h[idx]
        g = sn_score(hh, lam) - z[idx]
        lo[idx] = np.where(g < 0, hh, lo[idx])
        hi[idx] = np.where(g > 0, hh, hi[idx])
        dg = np.exp(sn_logpdf(hh, lam) - norm_logpdf(g + z[idx]))
        with np.errstate(divide="ignore", invalid="ignore"):
            step = g / dg
        new = hh - step
        bad = ~np.isfinite(new) | (new <= lo[idx]) | (new >= hi[idx])
        new = np.where(bad, 0.5 * (lo[idx] + hi[idx]), new)
        h[idx] = new
        done = (np.abs(new - hh) <= tol * (1 + np.abs(hh))) | (g == 0) | (hi[idx] - lo[idx] <= tol * (1 + np.abs(hh)))
        active[idx[done]] = False
    return h.reshape(shape)


def sg_params_from_moments(mean, var, lam):
    """Skew-Gaussian (psi, omega, lam) with the given mean and variance."""
    if not np.all(np.asarray(var) > 0):
        raise ValueError("variance must be positive")
    zeta = lam / np.sqrt(1 + lam**2)
    omega = np.sqrt(var / (1 - 2 * zeta**2 / np.pi))
    psi = mean - omega * zeta * SQRT_2_OVER_PI
    return psi, omega, lam


def sg_moments_from_params(psi, omega, lam):
    zeta = lam / np.sqrt(1 + lam**2)
    mean = psi + omega * zeta * SQRT_2_OVER_PI
    var = omega**2 * (1 - 2 * zeta**2 / np.pi)
    return mean, var


@lru_cache(maxsize=64)
def _sn_table(lam: float, knots: int):
    """Spline pair (h -> score, score -> h) over the 1e-6 .. 1-1e-6 range."""
    zlo, zhi = sp.ndtri(1e-6), -sp.ndtri(1e-6)
    hk = sn_from_score(np.array([zlo, zhi]), lam)
    h = np.linspace(hk[0], hk[1], knots)
    zk = sn_score(h, lam)
    zk[0], zk[-1] = zlo, zhi
    return PchipInterpolator(h, zk), PchipInterpolator(zk, h), (h[0], h[-1]), (zlo, zhi)


class SkewGaussian:
    """Skew-Gaussian marginal with ``E(Y) = exp(beta0)`` and ``sd = sigma_p``.

    Parameters
    ----------
    beta0 : float or ndarray
    sigma_p : float
        Natural-scale standard deviation.
    lam : float
        Skewness (shape) parameter.
    tabulated : bool
        Evaluate cdf/quantile through a 101-knot monotone spline built once per
        ``lam``; points outside the knot range use exact evaluation.
    knots : int
    """

    family = "sg"

    def __init__(self, beta0, sigma_p: float, lam: float, tabulated: bool = False, knots: int = 101):
        if not sigma_p > 0:
            raise ValueError("sigma_p must be positive")
        self.beta0 = beta0
        self.sigma_p = float(sigma_p)
        self.lam = float(lam)
        self.tabulated = tabulated
        self.knots = knots
        self.psi, self.omega, _ = sg_params_from_moments(np.exp(np.asarray(beta0, dtype=float)), self.sigma_p**2, self.lam)

    def mean(self):
        return np.exp(self.beta0)

    def var(self):
        return self.sigma_p**2

    def in_support(self, y):
        return np.isfinite(np.asarray(y, dtype=float))

    def _h(self, y):
        return (np.asarray(y, dtype=float) - self.psi) / self.omega

    def score(self, y):
        h = self._h(y)
        if not self.tabulated:
            return sn_score(h, self.lam)
        fwd, _, (hlo, hhi), _ = _sn_table(self.lam, self.knots)
        inside = (h >= hlo) & (h <= hhi)
        out = np.empty(np.shape(h))
        out[inside] = fwd(h[inside])
        if not np.all(inside):
            out[~inside] = sn_score(h[~inside], self.lam)
        return out

    def from_score(self, z):
        z = np.asarray(z, dtype=float)
        if not self.tabulated:
            h = sn_from_score(z, self.lam)
        else:
            _, inv, _, (zlo, zhi) = _sn_table(self.lam, self.knots)
            inside = (z >= zlo) & (z <= zhi)
            h = np.empty(np.shape(z))
            h[inside] = inv(z[inside])
            if not np.all(inside):
                h[~inside] = sn_from_score(z[~inside], self.lam)
        return self.psi + self.omega * h

    def logpdf(self, y):
        return sn_logpdf(self._h(y), self.lam) - np.log(self.omega)

    def pdf(self, y):
        return np.exp(self.logpdf(y))

    def cdf(self, y):
        if self.tabulated:
            return sp.ndtr(self.score(y))
        return _lower_tail(self._h(y), self.lam)

    def sf(self, y):
        if self.tabulated:
            return sp.ndtr(-self.score(y))
        return _lower_tail(-self._h(y), -self.lam)

    def ppf(self, u):
        u = _check_u(u)
        return self.from_score(score_from_probs(u, 1.0 - u))


def make_marginal(family: str, beta0, sigma_p: float, lam: float | None = None, tabulated: bool = False):
    """Construct a marginal; ``lam`` is required for SG and rejected for LG."""
    family = family.lower()
    if family == "lg":
        if lam is not None:
            raise ValueError("the log-Gaussian family has no skewness parameter")
        return LogGaussian(beta0, sigma_p)
    if family == "sg":
        if lam is None:
            raise ValueError("the skew-Gaussian family requires lam")
        return SkewGaussian(beta0, sigma_p, lam, tabulated=tabulated)
    raise ValueError(f"unknown marginal family {family!r}")


class LGMultiplicative:
    """``Z | Y ~ LG(log Y - sigma_o^2 / 2, sigma_o^2)`` so that ``E(Z | Y) = Y``."""

    name = "lg-multiplicative"

    @staticmethod
    def logpdf(z, y, sigma_o):
        z = np.asarray(z, dtype=float)
        y = np.asarray(y, dtype=float)
        if np.any(y <= 0):
            raise ValueError("latent value must be positive under the multiplicative model")
        lz = np.log(z)
        r = (lz - np.log(y) + 0.5 * sigma_o**2) / sigma_o
        return -0.5 * (LOG_2PI + r * r) - np.log(sigma_o) - lz

    @staticmethod
    def sample(y, sigma_o, rng):
        y = np.asarray(y, dtype=float)
        return np.exp(np.log(y) - 0.5 * sigma_o**2 + sigma_o * rng.standard_normal(y.shape))


class GaussianAdditive:
    """``Z | Y ~ N(Y, sigma_o^2)``; ``sigma_o`` may vary by BAU."""

    name = "gaussian-additive"

    @staticmethod
    def logpdf(z, y, sigma_o):
        r = (np.asarray(z, dtype=float) - np.asarray(y, dtype=float)) / sigma_o
        return -0.5 * (LOG_2PI + r * r) - np.log(sigma_o)

    @staticmethod
    def sample(y, sigma_o, rng):
        y = np.asarray(y, dtype=float)
        return y + sigma_o * rng.standard_normal(y.shape)


def make_data_model(name: str):
    name = name.lower()
    if name in ("lg", "lg-multiplicative", "multiplicative"):
        return LGMultiplicative()
    if name in ("gaussian", "gau", "gaussian-additive", "additive"):
        return GaussianAdditive()
    raise ValueError(f"unknown data model {name!r}")
