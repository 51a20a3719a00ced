"""Gau-SRE and t-SRE copula densities, anamorphoses and the joint process density.

The t copula uses the unit-scale Student t: ``T_nu`` and ``t_nu`` are its cdf
and pdf, whose variance is ``nu / (nu - 2)``, not one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special as sp

from .lowrank import SRECovariance
from .special import (
    LOG_2PI,
    clamp_scores,
    norm_logpdf,
    score_from_probs,
    score_from_t,
    t_from_score,
    t_logpdf,
)

__all__ = [
    "Copula",
    "ClampCounter",
    "gau_anamorphosis",
    "gau_anamorphosis_inverse",
    "t_anamorphosis",
    "t_anamorphosis_inverse",
    "gau_sre_copula_logdensity",
    "t_sre_copula_logdensity",
    "process_logdensity",
    "mvn_logpdf_sre",
    "mvt_logpdf_sre",
]


@dataclass(frozen=True)
class Copula:
    """Copula family tag; ``nu`` is required (> 2) for the t copula."""

    tag: str
    nu: float | None = None

    def __post_init__(self):
        if self.tag not in ("gau", "t"):
            raise ValueError(f"unknown copula {self.tag!r}")
        if self.tag == "t" and not (self.nu is not None and self.nu > 2):
            raise ValueError("the t copula requires nu > 2")


class ClampCounter:
    """Running count of probabilities clamped to ``[1e-15, 1 - 1e-15]``."""

    def __init__(self):
        self.count = 0

    def add(self, n: int) -> None:
        self.count += int(n)


_GLOBAL_CLAMPS = ClampCounter()


def _scores(y, marginal, counter: ClampCounter | None):
    z, n = clamp_scores(marginal.score(y))
    (counter or _GLOBAL_CLAMPS).add(n)
    return z


def _scores_from_u(u, counter: ClampCounter | None):
    u = np.asarray(u, dtype=float)
    z, n = clamp_scores(score_from_probs(u, 1.0 - u))
    (counter or _GLOBAL_CLAMPS).add(n)
    return z


def gau_anamorphosis(y, marginal, sre_sd, counter: ClampCounter | None = None):
    """``w = sigma * Phi^{-1}(F(y))``."""
    return np.asarray(sre_sd) * _scores(y, marginal, counter)


def gau_anamorphosis_inverse(w, marginal, sre_sd):
    """``y = F^{-1}(Phi(w / sigma))``."""
    return marginal.from_score(np.asarray(w, dtype=float) / sre_sd)


def t_anamorphosis(y, marginal, sre_sd, nu: float, counter: ClampCounter | None = None):
    """``v = sigma * T_nu^{-1}(F(y))``."""
    return np.asarray(sre_sd) * t_from_score(_scores(y, marginal, counter), nu)


def t_anamorphosis_inverse(v, marginal, sre_sd, nu: float):
    """``y = F^{-1}(T_nu(v / sigma))``."""
    return marginal.from_score(score_from_t(np.asarray(v, dtype=float) / sre_sd, nu))


def mvn_logpdf_sre(w, cov: SRECovariance) -> float:
    """``log N(w; 0, Sigma)``."""
    k = cov.n
    return -0.5 * (k * LOG_2PI + cov.log_det() + cov.quadratic_form(w))


def mvt_logpdf_sre(v, cov: SRECovariance, nu: float) -> float:
    """Multivariate t log density with scale matrix Sigma and ``nu`` dof."""
    k = cov.n
    q = cov.quadratic_form(v)
    return float(
        sp.gammaln(0.5 * (nu + k))
        - sp.gammaln(0.5 * nu)
        - 0.5 * k * np.log(nu * np.pi)
        - 0.5 * cov.log_det()
        - 0.5 * (nu + k) * np.log1p(q / nu)
    )


def _gau_copula_from_scores(z, cov: SRECovariance) -> float:
    sd = cov.diagonal()
    w = sd * z
    return mvn_logpdf_sre(w, cov) - float(np.sum(norm_logpdf(z) - np.log(sd)))


def _t_copula_from_t(x, cov: SRECovariance, nu: float) -> float:
    sd = cov.diagonal()
    v = sd * x
    return mvt_logpdf_sre(v, cov, nu) - float(np.sum(t_logpdf(x, nu) - np.log(sd)))


def gau_sre_copula_logdensity(u, cov: SRECovariance, counter: ClampCounter | None = None) -> float:
    """Log density of the Gau-SRE copula at ``u``."""
    z = _scores_from_u(u, counter)
    if z.size == 0:
        return 0.0
    return _gau_copula_from_scores(z, cov)


def t_sre_copula_logdensity(u, cov: SRECovariance, nu: float, counter: ClampCounter | None = None) -> float:
    """Log density of the t-SRE copula at ``u``."""
    z = _scores_from_u(u, counter)
    if z.size == 0:
        return 0.0
    return _t_copula_from_t(t_from_score(z, nu), cov, nu)


def process_logdensity(y, marginal, copula: Copula, cov: SRECovariance, counter: ClampCounter | None = None) -> float:
    """Joint log density of ``y``: marginal log pdfs plus the copula term.

    Works for full vectors and observed subvectors alike; pass the row-subset
    covariance in the latter case. Returns ``-inf`` outside the support.
    """
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        return 0.0
    lp = marginal.logpdf(y)
    if not np.all(np.isfinite(lp)):
        return -np.inf
    z = _scores(y, marginal, counter)
    if copula.tag == "gau":
        c = _gau_copula_from_scores(z, cov)
    else:
        c = _t_copula_from_t(t_from_score(z, copula.nu), cov, copula.nu)
    return float(np.sum(lp)) + c
