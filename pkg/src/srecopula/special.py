"""Tail-accurate normal and Student-t transforms.

Probabilities are carried as normal scores ``z = Phi^{-1}(u)`` wherever
possible, so upper-tail probabilities never suffer from ``1 - u`` rounding.
The t distribution here is the unit-scale Student t (variance nu/(nu-2)).
"""

from __future__ import annotations

import numpy as np
from scipy import special as sp

LOG_2PI = float(np.log(2 * np.pi))
EPS_U = 1e-15
#: Normal score corresponding to the clamp bound on probabilities.
Z_CLAMP = float(-sp.ndtri(EPS_U))


def norm_logpdf(x):
    x = np.asarray(x, dtype=float)
    return -0.5 * (LOG_2PI + x * x)


def t_logpdf(x, nu: float):
    """Log density of the unit-scale Student t."""
    x = np.asarray(x, dtype=float)
    c = sp.gammaln(0.5 * (nu + 1)) - sp.gammaln(0.5 * nu) - 0.5 * np.log(nu * np.pi)
    return c - 0.5 * (nu + 1) * np.log1p(x * x / nu)


def score_from_probs(lower, upper):
    """Normal score from a lower tail probability and its complement.

    Uses whichever tail is smaller so both tails keep full relative precision.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    return np.where(lower < upper, sp.ndtri(lower), -sp.ndtri(upper))


def clamp_scores(z):
    """Clamp normal scores to the image of ``[EPS_U, 1 - EPS_U]``.

    Returns the clamped scores and the number of clamped entries.
    """
    z = np.asarray(z, dtype=float)
    bad = np.abs(z) > Z_CLAMP
    if not np.any(bad):
        return z, 0
    return np.clip(z, -Z_CLAMP, Z_CLAMP), int(np.count_nonzero(bad))


def _t_upper_quantile(p2, central, nu):
    """Positive t quantile ``x`` with ``P(|T| > x) = p2``.

    ``central`` is ``1 - p2`` computed accurately by the caller.
    """
    p2 = np.asarray(p2, dtype=float)
    central = np.asarray(central, dtype=float)
    out = np.empty(np.broadcast(p2, central, nu).shape)
    p2, central, nu = np.broadcast_arrays(p2, central, nu)
    small = central < 0.5
    if np.any(small):
        y = sp.betaincinv(0.5, 0.5 * nu[small], central[small])
        out[small] = np.sqrt(nu[small] * y / (1.0 - y))
    big = ~small
    if np.any(big):
        w = sp.betaincinv(0.5 * nu[big], 0.5, p2[big])
        out[big] = np.sqrt(nu[big] * (1.0 - w) / w)
    return out


def t_ppf(u, nu):
    """Quantile of the unit-scale Student t."""
    u = np.asarray(u, dtype=float)
    p = np.minimum(u, 1.0 - u)
    x = _t_upper_quantile(2 * p, np.abs(1.0 - 2 * u), nu)
    return np.where(u < 0.5, -x, x)


def t_from_score(z, nu):
    """``T_nu^{-1}(Phi(z))`` without forming ``Phi(z)`` near one."""
    z = np.asarray(z, dtype=float)
    a = np.abs(z)
    x = _t_upper_quantile(sp.erfc(a / np.sqrt(2.0)), sp.erf(a / np.sqrt(2.0)), nu)
    return np.where(z < 0, -x, x)


def score_from_t(x, nu):
    """``Phi^{-1}(T_nu(x))`` using the smaller tail."""
    x = np.asarray(x, dtype=float)
    tail = sp.stdtr(nu, -np.abs(x))
    z = -sp.ndtri(tail)
    return np.where(x < 0, -z, z)


def t_cdf(x, nu):
    return sp.stdtr(nu, np.asarray(x, dtype=float))
