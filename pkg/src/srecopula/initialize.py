"""Starting values for the sampler.

Spatial parameters are taken from a robust (Cressie-Hawkins) empirical
semivariogram of the detrended (log-)data, fitted with a spherical model and,
failing that, exponential then wave models.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.spatial.distance import pdist

__all__ = [
    "cressie_hawkins",
    "fit_variogram",
    "VariogramFit",
    "skewness_to_lambda",
    "initial_parameters",
]

MIN_POINTS = 30


def cressie_hawkins(coords, values, n_bins: int = 15, cutoff: float | None = None, metric: str = "euclidean"):
    """Robust empirical semivariogram.

    ``2 gamma(h) = mean(|dz|^{1/2})^4 / (0.457 + 0.494 / N_h)``.

    Parameters
    ----------
    coords : ndarray, shape (n, 2)
    values : ndarray, shape (n,)
    n_bins : int
    cutoff : float, optional
        Maximum lag; defaults to one third of the bounding-box diagonal.

    Returns
    -------
    lag, gamma, npairs : ndarray
        Mean lag, semivariance and pair count of each non-empty bin.
    """
    coords = np.asarray(coords, dtype=float)
    values = np.asarray(values, dtype=float)
    if metric == "euclidean":
        d = pdist(coords)
    else:
        from .geometry import pairwise_distance

        full = pairwise_distance(coords, coords, metric)
        d = full[np.triu_indices(len(coords), 1)]
    if cutoff is None:
        span = coords.max(axis=0) - coords.min(axis=0)
        cutoff = float(np.hypot(*span)) / 3
    root = np.sqrt(np.abs(pdist(values[:, None])))
    keep = (d > 0) & (d <= cutoff)
    d, root = d[keep], root[keep]
    edges = np.linspace(0.0, cutoff, n_bins + 1)
    idx = np.clip(np.searchsorted(edges, d, side="left") - 1, 0, n_bins - 1)
    npairs = np.bincount(idx, minlength=n_bins).astype(float)
    sum_d = np.bincount(idx, d, minlength=n_bins)
    sum_r = np.bincount(idx, root, minlength=n_bins)
    ok = npairs > 0
    n = npairs[ok]
    gamma = 0.5 * (sum_r[ok] / n) ** 4 / (0.457 + 0.494 / n)
    return sum_d[ok] / n, gamma, n


def _sph(h, a):
    r = np.minimum(h / a, 1.0)
    return 1.5 * r - 0.5 * r**3


def _exp(h, a):
    return 1.0 - np.exp(-h / a)


def _wav(h, a):
    return 1.0 - np.sinc(h / (np.pi * a))


_MODELS = {"spherical": _sph, "exponential": _exp, "wave": _wav}


@dataclass(frozen=True)
class VariogramFit:
    model: str
    nugget: float
    psill: float
    range: float


def fit_variogram(lag, gamma, npairs, model: str) -> VariogramFit | None:
    """Weighted least squares fit with weights ``N_h / h^2``.

    Returns ``None`` when the fit does not converge or is degenerate.
    """
    f = _MODELS[model]
    lag, gamma, npairs = map(np.asarray, (lag, gamma, npairs))
    if lag.size < 3 or not np.all(np.isfinite(gamma)) or gamma.max() <= 0:
        return None
    w = np.sqrt(npairs) / lag
    top = float(lag.max())
    # fit on the unit scale so the bounds and tolerances are scale free
    unit = float(gamma.max())
    g = gamma / unit

    def resid(p):
        return w * (p[0] + p[1] * f(lag, p[2]) - g)

    x0 = [max(float(g.min()), 0.0), max(float(np.ptp(g)), 1e-12), top / 3]
    lower, upper = [0.0, 0.0, 1e-6 * top], [np.inf, np.inf, 10 * top]
    try:
        res = optimize.least_squares(resid, x0, bounds=(lower, upper), method="trf")
    except (ValueError, np.linalg.LinAlgError):
        return None
    nug, psill, rng = res.x
    if not res.success or not np.all(np.isfinite(res.x)) or psill <= 1e-8:
        return None
    if rng >= 0.999 * upper[2] or rng <= 1.001 * lower[2]:
        return None
    return VariogramFit(model, float(nug) * unit, float(psill) * unit, float(rng))


def skewness_to_lambda(skew: float) -> float:
    """Skew-normal shape whose theoretical skewness equals ``skew``.

    The attainable skewness is bounded by about 0.9953 in magnitude; larger
    values are clipped just inside the bound.
    """
    if not np.isfinite(skew) or skew == 0:
        return 0.0
    bound = 0.99527
    g = float(np.clip(skew, -0.999 * bound, 0.999 * bound))
    # mu_z = delta sqrt(2/pi); skew = (4 - pi)/2 mu_z^3 / (1 - mu_z^2)^{3/2}
    t = (2 * abs(g) / (4 - np.pi)) ** (1 / 3)
    mu_z = t / np.sqrt(1 + t * t)
    delta = np.sign(g) * mu_z / np.sqrt(2 / np.pi)
    delta = float(np.clip(delta, -0.999999, 0.999999))
    return delta / np.sqrt(1 - delta * delta)


def _sample_skewness(x) -> float:
    x = np.asarray(x, dtype=float)
    sd = x.std()
    if x.size < 3 or sd == 0:
        return 0.0
    return float(np.mean((x - x.mean()) ** 3) / sd**3)


def initial_parameters(
    z,
    coords,
    family: str,
    copula: str,
    priors: dict,
    domain_diameter: float,
    n_res: int = 1,
    metric: str = "euclidean",
) -> dict:
    """Starting values for the process parameters.

    Parameters
    ----------
    z : ndarray
        Observed data.
    coords : ndarray, shape (K, 2)
        BAU centroids of the observations.
    family, copula : str
    priors : dict
        Used for prior medians when there are too few observations.
    domain_diameter : float
        Fallback range is half of this.
    n_res : int
        Number of basis resolutions (one theta_s per resolution).
    """
    z = np.asarray(z, dtype=float)
    k = z.size
    median = {name: float(p.ppf(0.5)) for name, p in priors.items()}
    pos = z[z > 0]
    logz = np.log(pos) if pos.size else np.array([])
    out: dict[str, float] = {}
    if k == 0:
        out["beta0"] = median.get("beta0", 0.0)
        out["sigma_p"] = median["sigma_p"]
    else:
        out["beta0"] = float(logz.mean()) if logz.size else 0.0
        sd = float(logz.std(ddof=1)) if family == "lg" and logz.size > 1 else float(z.std(ddof=1)) if k > 1 else 0.0
        out["sigma_p"] = sd if sd > 0 else median["sigma_p"]
    if family == "sg":
        out["lambda"] = skewness_to_lambda(_sample_skewness(z)) if k else 0.0

    theta_s = theta_r = None
    if k >= MIN_POINTS:
        coords = np.asarray(coords, dtype=float)
        v = np.log(z) if np.all(z > 0) else z
        X = np.column_stack([np.ones(k), coords])
        resid = v - X @ np.linalg.lstsq(X, v, rcond=None)[0]
        flat = np.std(resid) <= 1e-10 * max(float(np.abs(v).max()), 1e-300)
        lag, gam, npairs = cressie_hawkins(coords, resid, metric=metric)
        for model in () if flat else ("spherical", "exponential", "wave"):
            fit = fit_variogram(lag, gam, npairs, model)
            if fit is not None:
                theta_r = fit.range
                theta_s = fit.psill / fit.nugget if fit.nugget > 1e-8 * fit.psill else 1.0
                break
        else:
            warnings.warn("all semivariogram fits failed; using theta_s = 1 and half the domain diameter")
            theta_s, theta_r = 1.0, domain_diameter / 2
    else:
        theta_s = median.get("theta_s", median.get("theta_s_1", 1.0))
        theta_r = median["theta_r"]
    for key in ("theta_s",) if n_res == 1 else [f"theta_s_{p + 1}" for p in range(n_res)]:
        out[key] = float(theta_s)
    out["theta_r"] = float(theta_r)
    if copula == "t":
        out["nu"] = 10.0
    return out
