"""Posterior summaries, prediction metrics and convergence diagnostics.

Quantiles use linear interpolation of order statistics (type 7). The
effective sample size is ``n * var(x) / S(0)`` where ``S(0)`` is the spectral
density at frequency zero of an autoregressive fit chosen by AIC, following
the coda convention.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "rmspe",
    "empirical_coverage",
    "ess",
    "ess_flagged",
    "gelman_rubin",
    "PosteriorSummary",
    "summarize_draws",
    "summarize",
    "format_table",
    "prediction_summary",
]

QUANTILES = (0.025, 0.05, 0.5, 0.95, 0.975)


def rmspe(preds, truths) -> np.ndarray:
    """Per-BAU root mean squared prediction error across replicates.

    Parameters
    ----------
    preds, truths : ndarray, shape (R, N)
    """
    preds = np.atleast_2d(np.asarray(preds, dtype=float))
    truths = np.atleast_2d(np.asarray(truths, dtype=float))
    if preds.shape != truths.shape:
        raise ValueError("preds and truths must have the same shape")
    if preds.shape[0] == 0:
        raise ValueError("at least one replicate is required")
    return np.sqrt(np.mean((preds - truths) ** 2, axis=0))


def empirical_coverage(lo, hi, truths) -> np.ndarray:
    """Per-BAU fraction of replicates whose interval contains the truth."""
    lo, hi, truths = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (lo, hi, truths))
    if not (lo.shape == hi.shape == truths.shape):
        raise ValueError("lo, hi and truths must have the same shape")
    if lo.shape[0] == 0:
        raise ValueError("at least one replicate is required")
    return np.mean((lo <= truths) & (truths <= hi), axis=0)


def _ar_spectrum0(x: np.ndarray, order_max: int | None = None) -> float:
    """Spectral density at zero from a Yule-Walker AR fit with AIC order choice."""
    n = x.size
    xc = x - x.mean()
    if order_max is None:
        order_max = int(min(n - 1, np.floor(10 * np.log10(n))))
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(xc, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[: order_max + 1] / n
    # Levinson-Durbin recursion, tracking the innovation variance per order
    best_aic, best = n * np.log(acov[0]), (np.zeros(0), acov[0])
    phi = np.zeros(0)
    v = acov[0]
    for p in range(1, order_max + 1):
        if v <= 0:
            break
        k = (acov[p] - phi @ acov[p - 1:0:-1]) / v if p > 1 else acov[1] / v
        phi = np.concatenate([phi - k * phi[::-1], [k]])
        v = v * (1 - k * k)
        if v <= 0:
            break
        aic = n * np.log(v) + 2 * p
        if aic < best_aic:
            best_aic, best = aic, (phi.copy(), v)
    phi, v = best
    # the innovation variance is rescaled to the unbiased n/(n - p - 1) form used by ar()
    v = v * n / (n - (phi.size + 1))
    return float(v / (1 - phi.sum()) ** 2)


def ess_flagged(draws, order_max: int | None = None) -> tuple[float, str]:
    """Effective sample size and a flag.

    The flag is ``"constant"`` for a chain with no variation (ESS reported as
    0), ``"clamped"`` when the estimate exceeded the draw count and was
    clamped to it, and ``""`` otherwise.
    """
    x = np.asarray(draws, dtype=float).ravel()
    n = x.size
    if n < 10:
        raise ValueError("at least 10 draws are required")
    var = x.var(ddof=1)
    if var == 0 or not np.isfinite(var):
        return 0.0, "constant"
    s0 = _ar_spectrum0(x, order_max)
    val = n * var / s0 if s0 > 0 else np.inf
    if val > n:
        return float(n), "clamped"
    return float(val), ""


def ess(draws, order_max: int | None = None) -> float:
    """Effective sample size (see :func:`ess_flagged`)."""
    val, flag = ess_flagged(draws, order_max)
    if flag:
        warnings.warn(f"effective sample size {flag}", RuntimeWarning, stacklevel=2)
    return val


def gelman_rubin(chains) -> float:
    """Potential scale reduction factor.

    With ``W`` the mean within-chain variance, ``B/n`` the variance of the
    chain means and ``V = (n-1)/n W + B/n``, returns ``sqrt(V / W')`` where
    ``W' = (n-1)/n W`` is the within-chain variance with divisor ``n``. The
    statistic is exactly 1 when all chains have the same mean.

    Parameters
    ----------
    chains : array_like, shape (M, n)
    """
    x = np.asarray(chains, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2 or x.shape[1] < 10:
        raise ValueError("need at least 2 chains of at least 10 draws")
    m, n = x.shape
    w = x.var(axis=1, ddof=1).mean()
    if w == 0:
        raise ZeroDivisionError("zero within-chain variance")
    b = n * x.mean(axis=1).var(ddof=1)
    v = (n - 1) / n * w + b / n
    return float(np.sqrt(v / ((n - 1) / n * w)))


@dataclass
class PosteriorSummary:
    name: str
    mean: float
    sd: float
    quantiles: dict
    ess: float
    ess_flag: str = ""

    @property
    def ci95(self) -> tuple[float, float]:
        return self.quantiles[0.025], self.quantiles[0.975]


def summarize_draws(name: str, draws) -> PosteriorSummary:
    x = np.asarray(draws, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("no draws to summarize")
    q = np.quantile(x, QUANTILES)
    e, flag = ess_flagged(x) if x.size >= 10 else (float("nan"), "short")
    sd = float(x.std(ddof=1)) if x.size > 1 else 0.0
    return PosteriorSummary(name, float(x.mean()), sd, dict(zip(QUANTILES, map(float, q))), e, flag)


def summarize(output, bau: list[int] | None = None) -> list[PosteriorSummary]:
    """Summaries for each parameter and, optionally, for requested BAUs."""
    if output.n_draws == 0:
        raise ValueError("chain output holds no draws")
    rows = [summarize_draws(n, output.params[:, j]) for j, n in enumerate(output.param_names)]
    if output.gamma is not None:
        rows.append(summarize_draws("gamma", output.gamma))
    for b in bau or []:
        col = _bau_draws(output, b)
        if col is not None:
            rows.append(summarize_draws(f"y[{b}]", col))
    return rows


def _bau_draws(output, b: int):
    if output.y_obs is not None:
        hit = np.flatnonzero(output.obs_ids == b)
        if hit.size:
            return output.y_obs[:, hit[0]]
    if output.y_miss is not None:
        hit = np.flatnonzero(output.miss_ids == b)
        if hit.size:
            return output.y_miss[:, hit[0]]
    return None


def format_table(rows: list[PosteriorSummary], digits: int = 4) -> str:
    """Parameter, mean, 95% credible interval and ESS, one row per quantity."""
    lines = [f"{'parameter':<12} {'mean':>12} {'95% CI':>28} {'ESS':>8}"]
    for r in rows:
        lo, hi = r.ci95
        ci = f"({lo:.{digits}g}, {hi:.{digits}g})"
        lines.append(f"{r.name:<12} {r.mean:>12.{digits}g} {ci:>28} {r.ess:>8.0f}")
    return "\n".join(lines)


def prediction_summary(draws, alpha: float = 0.10) -> dict:
    """Predictive mean, sd and the central ``1 - alpha`` interval per column."""
    x = np.asarray(draws, dtype=float)
    lo, hi = np.quantile(x, [alpha / 2, 1 - alpha / 2], axis=0)
    return {"mean": x.mean(axis=0), "psd": x.std(axis=0, ddof=1), "lo": lo, "hi": hi}
