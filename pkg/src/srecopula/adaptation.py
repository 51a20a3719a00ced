"""Robbins-Monro step-size adaptation for random-walk Metropolis proposals.

The scale ``s`` is nudged up after an acceptance and down after a rejection:

    s <- s + c s (1 - p*) / d    (accept)
    s <- s - c s p* / d          (reject)

with ``d = max(d_min, i / m)`` and

    c = (1 - 1/m) sqrt(2 pi) exp(a^2 / 2) / (2 a) + 1 / (m p* (1 - p*)),
    a = -Phi^{-1}(p* / 2),

which drives the long-run acceptance rate to ``p*``.
"""

from __future__ import annotations

import numpy as np
from scipy import linalg
from scipy import special as sp

__all__ = ["robbins_monro_constant", "ScaleAdapter", "RunningCovariance", "AdaptiveMetropolis"]


def robbins_monro_constant(target: float, dim: int) -> float:
    """Step constant ``c`` for acceptance target ``target`` in ``dim`` dimensions."""
    if not 0 < target < 1:
        raise ValueError("target acceptance must lie in (0, 1)")
    a = -sp.ndtri(target / 2)
    first = (1 - 1 / dim) * np.sqrt(2 * np.pi) * np.exp(a * a / 2) / (2 * a)
    return float(first + 1 / (dim * target * (1 - target)))


class ScaleAdapter:
    """Vectorized Robbins-Monro scale adaptation.

    Parameters
    ----------
    init : float or ndarray
        Initial scale(s); one entry per independent proposal.
    target : float
        Acceptance target.
    dim : int
        Dimension of each proposal (1 for scalar updates).
    d_min : float
        Lower bound on the step denominator; stabilizes early iterations.
    """

    def __init__(self, init, target: float, dim: int = 1, d_min: float = 200.0):
        self.scale = np.array(init, dtype=float)
        self.target = target
        self.dim = dim
        self.d_min = d_min
        self.c = robbins_monro_constant(target, dim)

    def update(self, accepted, i: int) -> None:
        d = max(self.d_min, i / self.dim)
        step = np.where(accepted, self.c * (1 - self.target), -self.c * self.target) / d
        self.scale = self.scale * (1.0 + step)


class RunningCovariance:
    """Welford accumulator for the mean and covariance of past samples."""

    def __init__(self, dim: int):
        self.n = 0
        self.mean = np.zeros(dim)
        self._m2 = np.zeros((dim, dim))

    def add(self, x) -> None:
        x = np.asarray(x, dtype=float)
        self.n += 1
        delta = x - self.mean
        self.mean = self.mean + delta / self.n
        self._m2 += np.outer(delta, x - self.mean)

    @property
    def cov(self) -> np.ndarray:
        if self.n < 2:
            return np.zeros_like(self._m2)
        c = self._m2 / (self.n - 1)
        return 0.5 * (c + c.T)


class AdaptiveMetropolis:
    """Multivariate random-walk Metropolis with adapted covariance and scale.

    Proposals are ``x + s L e`` with ``e ~ N(0, I)``. ``L`` is the Cholesky
    factor of a fixed initial covariance until ``cov_start`` iterations have
    passed, then of the empirical covariance of past states plus ``cov_reg I``.
    The scale ``s`` starts at ``2.38 / sqrt(d)`` and follows the Robbins-Monro
    rule toward ``target``.
    """

    def __init__(self, dim: int, init_sd: float = 0.1, target: float = 0.24, d_min: float = 200.0,
                 cov_start: int = 200, cov_reg: float = 1e-10, adapt: bool = True):
        self.dim = dim
        self.scale = ScaleAdapter(2.38 / np.sqrt(dim), target, dim, d_min)
        self.history = RunningCovariance(dim)
        self.init_cov = np.eye(dim) * init_sd**2
        self.cov_start = cov_start
        self.cov_reg = cov_reg
        self.adapt = adapt
        self.n_accept = 0

    def proposal_cov(self, i: int) -> np.ndarray:
        if i > self.cov_start and self.history.n > self.dim:
            return self.history.cov + self.cov_reg * np.eye(self.dim)
        return self.init_cov

    def propose(self, x, i: int, rng) -> np.ndarray:
        base = self.proposal_cov(i)
        try:
            chol = linalg.cholesky(base, lower=True)
        except linalg.LinAlgError:
            chol = np.sqrt(np.diag(np.diag(base)))
        return x + float(self.scale.scale) * (chol @ rng.standard_normal(self.dim))

    def record(self, x, accepted: bool, i: int) -> None:
        """Register the outcome of iteration ``i`` and the state kept."""
        self.n_accept += int(accepted)
        if self.adapt:
            self.scale.update(accepted, i)
        self.history.add(x)

    def step(self, x, logp: float, log_target, i: int, rng) -> tuple[np.ndarray, float, bool]:
        """One iteration on ``log_target``; returns the new state, its log target and the outcome."""
        prop = self.propose(x, i, rng)
        lp = log_target(prop)
        accepted = bool(np.log(rng.random()) < lp - logp)
        if accepted:
            x, logp = prop, lp
        self.record(x, accepted, i)
        return x, logp, accepted
