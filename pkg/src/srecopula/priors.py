"""Prior distributions for the process parameters.

Log densities are written out in closed form because they are evaluated on
every parameter proposal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

__all__ = [
    "HalfCauchy",
    "Gaussian",
    "Gamma",
    "TruncatedGamma",
    "parse_prior",
    "default_priors",
]


@dataclass(frozen=True)
class HalfCauchy:
    scale: float

    def logpdf(self, x: float) -> float:
        if x <= 0:
            return -math.inf
        return math.log(2 / (math.pi * self.scale)) - math.log1p((x / self.scale) ** 2)

    def ppf(self, q):
        return stats.halfcauchy.ppf(q, scale=self.scale)

    def sample(self, rng, size=None):
        return np.abs(self.scale * rng.standard_cauchy(size))

    def __str__(self):
        return f"halfcauchy({self.scale:g})"


@dataclass(frozen=True)
class Gaussian:
    mean: float
    var: float

    def logpdf(self, x: float) -> float:
        return -0.5 * (math.log(2 * math.pi * self.var) + (x - self.mean) ** 2 / self.var)

    def ppf(self, q):
        return stats.norm.ppf(q, self.mean, math.sqrt(self.var))

    def sample(self, rng, size=None):
        return self.mean + math.sqrt(self.var) * rng.standard_normal(size)

    def __str__(self):
        return f"gaussian({self.mean:g}, {self.var:g})"


@dataclass(frozen=True)
class Gamma:
    """Gamma with shape and scale."""

    shape: float
    scale: float

    def logpdf(self, x: float) -> float:
        if x <= 0:
            return -math.inf
        return (
            (self.shape - 1) * math.log(x)
            - x / self.scale
            - math.lgamma(self.shape)
            - self.shape * math.log(self.scale)
        )

    def ppf(self, q):
        return stats.gamma.ppf(q, self.shape, scale=self.scale)

    def sample(self, rng, size=None):
        return rng.gamma(self.shape, self.scale, size)

    def __str__(self):
        return f"gamma({self.shape:g}, {self.scale:g})"


@dataclass(frozen=True)
class TruncatedGamma:
    """Gamma(shape, scale) restricted to ``x > lower``."""

    shape: float
    scale: float
    lower: float

    def __post_init__(self):
        object.__setattr__(self, "_log_mass", float(stats.gamma.logsf(self.lower, self.shape, scale=self.scale)))
        object.__setattr__(self, "_base", Gamma(self.shape, self.scale))

    def logpdf(self, x: float) -> float:
        if x <= self.lower:
            return -math.inf
        return self._base.logpdf(x) - self._log_mass

    def ppf(self, q):
        lo = stats.gamma.cdf(self.lower, self.shape, scale=self.scale)
        return stats.gamma.ppf(lo + np.asarray(q) * (1 - lo), self.shape, scale=self.scale)

    def sample(self, rng, size=None):
        return self.ppf(rng.random(size))

    def __str__(self):
        return f"truncgamma({self.shape:g}, {self.scale:g}, {self.lower:g})"


_PRIOR_TYPES = {
    "halfcauchy": (HalfCauchy, 1),
    "gaussian": (Gaussian, 2),
    "normal": (Gaussian, 2),
    "gamma": (Gamma, 2),
    "truncgamma": (TruncatedGamma, 3),
}


def parse_prior(text: str):
    """Parse strings such as ``"halfcauchy(0.1)"`` or ``"gamma(4, 2)"``.

    Gaussian priors take (mean, variance); gamma priors take (shape, scale).
    """
    text = text.strip().lower()
    if "(" not in text or not text.endswith(")"):
        raise ValueError(f"cannot parse prior {text!r}")
    name, args = text[:-1].split("(", 1)
    name = name.strip()
    if name not in _PRIOR_TYPES:
        raise ValueError(f"unknown prior family {name!r}")
    cls, nargs = _PRIOR_TYPES[name]
    vals = [float(a) for a in args.split(",") if a.strip()]
    if len(vals) != nargs:
        raise ValueError(f"prior {name} takes {nargs} arguments")
    return cls(*vals)


def default_priors(family: str, copula: str, preset: str = "simulation") -> dict:
    """Weakly informative priors used for the simulation and methane studies.

    Parameters
    ----------
    family : {"lg", "sg"}
    copula : {"gau", "t"}
    preset : {"simulation", "methane"}
    """
    family = family.lower()
    if preset == "simulation":
        pri = {
            "sigma_p": HalfCauchy(0.1 if family == "lg" else 1000.0),
            "beta0": Gaussian(0.0, 100.0**2),
            "theta_s": Gamma(4.0, 2.0),
            "theta_r": HalfCauchy(0.25),
        }
        if family == "sg":
            pri["lambda"] = Gaussian(0.0, 4.0**2)
    elif preset == "methane":
        pri = {
            "sigma_p": HalfCauchy(1000.0),
            "beta0": Gaussian(0.0, 100.0**2),
            "lambda": Gaussian(0.0, 2.0**2),
            "theta_s": Gamma(4.0, 0.5),
            "theta_r": Gamma(5.0, 0.1),
        }
    else:
        raise ValueError(f"unknown prior preset {preset!r}")
    if copula == "t":
        pri["nu"] = TruncatedGamma(3.0, 2.0, 2.0)
    return pri
