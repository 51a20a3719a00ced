"""Synthetic datasets from the Gau-SRE and t-SRE copula models.

A replicate is generated ancestrally: (gamma ->) eta -> Y -> Z_O. Given the
random effects, each latent coordinate is ``W_j = s_j^T eta + xi_j`` with
``xi_j ~ N(0, 1 / gamma)`` and ``Y_j`` is obtained from the inverse
anamorphosis, so no N x N matrix is ever formed.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg

from .basis import BasisSet, build_E, evaluate_basis, regular_basis
from .geometry import MAR, MBD, BAUGrid, MissingnessPartition, build_grid, partition_missing
from .io import BAUDataset, write_dataset, write_truth
from .marginals import make_data_model, make_marginal
from .mcmc import ModelSpec
from .special import score_from_t

__all__ = ["ScenarioSpec", "Scenario", "Replicate", "simulate_latent", "simulate_replicate", "run_study"]


@dataclass(frozen=True)
class ScenarioSpec:
    """Simulation scenario.

    The defaults describe the full-scale study: a 100 x 100 unit-square grid,
    a 6 x 6 bisquare basis with aperture 0.375 and half the BAUs missing.
    ``sigma_p`` defaults to 0.1 for LG marginals and 100 for SG marginals, and
    ``sigma_o**2 = sigma_o_ratio * sigma_p**2``.
    """

    model: str = "lg-t"
    beta0: float = math.log(1000.0)
    sigma_p: float | None = None
    lam: float = -5.0
    theta_s: float | tuple[float, ...] = 10.0
    theta_r: float = math.sqrt(2) / 4
    nu: float = 4.0
    sigma_o_ratio: float = 0.05
    bounds: tuple[float, float, float, float] = (0.0, 0.0, 1.0, 1.0)
    nx: int = 100
    ny: int = 100
    basis_counts: tuple = (6,)
    apertures: tuple[float, ...] | None = (0.375,)
    kernel: str = "exponential"
    missingness: str = "mar"
    missing_fraction: float = 0.5
    mbd_blocks: tuple | None = None
    replicates: int = 100
    base_seed: int = 0

    @property
    def model_spec(self) -> ModelSpec:
        return ModelSpec.from_tag(self.model, kernel=self.kernel)

    @property
    def sigma_p_value(self) -> float:
        if self.sigma_p is not None:
            return float(self.sigma_p)
        return 0.1 if self.model_spec.family == "lg" else 100.0

    @property
    def sigma_o_value(self) -> float:
        return math.sqrt(self.sigma_o_ratio) * self.sigma_p_value

    def true_params(self) -> dict:
        spec = self.model_spec
        out = {"beta0": self.beta0, "sigma_p": self.sigma_p_value}
        if spec.family == "sg":
            out["lambda"] = self.lam
        ts = np.atleast_1d(self.theta_s)
        if ts.size == 1:
            out["theta_s"] = float(ts[0])
        else:
            out.update({f"theta_s_{p + 1}": float(v) for p, v in enumerate(ts)})
        out["theta_r"] = self.theta_r
        if spec.copula == "t":
            out["nu"] = self.nu
        return out


@dataclass(frozen=True)
class Replicate:
    y: np.ndarray
    z_obs: np.ndarray
    sigma_o: np.ndarray
    partition: MissingnessPartition
    gamma: float
    eta: np.ndarray

    @property
    def dataset(self) -> BAUDataset:
        return BAUDataset(self.y.size, self.partition.observed.astype(np.int64), self.z_obs, self.sigma_o)


@dataclass
class Scenario:
    """A scenario with its grid, basis and basis matrix built once."""

    spec: ScenarioSpec
    grid: BAUGrid = field(init=False)
    basis: BasisSet = field(init=False)
    S: np.ndarray = field(init=False)

    def __post_init__(self):
        s = self.spec
        self.grid = build_grid(s.bounds, s.nx, s.ny)
        self.basis = regular_basis(s.bounds, s.basis_counts, s.apertures)
        self.S = evaluate_basis(self.grid, self.basis)

    def partition(self, r: int) -> MissingnessPartition:
        s = self.spec
        if s.missingness == "mar":
            return partition_missing(self.grid, MAR(s.missing_fraction, seed=s.base_seed + r, exact=True))
        if s.missingness == "mbd":
            pattern = MBD(tuple(s.mbd_blocks)) if s.mbd_blocks else MBD.corners(s.bounds)
            return partition_missing(self.grid, pattern)
        raise ValueError(f"unknown missingness {s.missingness!r}")


def simulate_latent(S: np.ndarray, E: np.ndarray, marginal, copula: str, nu: float | None, rng):
    """Draw (Y, eta, gamma) from the process model.

    Parameters
    ----------
    S : ndarray, shape (N, b)
    E : ndarray, shape (b, b)
    marginal : marginal distribution object
    copula : {"gau", "t"}
    nu : float or None
    rng : numpy Generator
    """
    gamma = 1.0
    if copula == "t":
        gamma = float(rng.gamma(0.5 * nu, 2.0 / nu))
    L = linalg.cholesky(E, lower=True)
    eta = L @ rng.standard_normal(E.shape[0]) / math.sqrt(gamma)
    SL = S @ L
    sd = np.sqrt(np.einsum("ij,ij->i", SL, SL) + 1.0)
    w = S @ eta + rng.standard_normal(S.shape[0]) / math.sqrt(gamma)
    score = w / sd if copula == "gau" else score_from_t(w / sd, nu)
    return marginal.from_score(score), eta, gamma


def simulate_replicate(spec: ScenarioSpec | Scenario, r: int) -> Replicate:
    """Simulate replicate ``r`` with seed ``base_seed + r``."""
    scen = spec if isinstance(spec, Scenario) else Scenario(spec)
    s = scen.spec
    model = s.model_spec
    truth = s.true_params()
    rng = np.random.default_rng(s.base_seed + r)
    marginal = make_marginal(model.family, s.beta0, s.sigma_p_value, s.lam if model.family == "sg" else None)
    E = build_E(scen.basis, s.kernel, np.atleast_1d(s.theta_s), s.theta_r)
    y, eta, gamma = simulate_latent(scen.S, E, marginal, model.copula, truth.get("nu"), rng)
    part = scen.partition(r)
    sig = np.full(part.k, s.sigma_o_value)
    z = make_data_model(model.data_model).sample(y[part.observed], sig, rng)
    return Replicate(y, z, sig, part, gamma, eta)


def run_study(spec: ScenarioSpec, out_dir: str | Path) -> list[Path]:
    """Write ``data_r.csv`` and ``truth_r.csv`` for r = 1..R."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise PermissionError(f"output directory {out} is not writable")
    scen = Scenario(spec)
    written = []
    for r in range(1, spec.replicates + 1):
        rep = simulate_replicate(scen, r)
        write_dataset(out / f"data_{r}.csv", rep.dataset)
        write_truth(out / f"truth_{r}.csv", rep.y)
        written += [out / f"data_{r}.csv", out / f"truth_{r}.csv"]
    return written

