"""Bayesian spatial copula models with spatial-random-effects dependence.

Gaussian and Student-t copulas whose correlation comes from a low-rank
spatial random effects covariance, combined with log-Gaussian or
skew-Gaussian marginals, fitted by Metropolis-within-Gibbs MCMC on a grid
of basic areal units (BAUs).
"""

from .basis import BasisSet, CovarianceError, build_E, evaluate_basis, regular_basis
from .copulas import Copula, gau_sre_copula_logdensity, process_logdensity, t_sre_copula_logdensity
from .diagnostics import empirical_coverage, ess, gelman_rubin, rmspe, summarize
from .geometry import MAR, MBD, BAUGrid, ExplicitMask, MissingnessPartition, build_grid, partition_missing
from .io import BAUDataset, aggregate_retrievals, load_dataset, write_dataset, write_outputs
from .lowrank import SRECovariance
from .marginals import LogGaussian, SkewGaussian, make_marginal
from .mcmc import ChainOutput, FitData, MCMCConfig, ModelSpec, Sampler, run_chain
from .simulate import Scenario, ScenarioSpec, simulate_replicate

__version__ = "0.1.0"

__all__ = [
    "BAUDataset", "BAUGrid", "BasisSet", "ChainOutput", "Copula", "CovarianceError", "ExplicitMask",
    "FitData", "LogGaussian", "MAR", "MBD", "MCMCConfig", "MissingnessPartition", "ModelSpec",
    "SRECovariance", "Sampler", "Scenario", "ScenarioSpec", "SkewGaussian", "aggregate_retrievals",
    "build_E", "build_grid", "empirical_coverage", "ess", "evaluate_basis", "gau_sre_copula_logdensity",
    "gelman_rubin", "load_dataset", "make_marginal", "partition_missing", "process_logdensity",
    "regular_basis", "rmspe", "run_chain", "simulate_replicate", "summarize", "t_sre_copula_logdensity",
    "write_dataset", "write_outputs",
]
