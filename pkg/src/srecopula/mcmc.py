"""Gibbs sampler with Metropolis-within-Gibbs steps for Gau-SRE and t-SRE models.

One iteration runs the blocks

1. ``Y_O | eta (, gamma), theta``: independent random-walk MH per observed BAU;
2. ``theta | Y_O``: adaptive random-walk MH on the transformed parameters,
   with the random effects (and gamma) integrated out;
3. ``(gamma,) eta | Y_O, theta``: exact conjugate draws;
4. ``Y_M | eta (, gamma), theta``: predictive draws on stored iterations.

Block 3 follows block 2 so that the random effects are always drawn given the
current parameters; the collapsed parameter update would otherwise leave a
stale ``eta`` paired with a new ``theta``.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .adaptation import AdaptiveMetropolis, ScaleAdapter
from .basis import BasisSet, CovarianceError, build_E
from .initialize import initial_parameters
from .lowrank import SRECovariance
from .marginals import make_data_model, make_marginal
from .priors import default_priors
from .special import clamp_scores, norm_logpdf, score_from_t, t_from_score, t_logpdf

__all__ = [
    "ModelSpec",
    "MCMCConfig",
    "FitData",
    "ParameterMap",
    "ChainState",
    "ChainOutput",
    "Sampler",
    "run_chain",
    "draw_eta",
    "draw_eta_bar",
    "draw_gamma",
    "gamma_posterior_params",
]


@dataclass(frozen=True)
class ModelSpec:
    """Model variant.

    Attributes
    ----------
    family : {"lg", "sg"}
    copula : {"gau", "t"}
    data_model : str
        ``"lg-multiplicative"`` or ``"gaussian-additive"``; defaults to the
        multiplicative model for LG and the additive one for SG.
    nme : bool
        Treat the data as the process itself (no measurement error).
    kernel : {"exponential", "spherical"}
    tabulated : bool
        Spline-tabulated skew-Gaussian cdf/quantile.
    """

    family: str = "lg"
    copula: str = "gau"
    data_model: str = ""
    nme: bool = False
    kernel: str = "exponential"
    tabulated: bool = False

    def __post_init__(self):
        if self.family not in ("lg", "sg"):
            raise ValueError(f"unknown marginal family {self.family!r}")
        if self.copula not in ("gau", "t"):
            raise ValueError(f"unknown copula {self.copula!r}")
        if not self.data_model:
            object.__setattr__(self, "data_model", "lg-multiplicative" if self.family == "lg" else "gaussian-additive")

    @classmethod
    def from_tag(cls, tag: str, **kw) -> "ModelSpec":
        """Parse tags such as ``"lg-t"``, ``"sg-gau"`` or ``"nme-lg-t"``."""
        parts = tag.lower().replace("_", "-").split("-")
        nme = parts[0] == "nme"
        if nme:
            parts = parts[1:]
        parts = [p for p in parts if p != "sre"]
        if len(parts) != 2:
            raise ValueError(f"cannot parse model tag {tag!r}")
        return cls(family=parts[0], copula=parts[1], nme=nme, **kw)

    @property
    def tag(self) -> str:
        return f"{'nme-' if self.nme else ''}{self.family}-{self.copula}"


@dataclass
class MCMCConfig:
    """Run-length and adaptation settings."""

    iterations: int = 45_000
    burn_in: int = 5_000
    thin: int = 4
    seed: int = 0
    theta_target: float = 0.24
    y_target: float = 0.44
    d_min: float = 200.0
    cov_start: int = 200
    cov_reg: float = 1e-10
    init_theta_sd: float = 0.1
    adapt: bool = True
    store_y_obs: bool = True
    store_y_miss: bool = True
    store_bau: tuple[int, ...] | None = None

    @property
    def n_stored(self) -> int:
        return max(self.iterations - self.burn_in, 0) // self.thin


@dataclass
class FitData:
    """Observed data and basis rows for one fit.

    Attributes
    ----------
    S_O, S_M : ndarray
        Basis rows at observed and missing BAUs.
    z, sigma_o : ndarray
        Data and measurement-error sd at observed BAUs.
    obs_ids, miss_ids : ndarray of int
        BAU ids of the rows of ``S_O`` and ``S_M``.
    coords_o : ndarray, optional
        Observed BAU centroids (used for initial values).
    """

    S_O: np.ndarray
    S_M: np.ndarray
    z: np.ndarray
    sigma_o: np.ndarray
    obs_ids: np.ndarray
    miss_ids: np.ndarray
    coords_o: np.ndarray | None = None
    domain_diameter: float = 1.0
    metric: str = "euclidean"

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=float)
        self.sigma_o = np.broadcast_to(np.asarray(self.sigma_o, dtype=float), self.z.shape).copy()
        if np.any(self.sigma_o <= 0):
            raise ValueError("measurement-error sd must be positive")
        self.StS_O = self.S_O.T @ self.S_O

    @property
    def k(self) -> int:
        return self.z.size

    @classmethod
    def from_grid(cls, S, obs_ids, z, sigma_o, grid=None) -> "FitData":
        obs_ids = np.asarray(obs_ids, dtype=np.int64)
        n = S.shape[0]
        miss = np.setdiff1d(np.arange(n), obs_ids)
        coords = grid.centroids[obs_ids] if grid is not None else None
        diam = grid.diameter if grid is not None else 1.0
        metric = grid.metric if grid is not None else "euclidean"
        return cls(S[obs_ids], S[miss], z, sigma_o, obs_ids, miss, coords, diam, metric)


class ParameterMap:
    """Ordering, transforms and priors of the process parameters.

    Positive parameters are log-transformed and ``nu`` uses ``log(nu - 2)``;
    ``beta0`` and ``lambda`` are left on their natural scale.
    """

    def __init__(self, model: ModelSpec, priors: dict, n_res: int = 1):
        names = ["beta0", "sigma_p"]
        if model.family == "sg":
            names.append("lambda")
        names += ["theta_s"] if n_res == 1 else [f"theta_s_{p + 1}" for p in range(n_res)]
        names.append("theta_r")
        if model.copula == "t":
            names.append("nu")
        self.names = names
        self.n_res = n_res
        self.priors = {}
        for name in names:
            key = name if name in priors else ("theta_s" if name.startswith("theta_s") else name)
            if key not in priors:
                raise ValueError(f"no prior given for {name}")
            self.priors[name] = priors[key]
        unknown = set(priors) - set(self.priors) - {"theta_s"}
        if unknown:
            raise ValueError(f"priors given for unknown parameters {sorted(unknown)}")
        self.kind = np.array([0 if n in ("beta0", "lambda") else 2 if n == "nu" else 1 for n in names])

    @property
    def dim(self) -> int:
        return len(self.names)

    def to_natural(self, t: np.ndarray) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.where(self.kind == 0, t, np.where(self.kind == 1, np.exp(t), 2.0 + np.exp(t)))

    def to_transformed(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.kind == 0, x, np.where(self.kind == 1, np.log(x), np.log(x - 2.0)))

    def log_jacobian(self, t: np.ndarray) -> float:
        """``log |d natural / d transformed|``."""
        return float(np.sum(np.where(self.kind == 0, 0.0, t)))

    def log_prior(self, x: np.ndarray) -> float:
        lp = 0.0
        for name, v in zip(self.names, x):
            lp += self.priors[name].logpdf(float(v))
            if lp == -math.inf:
                return lp
        return lp

    def as_dict(self, x) -> dict:
        return {n: float(v) for n, v in zip(self.names, x)}

    def from_dict(self, d: dict) -> np.ndarray:
        return np.array([d[n] for n in self.names], dtype=float)

    def theta_s(self, x) -> np.ndarray:
        return np.array([v for n, v in zip(self.names, x) if n.startswith("theta_s")])

    def get(self, x, name: str, default=None):
        return float(x[self.names.index(name)]) if name in self.names else default


# conjugate draws


def draw_eta(cov: SRECovariance, w, rng) -> np.ndarray:
    """``eta ~ N(Q^{-1} S^T w, Q^{-1})`` with ``Q = S^T S + E^{-1}``."""
    return cov.sample_posterior(w, rng)


def draw_eta_bar(cov: SRECovariance, v, gamma: float, rng) -> np.ndarray:
    """``eta_bar ~ N(Q^{-1} S^T v, Q^{-1} / gamma)``."""
    return cov.sample_posterior(v, rng, scale=1.0 / gamma)


def gamma_posterior_params(cov: SRECovariance, v, nu: float) -> tuple[float, float]:
    """Shape and rate of ``gamma | v`` with the random effects integrated out."""
    k = np.size(v)
    q = cov.quadratic_form(v) if k else 0.0
    return 0.5 * (k + nu), 0.5 * (nu + q)


def draw_gamma(cov: SRECovariance, v, nu: float, rng) -> float:
    shape, rate = gamma_posterior_params(cov, v, nu)
    return float(rng.gamma(shape, 1.0 / rate))


@dataclass
class ChainState:
    theta_t: np.ndarray
    y_o: np.ndarray
    eta: np.ndarray
    gamma: float = 1.0
    iteration: int = 0


@dataclass
class ChainOutput:
    """Thinned post-burn-in draws and run metadata."""

    model: str
    param_names: list
    params: np.ndarray
    eta: np.ndarray
    gamma: np.ndarray | None
    obs_ids: np.ndarray
    miss_ids: np.ndarray
    y_obs: np.ndarray | None
    y_miss: np.ndarray | None
    iterations: np.ndarray
    acceptance: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def n_draws(self) -> int:
        return self.params.shape[0]

    def param(self, name: str) -> np.ndarray:
        return self.params[:, self.param_names.index(name)]


class _Evaluation:
    """Quantities computed for a parameter value, reused after acceptance."""

    __slots__ = ("logt", "marginal", "cov", "sd", "x", "logf_minus_base", "nu", "prior_part")


class Sampler:
    """Single-chain sampler.

    Parameters
    ----------
    model : ModelSpec
    basis : BasisSet
    data : FitData
    priors : dict, optional
        Name to prior; defaults to the simulation-study priors.
    config : MCMCConfig, optional
    init : dict, optional
        Starting parameter values; computed from the data when omitted.
    """

    def __init__(self, model: ModelSpec, basis: BasisSet, data: FitData, priors: dict | None = None,
                 config: MCMCConfig | None = None, init: dict | None = None):
        self.model = model
        self.basis = basis
        self.data = data
        self.config = config or MCMCConfig()
        self.pmap = ParameterMap(model, priors or default_priors(model.family, model.copula), basis.n_resolutions)
        self.data_model = make_data_model(model.data_model)
        self.rng = np.random.default_rng(self.config.seed)
        self.clamps = 0
        if init is None:
            init = initial_parameters(
                data.z, data.coords_o, model.family, model.copula, self.pmap.priors,
                data.domain_diameter, basis.n_resolutions, data.metric,
            )
        x0 = self.pmap.from_dict(init)
        y0 = data.z.copy()
        if model.family == "lg" and y0.size:
            y0 = np.maximum(y0, 1e-6 * math.exp(init["beta0"]))
        self.state = ChainState(self.pmap.to_transformed(x0), y0, np.zeros(basis.b), 1.0, 0)
        self.current = self.evaluate(self.state.theta_t, self.state.y_o)
        if not np.isfinite(self.current.logt):
            raise ValueError("initial parameter values have zero posterior density")
        self._data_ll = self._data_loglik(self.state.y_o)
        cfg = self.config
        self.theta_kernel = AdaptiveMetropolis(self.pmap.dim, cfg.init_theta_sd, cfg.theta_target, cfg.d_min,
                                               cfg.cov_start, cfg.cov_reg, cfg.adapt)
        self.y_adapter = ScaleAdapter(self._initial_y_scale(x0), cfg.y_target, 1, cfg.d_min)
        self.y_accepts = np.zeros(data.k)

    def set_state(self, params: dict, y_o=None, eta=None, gamma: float = 1.0) -> None:
        """Place the chain at given parameters, latent values and random effects."""
        st = self.state
        st.theta_t = self.pmap.to_transformed(self.pmap.from_dict(params))
        if y_o is not None:
            st.y_o = np.asarray(y_o, dtype=float).copy()
        if eta is not None:
            st.eta = np.asarray(eta, dtype=float).copy()
        st.gamma = float(gamma)
        self.current = self.evaluate(st.theta_t, st.y_o)
        if not np.isfinite(self.current.logt):
            raise ValueError("state has zero posterior density")
        self._data_ll = self._data_loglik(st.y_o)

    # helpers

    def _initial_y_scale(self, x0) -> np.ndarray:
        sig_p = self.pmap.get(x0, "sigma_p")
        so = self.data.sigma_o
        if self.model.family == "lg" and self.model.data_model == "gaussian-additive":
            so = so / np.maximum(self.data.z, 1e-12)
        return np.minimum(so, sig_p) if sig_p else so

    def _proposal_scale(self, y):
        """Random-walk coordinate: log y for LG, y for SG."""
        return np.log(y) if self.model.family == "lg" else y

    def _from_proposal_scale(self, u):
        return np.exp(u) if self.model.family == "lg" else u

    def _log_jac(self, y):
        """``log |dy/du|`` of the random-walk coordinate."""
        return np.log(y) if self.model.family == "lg" else 0.0

    def _copula_coordinate(self, zscore, nu):
        """Clamped score mapped to the copula scale (z or T^{-1}(Phi(z)))."""
        zc, n = clamp_scores(zscore)
        self.clamps += n
        if self.model.copula == "gau":
            return zc, norm_logpdf(zc)
        x = t_from_score(zc, nu)
        return x, t_logpdf(x, nu)

    def _data_loglik(self, y):
        if self.model.nme:
            return np.zeros(self.data.k)
        return self.data_model.logpdf(self.data.z, y, self.data.sigma_o)

    def make_marginal(self, x):
        lam = self.pmap.get(x, "lambda")
        return make_marginal(self.model.family, self.pmap.get(x, "beta0"), self.pmap.get(x, "sigma_p"),
                             lam, self.model.tabulated)

    def make_cov(self, x) -> SRECovariance:
        E = build_E(self.basis, self.model.kernel, self.pmap.theta_s(x), self.pmap.get(x, "theta_r"), check=False)
        return SRECovariance(self.data.S_O, E, self.data.StS_O)

    def evaluate(self, theta_t, y) -> _Evaluation:
        """Collapsed log target at ``theta_t`` given ``Y_O = y``.

        ``log [Y_O | theta] + log prior(theta) + log Jacobian``, with the
        random effects and gamma integrated out.
        """
        ev = _Evaluation()
        ev.logt = -math.inf
        x = self.pmap.to_natural(theta_t)
        lp = self.pmap.log_prior(x)
        if not np.isfinite(lp):
            return ev
        try:
            ev.marginal = self.make_marginal(x)
            ev.cov = self.make_cov(x)
        except (CovarianceError, ValueError, linalg.LinAlgError):
            return ev
        ev.nu = self.pmap.get(x, "nu")
        ev.prior_part = lp + self.pmap.log_jacobian(theta_t)
        if y.size == 0:
            ev.sd, ev.x, ev.logf_minus_base = np.zeros(0), np.zeros(0), np.zeros(0)
            ev.logt = ev.prior_part
            return ev
        with np.errstate(all="ignore"):
            logf = ev.marginal.logpdf(y)
        if not np.all(np.isfinite(logf)):
            return ev
        ev.x, logbase = self._copula_coordinate(ev.marginal.score(y), ev.nu)
        ev.sd = ev.cov.diagonal()
        ev.logf_minus_base = logf - logbase
        self._refresh(ev)
        return ev

    def _refresh(self, ev: _Evaluation) -> None:
        """Recompute the collapsed log target from the cached coordinates."""
        k = ev.x.size
        q = ev.cov.quadratic_form(ev.sd * ev.x)
        if self.model.copula == "gau":
            joint = -0.5 * (k * math.log(2 * math.pi) + ev.cov.log_det() + q)
        else:
            nu = ev.nu
            joint = (math.lgamma(0.5 * (nu + k)) - math.lgamma(0.5 * nu) - 0.5 * k * math.log(nu * math.pi)
                     - 0.5 * ev.cov.log_det() - 0.5 * (nu + k) * math.log1p(q / nu))
        ll = float(np.sum(ev.logf_minus_base)) + float(np.sum(np.log(ev.sd))) + joint
        ev.logt = ll + ev.prior_part

    # blocks

    def update_y_obs(self) -> None:
        """One random-walk MH step per observed BAU."""
        if self.model.nme or self.data.k == 0:
            return
        st, cur = self.state, self.current
        mean = self.data.S_O @ st.eta
        prec = st.gamma
        u = self._proposal_scale(st.y_o)
        step = self.y_adapter.scale * self.rng.standard_normal(u.size)
        y_new = self._from_proposal_scale(u + step)
        with np.errstate(all="ignore"):
            logf_new = cur.marginal.logpdf(y_new)
            ok = np.isfinite(logf_new)
            y_safe = np.where(ok, y_new, st.y_o)
            xn, logbase_new = self._copula_coordinate(cur.marginal.score(y_safe), cur.nu)
            dll_new = np.where(ok, self._data_loglik(y_safe), -np.inf)
        lt_old = (cur.logf_minus_base - 0.5 * prec * (cur.sd * cur.x - mean) ** 2
                  + self._data_ll + self._log_jac(st.y_o))
        lt_new = (logf_new - logbase_new - 0.5 * prec * (cur.sd * xn - mean) ** 2
                  + dll_new + self._log_jac(y_safe))
        lt_new = np.where(ok, lt_new, -np.inf)
        if not np.all(np.isfinite(lt_old)):
            raise FloatingPointError("non-finite log target at the current latent state")
        accept = np.log(self.rng.random(u.size)) < lt_new - lt_old
        st.y_o = np.where(accept, y_new, st.y_o)
        cur.x = np.where(accept, xn, cur.x)
        cur.logf_minus_base = np.where(accept, logf_new - logbase_new, cur.logf_minus_base)
        self._data_ll = np.where(accept, dll_new, self._data_ll)
        self.y_accepts += accept
        if self.config.adapt:
            self.y_adapter.update(accept, st.iteration)
        if accept.any():
            self._refresh(cur)

    def update_theta(self) -> bool:
        st = self.state
        prop = self.theta_kernel.propose(st.theta_t, st.iteration, self.rng)
        new = self.evaluate(prop, st.y_o)
        accepted = bool(np.log(self.rng.random()) < new.logt - self.current.logt)
        if accepted:
            st.theta_t = prop
            self.current = new
        self.theta_kernel.record(st.theta_t, accepted, st.iteration)
        return accepted

    @property
    def n_theta_accept(self) -> int:
        return self.theta_kernel.n_accept

    def draw_random_effects(self) -> None:
        st, cur = self.state, self.current
        v = cur.sd * cur.x
        if self.model.copula == "gau":
            st.gamma = 1.0
            st.eta = draw_eta(cur.cov, v, self.rng)
        else:
            st.gamma = draw_gamma(cur.cov, v, cur.nu, self.rng)
            st.eta = draw_eta_bar(cur.cov, v, st.gamma, self.rng)

    def predict_missing(self, rows: np.ndarray | None = None) -> np.ndarray:
        st, cur = self.state, self.current
        S_M = self.data.S_M if rows is None else self.data.S_M[rows]
        SL = S_M @ cur.cov.L
        sd = np.sqrt(np.einsum("ij,ij->i", SL, SL) + 1.0)
        w = S_M @ st.eta + self.rng.standard_normal(S_M.shape[0]) / math.sqrt(st.gamma)
        if self.model.copula == "gau":
            score = w / sd
        else:
            score = score_from_t(w / sd, cur.nu)
        return cur.marginal.from_score(score)

    def step(self) -> None:
        self.state.iteration += 1
        self.update_y_obs()
        self.update_theta()
        self.draw_random_effects()

    def run(self) -> ChainOutput:
        cfg = self.config
        n_store = cfg.n_stored
        if n_store == 0:
            warnings.warn("no draws are stored: iterations do not exceed burn-in")
        d, b, k = self.pmap.dim, self.basis.b, self.data.k
        store_bau = None if cfg.store_bau is None else np.asarray(cfg.store_bau, dtype=np.int64)
        if store_bau is not None:
            obs_sel = np.flatnonzero(np.isin(self.data.obs_ids, store_bau))
            miss_sel = np.flatnonzero(np.isin(self.data.miss_ids, store_bau))
        else:
            obs_sel, miss_sel = np.arange(k), np.arange(self.data.miss_ids.size)
        params = np.empty((n_store, d))
        etas = np.empty((n_store, b))
        gammas = np.empty(n_store) if self.model.copula == "t" else None
        y_obs = np.empty((n_store, obs_sel.size)) if cfg.store_y_obs else None
        y_miss = np.empty((n_store, miss_sel.size)) if cfg.store_y_miss else None
        iters = np.empty(n_store, dtype=np.int64)
        theta_acc_post = 0
        y_acc_burn = None
        t0 = time.perf_counter()
        j = 0
        for it in range(1, cfg.iterations + 1):
            before = self.n_theta_accept
            self.step()
            if it == cfg.burn_in:
                y_acc_burn = self.y_accepts.copy()
            if it > cfg.burn_in:
                theta_acc_post += self.n_theta_accept - before
                if (it - cfg.burn_in) % cfg.thin == 0:
                    params[j] = self.pmap.to_natural(self.state.theta_t)
                    etas[j] = self.state.eta
                    if gammas is not None:
                        gammas[j] = self.state.gamma
                    if y_obs is not None:
                        y_obs[j] = self.state.y_o[obs_sel]
                    if y_miss is not None and miss_sel.size:
                        y_miss[j] = self.predict_missing(miss_sel)
                    iters[j] = it
                    if not (np.all(np.isfinite(params[j])) and np.all(np.isfinite(etas[j]))):
                        raise FloatingPointError(f"non-finite draw at iteration {it}: {self.state}")
                    j += 1
        elapsed = time.perf_counter() - t0
        n_post = max(cfg.iterations - cfg.burn_in, 0)
        y_post = self.y_accepts - (y_acc_burn if y_acc_burn is not None else 0)
        acceptance = {
            "theta_overall": self.n_theta_accept / max(cfg.iterations, 1),
            "theta_post_burn_in": theta_acc_post / n_post if n_post else float("nan"),
            "y_obs_mean_post_burn_in": float(np.mean(y_post) / n_post) if n_post and k and not self.model.nme else float("nan"),
            "y_obs_min_post_burn_in": float(np.min(y_post) / n_post) if n_post and k and not self.model.nme else float("nan"),
            "y_obs_max_post_burn_in": float(np.max(y_post) / n_post) if n_post and k and not self.model.nme else float("nan"),
            "theta_scale": float(self.theta_kernel.scale.scale),
            "clamped_probabilities": int(self.clamps),
        }
        meta = {"elapsed_seconds": elapsed, "seed": cfg.seed, "iterations": cfg.iterations,
                "burn_in": cfg.burn_in, "thin": cfg.thin, "model": self.model.tag, "b": b, "K": k}
        return ChainOutput(
            model=self.model.tag,
            param_names=list(self.pmap.names),
            params=params,
            eta=etas,
            gamma=gammas,
            obs_ids=self.data.obs_ids[obs_sel],
            miss_ids=self.data.miss_ids[miss_sel],
            y_obs=y_obs,
            y_miss=y_miss,
            iterations=iters,
            acceptance=acceptance,
            meta=meta,
        )


def run_chain(model: ModelSpec, basis: BasisSet, data: FitData, priors: dict | None = None,
              config: MCMCConfig | None = None, init: dict | None = None) -> ChainOutput:
    """Run one chain and return its thinned post-burn-in draws."""
    if data.k == 0 and model.nme:
        raise ValueError("the no-measurement-error variant needs observed data")
    return Sampler(model, basis, data, priors, config, init).run()
