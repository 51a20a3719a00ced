"""Command-line entry point: ``srecopula {simulate,fit,predict,diagnose,aggregate}``."""

from __future__ import annotations

import argparse
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from .basis import load_centers_csv, regular_basis, evaluate_basis
from .config import ConfigError, RunConfig, parse_id_list, load_config
from .geometry import build_grid
from .io import (
    aggregate_retrievals,
    load_dataset,
    load_mask,
    load_retrievals,
    load_truth,
    read_outputs,
    staged_directory,
    write_csv,
    write_dataset,
    write_keyvalue,
    write_outputs,
)
from .mcmc import FitData, MCMCConfig, ModelSpec, run_chain
from .priors import default_priors
from .simulate import ScenarioSpec, run_study

log = logging.getLogger("srecopula")

QUANTILE_COLS = ("q2.5", "q5", "q50", "q95", "q97.5")


# configuration helpers


def grid_from_config(cfg: RunConfig):
    bounds = cfg.get("grid", "bounds", (0.0, 0.0, 1.0, 1.0))
    nx, ny = cfg.require("grid", "nx"), cfg.require("grid", "ny")
    mask_path = cfg.get("grid", "mask")
    mask = load_mask(mask_path, nx * ny) if mask_path is not None else None
    return build_grid(bounds, nx, ny, mask, cfg.get("grid", "metric", "euclidean"), cfg.get("grid", "unit_km", 1.0))


def basis_from_config(cfg: RunConfig, grid):
    metric, unit = grid.metric, grid.unit_km
    centers = cfg.get("basis", "centers")
    if centers is not None:
        return load_centers_csv(centers, metric, unit)
    return regular_basis(grid.bounds, cfg.get("basis", "counts", (4,)), cfg.get("basis", "apertures"), metric, unit)


def model_from_config(cfg: RunConfig) -> ModelSpec:
    return ModelSpec.from_tag(
        cfg.get("model", "model", "lg-gau"),
        data_model=cfg.get("model", "data_model", ""),
        kernel=cfg.get("basis", "kernel", "exponential"),
        tabulated=cfg.get("model", "tabulated", False),
    )


def priors_from_config(cfg: RunConfig, model: ModelSpec) -> dict:
    pri = default_priors(model.family, model.copula, cfg.get("priors", "preset", "simulation"))
    pri.update({k: v for k, v in cfg.section("priors").items() if k != "preset"})
    return pri


def mcmc_from_config(cfg: RunConfig) -> MCMCConfig:
    sec = cfg.section("mcmc")
    for k in ("chains", "workers"):
        sec.pop(k, None)
    if "store_bau" in sec:
        sec["store_bau"] = tuple(sec["store_bau"])
    return MCMCConfig(**sec)


def scenario_from_config(cfg: RunConfig) -> ScenarioSpec:
    sim = cfg.section("simulate")
    kw = {}
    rename = {"lambda": "lam"}
    for k, v in sim.items():
        kw[rename.get(k, k)] = v
    if "theta_s" in kw:
        kw["theta_s"] = kw["theta_s"][0] if len(kw["theta_s"]) == 1 else tuple(kw["theta_s"])
    grid = cfg.section("grid")
    for k in ("bounds", "nx", "ny"):
        if k in grid:
            kw[k] = tuple(grid[k]) if k == "bounds" else grid[k]
    basis = cfg.section("basis")
    if "counts" in basis:
        kw["basis_counts"] = tuple(basis["counts"])
        kw["apertures"] = tuple(basis["apertures"]) if "apertures" in basis else None
    if "kernel" in basis:
        kw["kernel"] = basis["kernel"]
    return ScenarioSpec(**kw)


def output_dir(cfg: RunConfig) -> Path:
    return Path(cfg.require("output", "dir"))


# summaries


def summary_rows(rows: list, rhat: dict | None = None):
    header = ["parameter", "mean", "sd", *QUANTILE_COLS, "ess", "ess_flag"]
    if rhat is not None:
        header.append("rhat")
    out = []
    for r in rows:
        line = [r.name, r.mean, r.sd, *[r.quantiles[q] for q in dg.QUANTILES], r.ess, r.ess_flag]
        if rhat is not None:
            line.append(rhat.get(r.name, ""))
        out.append(line)
    return header, out


def pooled_summary(outputs: list, bau=None):
    """Summaries of pooled draws and, for several chains, R-hat per parameter."""
    first = outputs[0]
    names = list(first.param_names)
    rows = []
    rhat = {} if len(outputs) > 1 else None
    for j, name in enumerate(names):
        chains = [o.params[:, j] for o in outputs]
        rows.append(dg.summarize_draws(name, np.concatenate(chains)))
        if rhat is not None:
            try:
                rhat[name] = dg.gelman_rubin(np.vstack(chains))
            except (ValueError, ZeroDivisionError):
                rhat[name] = float("nan")
    if first.gamma is not None:
        rows.append(dg.summarize_draws("gamma", np.concatenate([o.gamma for o in outputs])))
    for b in bau or []:
        cols = [dg._bau_draws(o, b) for o in outputs]
        if all(c is not None for c in cols):
            rows.append(dg.summarize_draws(f"y[{b}]", np.concatenate(cols)))
    return rows, rhat


def bau_predictions(outputs: list, alpha: float):
    """Predictive mean, sd and interval per BAU from pooled chain draws."""
    ids, draws, observed = [], [], []
    first = outputs[0]
    for attr, ids_attr, flag in (("y_obs", "obs_ids", 1), ("y_miss", "miss_ids", 0)):
        if getattr(first, attr) is None or getattr(first, ids_attr).size == 0:
            continue
        ids.append(getattr(first, ids_attr))
        draws.append(np.vstack([getattr(o, attr) for o in outputs]))
        observed.append(np.full(ids[-1].size, flag))
    if not ids:
        raise ValueError("the fit stored no BAU draws to predict from")
    ids = np.concatenate(ids)
    draws = np.hstack(draws)
    observed = np.concatenate(observed)
    order = np.argsort(ids)
    p = dg.prediction_summary(draws[:, order], alpha)
    return ids[order], observed[order], p


def _load_fit(fit_dir: Path) -> list:
    chains = sorted(fit_dir.glob("chain_*"), key=lambda p: int(p.name.split("_")[1]))
    if chains:
        return [read_outputs(c) for c in chains]
    return [read_outputs(fit_dir)]


# subcommands


def cmd_simulate(cfg: RunConfig, args) -> None:
    spec = scenario_from_config(cfg)
    if args.seed is not None:
        spec = ScenarioSpec(**{**spec.__dict__, "base_seed": args.seed})
    out = output_dir(cfg)
    with staged_directory(out) as tmp:
        run_study(spec, tmp)
        info = {"model": spec.model, "replicates": spec.replicates, "base_seed": spec.base_seed,
                "missingness": spec.missingness, "sigma_o": spec.sigma_o_value}
        info.update({f"true_{k}": v for k, v in spec.true_params().items()})
        write_keyvalue(tmp / "scenario.txt", info)
    log.info("wrote %d replicates to %s", spec.replicates, out)


def _chain_job(job):
    model, basis, data, priors, mc = job
    return run_chain(model, basis, data, priors, mc)


def cmd_fit(cfg: RunConfig, args) -> None:
    grid = grid_from_config(cfg)
    basis = basis_from_config(cfg, grid)
    model = model_from_config(cfg)
    priors = priors_from_config(cfg, model)
    mc = mcmc_from_config(cfg)
    if args.seed is not None:
        mc.seed = args.seed
    if args.store_bau is not None:
        mc.store_bau = args.store_bau
    chains = args.chains or cfg.get("mcmc", "chains", 1)
    workers = args.workers or cfg.get("mcmc", "workers", 1)
    ds = load_dataset(cfg.require("data", "dataset"), grid.n)
    if ds.k == 0:
        raise ValueError("the dataset has no observed BAUs")
    data = FitData.from_grid(evaluate_basis(grid, basis), ds.bau_id, ds.z, ds.sigma_o, grid)
    jobs = []
    for c in range(chains):
        mcc = MCMCConfig(**{**mc.__dict__, "seed": mc.seed + c})
        jobs.append((model, basis, data, priors, mcc))
    if workers > 1 and chains > 1:
        with ProcessPoolExecutor(max_workers=min(workers, chains)) as ex:
            outputs = list(ex.map(_chain_job, jobs))
    else:
        outputs = [_chain_job(j) for j in jobs]
    for c, o in enumerate(outputs):
        log.info("chain %d: %.1f s, theta acceptance %.3f", c + 1, o.meta["elapsed_seconds"],
                 o.acceptance["theta_post_burn_in"])
    out = output_dir(cfg)
    with staged_directory(out) as tmp:
        if chains == 1:
            write_outputs(outputs[0], tmp)
        else:
            for c, o in enumerate(outputs):
                write_outputs(o, tmp / f"chain_{c + 1}")
        rows, rhat = pooled_summary(outputs, mc.store_bau)
        write_csv(tmp / "summary.csv", *summary_rows(rows, rhat))
    print(dg.format_table(rows))


def cmd_predict(cfg: RunConfig, args) -> None:
    fit_dir = Path(args.fit) if args.fit else output_dir(cfg)
    alpha = args.alpha if args.alpha is not None else cfg.get("diagnose", "alpha", 0.10)
    outputs = _load_fit(fit_dir)
    ids, observed, p = bau_predictions(outputs, alpha)
    rows = zip(ids, observed, p["mean"], p["psd"], p["lo"], p["hi"])
    with staged_directory(fit_dir) as tmp:
        write_csv(tmp / "predictions.csv", ["bau_id", "observed", "mean", "psd", "lo", "hi"], rows)
    log.info("wrote predictions for %d BAUs at alpha = %g", ids.size, alpha)


def _study_metrics(cfg: RunConfig, alpha: float):
    pattern = cfg.require("diagnose", "fits")
    truth_pattern = cfg.require("diagnose", "truth")
    models = cfg.get("diagnose", "models", (cfg.get("model", "model", "lg-gau"),))
    reps = cfg.require("diagnose", "replicates")
    base = cfg.base_dir
    cols, summary = {}, {}
    truths = np.vstack([load_truth(base / truth_pattern.format(r=r)) for r in reps])
    n = truths.shape[1]
    n_missing = np.zeros(n, dtype=np.int64)
    for m in models:
        preds = np.full((len(reps), n), np.nan)
        lo, hi = preds.copy(), preds.copy()
        miss = np.zeros((len(reps), n), dtype=bool)
        for i, r in enumerate(reps):
            outputs = _load_fit(base / pattern.format(model=m, r=r))
            ids, observed, p = bau_predictions(outputs, alpha)
            preds[i, ids], lo[i, ids], hi[i, ids] = p["mean"], p["lo"], p["hi"]
            miss[i, ids[observed == 0]] = True
        n_missing = miss.sum(axis=0)
        cols[f"rmspe_{m}"] = dg.rmspe(preds, truths)
        cols[f"ec_{m}"] = dg.empirical_coverage(lo, hi, truths)
        always = n_missing == len(reps)
        err, hit = (preds - truths)[miss], ((lo <= truths) & (truths <= hi))[miss]
        summary[f"{m}_mean_rmspe_all"] = float(np.nanmean(cols[f"rmspe_{m}"]))
        summary[f"{m}_mean_ec_all"] = float(np.nanmean(cols[f"ec_{m}"]))
        if always.any():
            summary[f"{m}_mean_rmspe_missing"] = float(np.mean(cols[f"rmspe_{m}"][always]))
            summary[f"{m}_mean_ec_missing"] = float(np.mean(cols[f"ec_{m}"][always]))
        else:
            summary[f"{m}_mean_rmspe_missing"] = float(math.sqrt(np.mean(err**2))) if err.size else float("nan")
            summary[f"{m}_mean_ec_missing"] = float(np.mean(hit)) if hit.size else float("nan")
    header = ["bau_id", "n_missing", *cols]
    rows = ([j, int(n_missing[j]), *[c[j] for c in cols.values()]] for j in range(n))
    return header, rows, summary


def cmd_diagnose(cfg: RunConfig, args) -> None:
    alpha = args.alpha if args.alpha is not None else cfg.get("diagnose", "alpha", 0.10)
    if cfg.get("diagnose", "fits") is not None:
        header, rows, summary = _study_metrics(cfg, alpha)
        summary["alpha"] = alpha
        with staged_directory(output_dir(cfg)) as tmp:
            write_csv(tmp / "metrics.csv", header, rows)
            write_keyvalue(tmp / "metrics_summary.txt", summary)
        for k, v in summary.items():
            print(f"{k} = {v:.6g}")
        return
    fit_dir = Path(args.fit) if args.fit else output_dir(cfg)
    outputs = _load_fit(fit_dir)
    rows, rhat = pooled_summary(outputs, args.store_bau)
    with staged_directory(fit_dir) as tmp:
        write_csv(tmp / "summary.csv", *summary_rows(rows, rhat))
    print(dg.format_table(rows))


def cmd_aggregate(cfg: RunConfig, args) -> None:
    grid = grid_from_config(cfg)
    records = load_retrievals(cfg.require("data", "retrievals"))
    res = aggregate_retrievals(records, grid)
    with staged_directory(output_dir(cfg)) as tmp:
        write_dataset(tmp / "dataset.csv", res.dataset)
        write_keyvalue(tmp / "aggregation.txt", {
            "records": records.shape[0], "dropped": res.dropped,
            "observed_baus": res.dataset.k, "missing_baus": res.dataset.n - res.dataset.k,
        })
    log.info("%d records -> %d observed BAUs (%d dropped)", records.shape[0], res.dataset.k, res.dropped)


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "diagnose": cmd_diagnose,
    "aggregate": cmd_aggregate,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="srecopula", description="Copula spatial models with SRE dependence.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="run-configuration file")
    p.add_argument("--seed", type=int, help="override the random seed")
    p.add_argument("--workers", type=int, help="worker processes for multi-chain fits")
    p.add_argument("--chains", type=int, help="independent chains to run")
    p.add_argument("--alpha", type=float, help="prediction intervals have nominal level 1 - alpha")
    p.add_argument("--store-bau", type=parse_id_list, help="BAU ids (with a-b ranges) whose draws are stored")
    p.add_argument("--fit", help="fit output directory for predict/diagnose (defaults to [output] dir)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    for name in ("workers", "chains"):
        v = getattr(args, name)
        if v is not None and v < 1:
            print(f"error: --{name} must be >= 1", file=sys.stderr)
            return 2
    if args.alpha is not None and not 0 < args.alpha < 1:
        print("error: --alpha must lie in (0, 1)", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config)
        COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, ArithmeticError, np.linalg.LinAlgError, KeyError) as exc:
        print(f"error: {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
