"""Dataset ingestion, retrieval aggregation and result persistence.

All numeric output uses 17 significant digits so values round-trip exactly.
Files are written to a temporary name and renamed into place, so a failed
command never leaves partial outputs.
"""

from __future__ import annotations

import contextlib
import csv
import io
import os
import shutil
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .geometry import BAUGrid

__all__ = [
    "BAUDataset",
    "AggregationResult",
    "fmt",
    "atomic_write_text",
    "write_csv",
    "read_csv_columns",
    "load_dataset",
    "write_dataset",
    "load_truth",
    "write_truth",
    "load_retrievals",
    "aggregate_retrievals",
    "write_partition",
    "load_partition",
    "write_keyvalue",
    "read_keyvalue",
    "load_mask",
    "staged_directory",
    "write_outputs",
    "read_outputs",
]

DATASET_HEADER = ["bau_id", "z", "sigma_o"]
RETRIEVAL_HEADER = ["lon", "lat", "z", "sigma_trop"]


def fmt(x) -> str:
    """Format a number with 17 significant digits (integers unchanged)."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


def atomic_write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if v is not None else "" for v in row])
    atomic_write_text(path, buf.getvalue())


def write_matrix_csv(path: str | Path, header: Sequence[str], first_col: np.ndarray, mat: np.ndarray) -> None:
    """Write ``[first_col | mat]`` quickly with 17-digit formatting."""
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    if mat.size or len(first_col):
        data = np.column_stack([first_col, mat]) if mat.ndim == 2 else np.column_stack([first_col, mat[:, None]])
        fmts = ["%d"] + ["%.17g"] * (data.shape[1] - 1)
        np.savetxt(buf, data, fmt=fmts, delimiter=",")
    atomic_write_text(path, buf.getvalue())


def _open_rows(path: str | Path, header: Sequence[str]):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None or [h.strip() for h in first] != list(header):
            raise ValueError(f"{path}: header must be {','.join(header)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} fields, found {len(row)}")
            rows.append((lineno, row))
    return rows


def read_csv_columns(path: str | Path) -> tuple[list[str], np.ndarray]:
    """Header and float matrix of a numeric CSV."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = [[float(v) for v in row] for row in reader if row]
    return header, np.asarray(data, dtype=float).reshape(len(data), len(header))


@dataclass
class BAUDataset:
    """Observed values per BAU; BAUs without a value are missing.

    Attributes
    ----------
    n : int
        Number of BAUs in the grid.
    bau_id : ndarray of int
        Observed BAU ids (sorted).
    z, sigma_o : ndarray
    """

    n: int
    bau_id: np.ndarray
    z: np.ndarray
    sigma_o: np.ndarray

    @property
    def k(self) -> int:
        return int(self.bau_id.size)

    @property
    def missing(self) -> np.ndarray:
        return np.setdiff1d(np.arange(self.n), self.bau_id)

    def equals(self, other: "BAUDataset") -> bool:
        return (
            self.n == other.n
            and np.array_equal(self.bau_id, other.bau_id)
            and np.array_equal(self.z, other.z)
            and np.array_equal(self.sigma_o, other.sigma_o)
        )


def load_dataset(path: str | Path, n_bau: int | None = None) -> BAUDataset:
    """Read a ``bau_id,z,sigma_o`` file; rows with empty ``z`` are missing BAUs.

    Parameters
    ----------
    path : path-like
    n_bau : int, optional
        Grid size; defaults to one more than the largest id in the file.
    """
    rows = _open_rows(path, DATASET_HEADER)
    seen: set[int] = set()
    ids, zs, sds = [], [], []
    max_id = -1
    for lineno, row in rows:
        try:
            bid = int(row[0])
        except ValueError:
            raise ValueError(f"{path}:{lineno}: bau_id must be an integer") from None
        if bid in seen:
            raise ValueError(f"{path}:{lineno}: duplicate bau_id {bid}")
        if bid < 0 or (n_bau is not None and bid >= n_bau):
            raise ValueError(f"{path}:{lineno}: bau_id {bid} is not in the grid")
        seen.add(bid)
        max_id = max(max_id, bid)
        zt, st = row[1].strip(), row[2].strip()
        if not zt and not st:
            continue
        try:
            z, s = float(zt), float(st)
        except ValueError:
            raise ValueError(f"{path}:{lineno}: malformed numeric field") from None
        if not (np.isfinite(z) and np.isfinite(s) and s > 0):
            raise ValueError(f"{path}:{lineno}: z must be finite and sigma_o positive")
        ids.append(bid)
        zs.append(z)
        sds.append(s)
    n = n_bau if n_bau is not None else max_id + 1
    order = np.argsort(ids, kind="stable")
    return BAUDataset(
        int(n),
        np.asarray(ids, dtype=np.int64)[order],
        np.asarray(zs, dtype=float)[order],
        np.asarray(sds, dtype=float)[order],
    )


def write_dataset(path: str | Path, ds: BAUDataset) -> None:
    """Write one row per BAU; missing BAUs have empty value fields."""
    z = {int(i): (a, b) for i, a, b in zip(ds.bau_id, ds.z, ds.sigma_o)}
    rows = ([i, *z[i]] if i in z else [i, None, None] for i in range(ds.n))
    write_csv(path, DATASET_HEADER, rows)


def write_truth(path: str | Path, y: np.ndarray) -> None:
    write_matrix_csv(path, ["bau_id", "y"], np.arange(y.size), np.asarray(y, dtype=float))


def load_truth(path: str | Path) -> np.ndarray:
    header, data = read_csv_columns(path)
    if header != ["bau_id", "y"]:
        raise ValueError(f"{path}: header must be bau_id,y")
    out = np.full(int(data[:, 0].max()) + 1 if data.size else 0, np.nan)
    out[data[:, 0].astype(np.int64)] = data[:, 1]
    return out


def write_partition(path: str | Path, observed_flags: np.ndarray) -> None:
    flags = np.asarray(observed_flags, dtype=np.int64)
    write_matrix_csv(path, ["bau_id", "observed"], np.arange(flags.size), flags.astype(float))


def load_partition(path: str | Path) -> np.ndarray:
    rows = _open_rows(path, ["bau_id", "observed"])
    flags = {}
    for lineno, row in rows:
        try:
            flags[int(row[0])] = bool(int(float(row[1])))
        except ValueError:
            raise ValueError(f"{path}:{lineno}: malformed row") from None
    out = np.zeros(max(flags) + 1 if flags else 0, dtype=bool)
    for k, v in flags.items():
        out[k] = v
    return out


def load_retrievals(path: str | Path) -> np.ndarray:
    """Read ``lon,lat,z,sigma_trop`` rows into an (n, 4) array."""
    with open(path, newline="") as fh:
        header = fh.readline().strip().split(",")
        if [h.strip() for h in header] != RETRIEVAL_HEADER:
            raise ValueError(f"{path}: header must be {','.join(RETRIEVAL_HEADER)}")
        text = fh.read()
    try:
        data = np.loadtxt(io.StringIO(text), delimiter=",", ndmin=2)
    except ValueError:
        # locate the offending line for the error message
        for lineno, line in enumerate(text.splitlines(), start=2):
            if not line.strip():
                continue
            parts = line.split(",")
            try:
                if len(parts) != 4:
                    raise ValueError
                [float(p) for p in parts]
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed retrieval row") from None
        raise
    if data.size == 0:
        return np.zeros((0, 4))
    if data.shape[1] != 4:
        raise ValueError(f"{path}: expected 4 columns")
    bad = ~np.all(np.isfinite(data), axis=1) | (data[:, 3] <= 0)
    if np.any(bad):
        lineno = int(np.flatnonzero(bad)[0]) + 2
        raise ValueError(f"{path}:{lineno}: coordinates must be finite and sigma_trop positive")
    return data


@dataclass
class AggregationResult:
    dataset: BAUDataset
    counts: np.ndarray
    dropped: int


def aggregate_retrievals(records: np.ndarray, grid: BAUGrid) -> AggregationResult:
    """Average point retrievals within BAUs.

    For BAU k with n_k retrievals, ``z = mean(values)`` and
    ``sigma_o = sqrt(sum(sigma_trop^2)) / n_k``. Records outside the grid or
    in excluded cells are dropped and counted.

    Parameters
    ----------
    records : ndarray, shape (n, 4)
        Columns lon, lat, z, sigma_trop.
    grid : BAUGrid
    """
    records = np.asarray(records, dtype=float).reshape(-1, 4)
    if records.shape[0] == 0:
        raise ValueError("no retrievals to aggregate")
    ids = grid.locate(records[:, :2])
    keep = ids >= 0
    ids_k = ids[keep]
    n = grid.n
    counts = np.bincount(ids_k, minlength=n)
    sum_z = np.bincount(ids_k, records[keep, 2], minlength=n)
    sum_v = np.bincount(ids_k, records[keep, 3] ** 2, minlength=n)
    obs = np.flatnonzero(counts)
    ds = BAUDataset(n, obs.astype(np.int64), sum_z[obs] / counts[obs], np.sqrt(sum_v[obs]) / counts[obs])
    return AggregationResult(ds, counts, int((~keep).sum()))


def write_keyvalue(path: str | Path, items: dict) -> None:
    """Flat ``key = value`` text, one entry per line."""
    lines = [f"{k} = {fmt(v) if not isinstance(v, str) else v}" for k, v in items.items()]
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_keyvalue(path: str | Path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def load_mask(path: str | Path, n_cells: int) -> np.ndarray:
    """Read a ``cell_id,included`` inclusion mask over all grid cells."""
    rows = _open_rows(path, ["cell_id", "included"])
    out = np.zeros(n_cells, dtype=bool)
    seen = np.zeros(n_cells, dtype=bool)
    for lineno, row in rows:
        try:
            cid, inc = int(row[0]), int(row[1])
        except ValueError:
            raise ValueError(f"{path}:{lineno}: malformed row") from None
        if not 0 <= cid < n_cells or inc not in (0, 1):
            raise ValueError(f"{path}:{lineno}: cell_id must be in the grid and included 0 or 1")
        out[cid], seen[cid] = bool(inc), True
    if not seen.all():
        raise ValueError(f"{path}: mask must list every one of the {n_cells} cells")
    return out


@contextlib.contextmanager
def staged_directory(out_dir: str | Path):
    """Yield a scratch directory whose files are moved into ``out_dir`` on success.

    On any exception the scratch directory is removed and ``out_dir`` is left
    untouched, so a failing command writes no partial outputs.
    """
    out = Path(out_dir)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    try:
        yield tmp
        out.mkdir(exist_ok=True)
        for src in sorted(tmp.rglob("*")):
            dst = out / src.relative_to(tmp)
            if src.is_dir():
                dst.mkdir(exist_ok=True)
            else:
                os.replace(src, dst)
    finally:
        shutil.rmtree(tmp, ignore_errors=True)


def _matrix_header(first: str, labels) -> list[str]:
    return [first, *[str(v) for v in labels]]


def write_outputs(output, out_dir: str | Path) -> list[Path]:
    """Write a chain's draws and acceptance summary.

    Files: ``params.csv`` (iteration and each parameter), ``eta.csv``
    (iteration, random effects and, for t copulas, gamma), ``y_obs.csv`` and
    ``y_miss.csv`` (iteration then one column per stored BAU id) and
    ``acceptance.txt`` (flat key/value).
    """
    out = Path(out_dir)
    it = output.iterations
    paths = [out / "params.csv", out / "eta.csv", out / "acceptance.txt"]
    write_matrix_csv(paths[0], _matrix_header("iteration", output.param_names), it, output.params)
    eta_cols = [f"eta_{i + 1}" for i in range(output.eta.shape[1])]
    eta = output.eta
    if output.gamma is not None:
        eta_cols.append("gamma")
        eta = np.column_stack([eta, output.gamma])
    write_matrix_csv(paths[1], ["iteration", *eta_cols], it, eta)
    for name, ids, draws in (("y_obs", output.obs_ids, output.y_obs), ("y_miss", output.miss_ids, output.y_miss)):
        if draws is not None:
            p = out / f"{name}.csv"
            write_matrix_csv(p, _matrix_header("iteration", ids), it, draws.reshape(it.size, -1))
            paths.append(p)
    info = {"model": output.model}
    info.update({k: v for k, v in output.meta.items() if k != "elapsed_seconds"})
    info.update({f"acceptance_{k}": v for k, v in output.acceptance.items()})
    write_keyvalue(paths[2], info)
    return paths


def _read_matrix(path: Path):
    header, data = read_csv_columns(path)
    return header[1:], data[:, 0].astype(np.int64), data[:, 1:]


def read_outputs(out_dir: str | Path):
    """Load a chain written by :func:`write_outputs`."""
    from .mcmc import ChainOutput

    out = Path(out_dir)
    if not (out / "params.csv").exists():
        raise FileNotFoundError(f"{out}: no params.csv")
    names, it, params = _read_matrix(out / "params.csv")
    eta_cols, _, eta = _read_matrix(out / "eta.csv")
    gamma = None
    if eta_cols and eta_cols[-1] == "gamma":
        gamma, eta = eta[:, -1], eta[:, :-1]
    ys = {}
    for name in ("y_obs", "y_miss"):
        p = out / f"{name}.csv"
        if p.exists():
            ids, _, draws = _read_matrix(p)
            ys[name] = (np.asarray(ids, dtype=np.int64), draws)
        else:
            ys[name] = (np.zeros(0, dtype=np.int64), None)
    info = read_keyvalue(out / "acceptance.txt") if (out / "acceptance.txt").exists() else {}
    acc = {k[len("acceptance_"):]: float(v) for k, v in info.items() if k.startswith("acceptance_")}
    meta = {k: v for k, v in info.items() if not k.startswith("acceptance_") and k != "model"}
    return ChainOutput(
        model=info.get("model", ""),
        param_names=list(names),
        params=params,
        eta=eta,
        gamma=gamma,
        obs_ids=ys["y_obs"][0],
        miss_ids=ys["y_miss"][0],
        y_obs=ys["y_obs"][1],
        y_miss=ys["y_miss"][1],
        iterations=it,
        acceptance=acc,
        meta=meta,
    )
