"""Bisquare basis functions and the random-effects covariance E."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import linalg

from .geometry import BAUGrid, pairwise_distance

__all__ = [
    "CovarianceError",
    "Resolution",
    "BasisSet",
    "bisquare",
    "bisquare_value",
    "regular_basis",
    "basis_from_centers",
    "load_centers_csv",
    "evaluate_basis",
    "kernel_matrix",
    "build_E",
]

KERNELS = ("exponential", "spherical")


class CovarianceError(np.linalg.LinAlgError):
    """A covariance matrix could not be factorized."""


def bisquare(d, aperture):
    """Bisquare ``(1 - (d/r)^2)^2`` for ``d < r`` and 0 otherwise."""
    d = np.asarray(d, dtype=float)
    ratio2 = (d / aperture) ** 2
    return np.where(d < aperture, (1.0 - ratio2) ** 2, 0.0)


def bisquare_value(center, aperture: float, x, metric: str = "euclidean", unit_km: float = 1.0) -> float:
    """Value of one bisquare function at one point."""
    if aperture <= 0:
        raise ValueError("aperture must be positive")
    d = pairwise_distance(center, x, metric, unit_km)[0, 0]
    return float(bisquare(d, aperture))


@dataclass(frozen=True, eq=False)
class Resolution:
    centers: np.ndarray
    aperture: float

    @property
    def size(self) -> int:
        return int(self.centers.shape[0])


@dataclass(frozen=True, eq=False)
class BasisSet:
    """Basis functions grouped by resolution.

    Attributes
    ----------
    resolutions : tuple of Resolution
        Ordered coarse to fine (as supplied).
    metric : str
    unit_km : float
    aperture_rule : str
        ``"fixed"``, ``"1.5x-spacing"`` or ``"explicit"``.
    """

    resolutions: tuple[Resolution, ...]
    metric: str = "euclidean"
    unit_km: float = 1.0
    aperture_rule: str = "fixed"

    def __post_init__(self):
        for res in self.resolutions:
            if not res.aperture > 0:
                raise ValueError("apertures must be positive")
            if not np.all(np.isfinite(res.centers)):
                raise ValueError("basis centers must be finite")

    @property
    def b(self) -> int:
        return sum(r.size for r in self.resolutions)

    @property
    def n_resolutions(self) -> int:
        return len(self.resolutions)

    @cached_property
    def centers(self) -> np.ndarray:
        return np.vstack([r.centers for r in self.resolutions])

    @cached_property
    def apertures(self) -> np.ndarray:
        return np.concatenate([np.full(r.size, r.aperture) for r in self.resolutions])

    @cached_property
    def blocks(self) -> list[slice]:
        """Column slice of each resolution in S and E."""
        out, start = [], 0
        for r in self.resolutions:
            out.append(slice(start, start + r.size))
            start += r.size
        return out

    @cached_property
    def center_distances(self) -> list[np.ndarray]:
        """Within-resolution center distance matrices."""
        return [
            pairwise_distance(r.centers, r.centers, self.metric, self.unit_km)
            for r in self.resolutions
        ]


def _lattice(lo: float, hi: float, p: int) -> np.ndarray:
    return lo + (hi - lo) * (2 * np.arange(1, p + 1) - 1) / (2 * p)


def regular_basis(
    bounds: Sequence[float],
    counts: Sequence[int | tuple[int, int]],
    apertures: Sequence[float] | None = None,
    metric: str = "euclidean",
    unit_km: float = 1.0,
) -> BasisSet:
    """Centers at the cell midpoints of a regular lattice, one per resolution.

    Parameters
    ----------
    bounds : (xmin, ymin, xmax, ymax)
    counts : sequence
        Lattice size per resolution, either ``p`` (p x p) or ``(px, py)``.
    apertures : sequence of float, optional
        Fixed aperture per resolution. When omitted each aperture is 1.5
        times the larger center spacing of its lattice.
    """
    x0, y0, x1, y1 = map(float, bounds)
    if apertures is not None and len(apertures) != len(counts):
        raise ValueError("one aperture per resolution is required")
    res = []
    for k, c in enumerate(counts):
        px, py = (c, c) if np.isscalar(c) else c
        if px < 1 or py < 1:
            raise ValueError("lattice counts must be >= 1")
        gx, gy = np.meshgrid(_lattice(x0, x1, px), _lattice(y0, y1, py))
        centers = np.column_stack([gx.ravel(), gy.ravel()])
        if apertures is None:
            spacing = max((x1 - x0) / px, (y1 - y0) / py)
            ap = 1.5 * spacing
        else:
            ap = float(apertures[k])
        res.append(Resolution(centers, ap))
    rule = "1.5x-spacing" if apertures is None else "fixed"
    return BasisSet(tuple(res), metric, unit_km, rule)


def basis_from_centers(
    centers: np.ndarray,
    apertures: np.ndarray,
    resolution: np.ndarray | None = None,
    metric: str = "euclidean",
    unit_km: float = 1.0,
) -> BasisSet:
    """Basis set from explicit centers; functions sharing an aperture form a resolution
    unless ``resolution`` labels are given."""
    centers = np.asarray(centers, dtype=float)
    apertures = np.asarray(apertures, dtype=float)
    labels = apertures if resolution is None else np.asarray(resolution)
    res = []
    for lab in dict.fromkeys(labels.tolist()):
        sel = labels == lab
        ap = np.unique(apertures[sel])
        if ap.size != 1:
            raise ValueError("all functions in a resolution must share one aperture")
        res.append(Resolution(centers[sel], float(ap[0])))
    return BasisSet(tuple(res), metric, unit_km, "explicit")


def load_centers_csv(path: str | Path, metric: str = "euclidean", unit_km: float = 1.0) -> BasisSet:
    """Read a ``center_id,x,y,aperture`` file."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["center_id", "x", "y", "aperture"]:
            raise ValueError(f"{path}: header must be center_id,x,y,aperture")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append([float(v) for v in row[1:4]])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            if len(row) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 fields")
    if not rows:
        raise ValueError(f"{path}: no basis centers")
    arr = np.asarray(rows)
    return basis_from_centers(arr[:, :2], arr[:, 2], metric=metric, unit_km=unit_km)


def evaluate_basis(grid: BAUGrid, basis: BasisSet) -> np.ndarray:
    """N x b matrix of basis functions evaluated at the BAU centroids."""
    d = pairwise_distance(grid.centroids, basis.centers, basis.metric, basis.unit_km)
    return bisquare(d, basis.apertures[None, :])


def kernel_matrix(d: np.ndarray, kernel: str, theta_s: float, theta_r: float) -> np.ndarray:
    """Exponential or spherical covariance evaluated at distances ``d``."""
    if kernel == "exponential":
        return theta_s * np.exp(-d / theta_r)
    if kernel == "spherical":
        h = d / theta_r
        return np.where(h < 1.0, theta_s * (1.0 - 1.5 * h + 0.5 * h**3), 0.0)
    raise ValueError(f"unknown kernel {kernel!r}")


def build_E(
    basis: BasisSet,
    kernel: str,
    theta_s: float | Sequence[float],
    theta_r: float,
    check: bool = True,
) -> np.ndarray:
    """Block-diagonal random-effects covariance.

    Parameters
    ----------
    basis : BasisSet
    kernel : {"exponential", "spherical"}
    theta_s : float or sequence
        Variance per resolution; a scalar is shared by all resolutions.
    theta_r : float
        Range shared by all resolutions.
    check : bool
        Verify positive-definiteness by Cholesky factorization. On failure a
        jitter of ``1e-10 * theta_s`` is added to the diagonal once.

    Raises
    ------
    CovarianceError
        If the matrix is still not positive-definite after the jitter.
    """
    ts = np.broadcast_to(np.asarray(theta_s, dtype=float), (basis.n_resolutions,))
    if np.any(ts <= 0) or not theta_r > 0:
        raise ValueError("theta_s and theta_r must be positive")
    E = np.zeros((basis.b, basis.b))
    for blk, d, t in zip(basis.blocks, basis.center_distances, ts):
        E[blk, blk] = kernel_matrix(d, kernel, t, theta_r)
    if check:
        E, _ = factor_E(E, basis, ts, kernel, theta_r)
    return E


def factor_E(E: np.ndarray, basis: BasisSet | None = None, theta_s=None, kernel: str = "", theta_r=None):
    """Lower Cholesky factor of E, with the single-jitter retry.

    Returns the (possibly jittered) E and its factor.
    """
    try:
        return E, linalg.cholesky(E, lower=True, check_finite=False)
    except linalg.LinAlgError:
        pass
    if basis is not None and theta_s is not None:
        jit = np.concatenate([np.full(r.size, 1e-10 * t) for r, t in zip(basis.resolutions, theta_s)])
    else:
        jit = np.full(E.shape[0], 1e-10 * float(np.max(np.diag(E))))
    E = E + np.diag(jit)
    try:
        return E, linalg.cholesky(E, lower=True, check_finite=False)
    except linalg.LinAlgError:
        raise CovarianceError(
            f"E is not positive-definite (kernel={kernel}, theta_s={theta_s}, theta_r={theta_r})"
        ) from None
