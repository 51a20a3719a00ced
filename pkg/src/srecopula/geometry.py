"""BAU grids, observed/missing partitions and distances.

Cells are ordered row-major starting from the lower-left corner: the cell in
column ``i`` (x direction) and row ``j`` (y direction) has flat index
``j * nx + i``. Only cells that pass the inclusion mask receive a BAU id, and
BAU ids follow the flat order of the included cells.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

EARTH_RADIUS_KM = 6371.0

__all__ = [
    "EARTH_RADIUS_KM",
    "EmptyDomainError",
    "BAUGrid",
    "MAR",
    "MBD",
    "ExplicitMask",
    "MissingnessPartition",
    "build_grid",
    "partition_missing",
    "distance",
    "pairwise_distance",
]


class EmptyDomainError(ValueError):
    """Raised when a grid or partition leaves no usable BAUs."""


def _check_lonlat(points: np.ndarray) -> None:
    if np.any(np.abs(points[..., 1]) > 90.0):
        raise ValueError("latitude outside [-90, 90] degrees")


def pairwise_distance(
    a: np.ndarray,
    b: np.ndarray,
    metric: str = "euclidean",
    unit_km: float = 1.0,
) -> np.ndarray:
    """Distance matrix between two point sets.

    Parameters
    ----------
    a, b : ndarray, shape (n, 2) and (m, 2)
        Points as (x, y), or (lon, lat) in decimal degrees for great-circle.
    metric : {"euclidean", "great-circle"}
    unit_km : float
        Great-circle distances are divided by this (e.g. 100 for 100s of km).

    Returns
    -------
    ndarray, shape (n, m)
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if metric == "euclidean":
        diff = a[:, None, :] - b[None, :, :]
        return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    if metric == "great-circle":
        _check_lonlat(a)
        _check_lonlat(b)
        lon1, lat1 = np.radians(a[:, 0])[:, None], np.radians(a[:, 1])[:, None]
        lon2, lat2 = np.radians(b[:, 0])[None, :], np.radians(b[:, 1])[None, :]
        h = (
            np.sin((lat2 - lat1) / 2) ** 2
            + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2
        )
        h = np.clip(h, 0.0, 1.0)
        return 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(h)) / unit_km
    raise ValueError(f"unknown metric {metric!r}")


def distance(p, q, metric: str = "euclidean", unit_km: float = 1.0) -> float:
    """Distance between two single points."""
    return float(pairwise_distance(p, q, metric, unit_km)[0, 0])


@dataclass(frozen=True, eq=False)
class BAUGrid:
    """Regular rectangular tessellation of a bounding box.

    Attributes
    ----------
    bounds : tuple
        ``(xmin, ymin, xmax, ymax)``.
    nx, ny : int
        Cells per axis.
    metric : str
        ``"euclidean"`` or ``"great-circle"``.
    included : ndarray of bool, shape (nx * ny,)
        Inclusion flag per cell in flat order.
    unit_km : float
        Distance unit for great-circle grids.
    """

    bounds: tuple[float, float, float, float]
    nx: int
    ny: int
    metric: str = "euclidean"
    included: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]
    unit_km: float = 1.0

    def __post_init__(self):
        if self.included is None:
            object.__setattr__(self, "included", np.ones(self.nx * self.ny, dtype=bool))
        self.included.setflags(write=False)

    @property
    def dx(self) -> float:
        return (self.bounds[2] - self.bounds[0]) / self.nx

    @property
    def dy(self) -> float:
        return (self.bounds[3] - self.bounds[1]) / self.ny

    @cached_property
    def cell_ids(self) -> np.ndarray:
        """Flat cell index of each BAU."""
        return np.flatnonzero(self.included)

    @cached_property
    def n(self) -> int:
        return int(self.included.sum())

    @cached_property
    def cell_to_bau(self) -> np.ndarray:
        """BAU id for each flat cell, -1 for excluded cells."""
        out = np.full(self.nx * self.ny, -1, dtype=np.int64)
        out[self.included] = np.arange(self.n)
        return out

    @cached_property
    def centroids(self) -> np.ndarray:
        cells = self.cell_ids
        i, j = cells % self.nx, cells // self.nx
        x = self.bounds[0] + (i + 0.5) * self.dx
        y = self.bounds[1] + (j + 0.5) * self.dy
        return np.column_stack([x, y])

    @cached_property
    def diameter(self) -> float:
        """Distance between opposite corners of the bounding box."""
        x0, y0, x1, y1 = self.bounds
        return distance((x0, y0), (x1, y1), self.metric, self.unit_km)

    def locate(self, points: np.ndarray) -> np.ndarray:
        """BAU id containing each point, or -1 when outside the grid.

        Cells are closed on their upper/right edges so a point on a shared
        edge belongs to the lower-left cell; points on the outer lower/left
        boundary belong to the first row/column.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        x0, y0, x1, y1 = self.bounds
        x, y = pts[:, 0], pts[:, 1]
        inside = np.isfinite(x) & np.isfinite(y) & (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)
        i = np.ceil((x - x0) / self.dx) - 1
        j = np.ceil((y - y0) / self.dy) - 1
        i = np.clip(np.nan_to_num(i), 0, self.nx - 1).astype(np.int64)
        j = np.clip(np.nan_to_num(j), 0, self.ny - 1).astype(np.int64)
        out = self.cell_to_bau[j * self.nx + i]
        return np.where(inside, out, -1)


def build_grid(
    bounds: Sequence[float],
    nx: int,
    ny: int,
    mask: Callable[[np.ndarray], np.ndarray] | np.ndarray | None = None,
    metric: str = "euclidean",
    unit_km: float = 1.0,
) -> BAUGrid:
    """Build a regular BAU grid.

    Parameters
    ----------
    bounds : sequence of 4 floats
        ``(xmin, ymin, xmax, ymax)``.
    nx, ny : int
        Number of cells per axis.
    mask : callable or bool array, optional
        A callable is evaluated on the (nx*ny, 2) array of cell centroids and
        must return booleans. An array gives the inclusion flag per flat cell.
    metric : {"euclidean", "great-circle"}
    unit_km : float
        Great-circle distance unit in km.

    Raises
    ------
    EmptyDomainError
        If no cell survives the mask.
    """
    if nx < 1 or ny < 1:
        raise ValueError("nx and ny must be >= 1")
    x0, y0, x1, y1 = map(float, bounds)
    if not (x1 > x0 and y1 > y0):
        raise ValueError("degenerate bounds")
    if metric not in ("euclidean", "great-circle"):
        raise ValueError(f"unknown metric {metric!r}")
    if metric == "great-circle" and (abs(y0) > 90 or abs(y1) > 90):
        raise ValueError("latitude outside [-90, 90] degrees")
    full = BAUGrid((x0, y0, x1, y1), int(nx), int(ny), metric, None, unit_km)
    if mask is None:
        return full
    if callable(mask):
        inc = np.asarray(mask(full.centroids), dtype=bool).ravel()
    else:
        inc = np.asarray(mask, dtype=bool).ravel()
    if inc.size != nx * ny:
        raise ValueError("mask size does not match nx*ny")
    if not inc.any():
        raise EmptyDomainError("no cells remain after masking")
    return BAUGrid((x0, y0, x1, y1), int(nx), int(ny), metric, inc.copy(), unit_km)


@dataclass(frozen=True)
class MAR:
    """Missing at random: each BAU missing with probability ``p``.

    With ``exact=True`` exactly ``round(p * N)`` BAUs are chosen without
    replacement.
    """

    p: float
    seed: int = 0
    exact: bool = False


@dataclass(frozen=True)
class MBD:
    """Missing by design: BAUs whose centroid lies in any block are missing.

    ``blocks`` holds ``(xmin, ymin, xmax, ymax)`` rectangles (closed).
    """

    blocks: tuple[tuple[float, float, float, float], ...]

    @classmethod
    def corners(cls, bounds: Sequence[float]) -> "MBD":
        """Top-left and bottom-right quadrants of ``bounds``."""
        x0, y0, x1, y1 = map(float, bounds)
        xm, ym = (x0 + x1) / 2, (y0 + y1) / 2
        return cls(((x0, ym, xm, y1), (xm, y0, x1, ym)))


@dataclass(frozen=True, eq=False)
class ExplicitMask:
    """Observed flag per BAU id."""

    observed: tuple[bool, ...]


@dataclass(frozen=True, eq=False)
class MissingnessPartition:
    """Observed and missing BAU ids."""

    observed: np.ndarray
    missing: np.ndarray
    tag: str

    @property
    def k(self) -> int:
        return int(self.observed.size)

    @property
    def l(self) -> int:  # noqa: E743
        return int(self.missing.size)

    @cached_property
    def n(self) -> int:
        return self.k + self.l

    def flags(self) -> np.ndarray:
        """Boolean observed flag indexed by BAU id."""
        out = np.zeros(self.n, dtype=bool)
        out[self.observed] = True
        return out

    @classmethod
    def from_flags(cls, flags, tag: str = "explicit") -> "MissingnessPartition":
        flags = np.asarray(flags, dtype=bool)
        return cls(np.flatnonzero(flags), np.flatnonzero(~flags), tag)


def partition_missing(grid: BAUGrid, pattern) -> MissingnessPartition:
    """Split BAUs into observed and missing sets.

    Parameters
    ----------
    grid : BAUGrid
    pattern : MAR, MBD or ExplicitMask

    Raises
    ------
    EmptyDomainError
        If an MBD pattern leaves no observed BAU.
    """
    n = grid.n
    if isinstance(pattern, MAR):
        if not 0.0 <= pattern.p <= 1.0:
            raise ValueError("MAR probability must lie in [0, 1]")
        rng = np.random.default_rng(pattern.seed)
        if pattern.exact:
            missing = np.zeros(n, dtype=bool)
            missing[rng.choice(n, size=int(round(pattern.p * n)), replace=False)] = True
        else:
            missing = rng.random(n) < pattern.p
        tag = f"MAR(p={pattern.p}, seed={pattern.seed}{', exact' if pattern.exact else ''})"
        return MissingnessPartition.from_flags(~missing, tag)
    if isinstance(pattern, MBD):
        c = grid.centroids
        x0, y0, x1, y1 = grid.bounds
        missing = np.zeros(n, dtype=bool)
        for bx0, by0, bx1, by1 in pattern.blocks:
            if bx0 < x0 or by0 < y0 or bx1 > x1 or by1 > y1 or bx1 < bx0 or by1 < by0:
                raise ValueError(f"block {(bx0, by0, bx1, by1)} outside grid bounds")
            missing |= (c[:, 0] >= bx0) & (c[:, 0] <= bx1) & (c[:, 1] >= by0) & (c[:, 1] <= by1)
        if missing.all():
            raise EmptyDomainError("MBD blocks cover every BAU")
        return MissingnessPartition.from_flags(~missing, f"MBD({len(pattern.blocks)} blocks)")
    if isinstance(pattern, ExplicitMask):
        flags = np.asarray(pattern.observed, dtype=bool)
        if flags.size != n:
            raise ValueError("explicit mask length does not match the number of BAUs")
        return MissingnessPartition.from_flags(flags, "explicit")
    raise TypeError(f"unsupported missingness pattern {pattern!r}")
