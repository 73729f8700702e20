"""Kernel covariance smoothing on a regular grid and per-curve local linear pre-smoothing."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import FunctionalSample, Subject
from .errors import EstimationError, InputError, UsageError
from .numerics import SymmetricMatrix, kernel_weight

DEFAULT_GRID_SIZE = 51
MAX_EMPTY_FRACTION = 0.05
H_MAX = 0.5


@dataclass(frozen=True)
class GridSpec:
    """Midpoint grid ``(g - 0.5) / G`` on [0, 1] with quadrature weight ``1 / G``."""

    size: int = DEFAULT_GRID_SIZE

    def __post_init__(self):
        if self.size < 1:
            raise InputError(f"grid size must be positive, got {self.size}")

    @property
    def points(self) -> np.ndarray:
        return (np.arange(1, self.size + 1) - 0.5) / self.size

    @property
    def weight(self) -> float:
        return 1.0 / self.size


@dataclass(frozen=True)
class CovarianceSurface:
    grid: GridSpec
    values: SymmetricMatrix
    bandwidth: float
    group_weight: float = 1.0
    n_subjects: int = 0
    empty_cells: int = 0

    @property
    def matrix(self) -> np.ndarray:
        return self.values.entries


def _kernel_matrix(times: np.ndarray, grid: GridSpec, h: float) -> np.ndarray:
    """``W[p, g] = K((t_p - s_g) / h)``."""
    return kernel_weight((times[:, None] - grid.points[None, :]) / h)


def _offdiag_sums(weights: np.ndarray, values: np.ndarray, starts: np.ndarray):
    # sum_i sum_{p != p'} w_p w_p'^T v_p v_p'
    #   = sum_i a_i a_i^T - sum_p v_p^2 w_p w_p^T,   a_i = sum_{p in i} v_p w_p
    wv = weights * values[:, None]
    per_subject = np.add.reduceat(wv, starts, axis=0)
    return per_subject.T @ per_subject - wv.T @ wv


def _fill_empty(values: np.ndarray, empty: np.ndarray) -> np.ndarray:
    """Copy into each empty cell the value of the nearest nonempty cell (index distance)."""
    filled = values.copy()
    ei, ej = np.nonzero(empty)
    fi, fj = np.nonzero(~empty)
    d = (ei[:, None] - fi[None, :]) ** 2 + (ej[:, None] - fj[None, :]) ** 2
    nearest = np.argmin(d, axis=1)
    filled[ei, ej] = values[fi[nearest], fj[nearest]]
    return filled


def pooled_covariance(sample: FunctionalSample, grid: GridSpec, h: float,
                      raw_denominator: bool = False) -> CovarianceSurface:
    """Pool-smoothed covariance surface from off-diagonal products ``X_ip X_ip'``.

    With the default Nadaraya-Watson normalization each cell is the ratio of
    kernel-weighted off-diagonal product sums to the matching kernel mass.
    Cells without mass take the value of the nearest nonempty cell; more
    than 5% empty cells raises :class:`EstimationError`.

    ``raw_denominator=True`` instead divides each subject's sum by
    ``N_i (N_i - 1) h**2`` and averages over subjects (fixed-denominator form).
    """
    if not h > 0:
        raise InputError(f"bandwidth must be positive, got {h}")
    if len(sample) == 0:
        raise InputError("cannot smooth an empty sample")
    flat = sample.flat()
    W = _kernel_matrix(flat["times"], grid, h)
    if raw_denominator:
        counts = flat["counts"]
        scale = np.repeat(1.0 / np.sqrt(counts * (counts - 1.0)), counts)
        num = _offdiag_sums(W * scale[:, None], flat["values"], flat["starts"])
        values = num / (len(sample) * h * h)
        return CovarianceSurface(grid, SymmetricMatrix(values), h, 1.0, len(sample), 0)

    num = _offdiag_sums(W, flat["values"], flat["starts"])
    den = _offdiag_sums(W, np.ones_like(flat["values"]), flat["starts"])
    mass_floor = 1e-12 * max(float(den.max()), 0.0)
    empty = den <= mass_floor
    n_empty = int(empty.sum())
    frac = n_empty / empty.size
    if n_empty == empty.size:
        raise EstimationError("every grid cell is empty; bandwidth too small (empty fraction 1.0)", 1.0)
    if frac > MAX_EMPTY_FRACTION:
        raise EstimationError(
            f"{frac:.1%} of grid cells have no kernel mass (limit {MAX_EMPTY_FRACTION:.0%}); increase the bandwidth",
            frac,
        )
    values = np.where(empty, 0.0, num / np.where(empty, 1.0, den))
    if n_empty:
        values = _fill_empty(values, empty)
    return CovarianceSurface(grid, SymmetricMatrix(values), h, 1.0, len(sample), n_empty)


def pool_two_groups(cx: CovarianceSurface, cy: CovarianceSurface, n_half: int, m_half: int) -> CovarianceSurface:
    """Convex combination ``(n C_X + m C_Y) / (n + m)``."""
    if cx.grid != cy.grid:
        raise UsageError(f"grid mismatch: {cx.grid.size} vs {cy.grid.size}")
    if n_half < 0 or m_half < 0 or n_half + m_half == 0:
        raise UsageError("group weights must be nonnegative and not both zero")
    wx = n_half / (n_half + m_half)
    # Written as an update of cy so that equal operands come back unchanged.
    values = cy.matrix + wx * (cx.matrix - cy.matrix)
    return CovarianceSurface(
        cx.grid,
        SymmetricMatrix(values),
        bandwidth=cx.bandwidth if cx.bandwidth == cy.bandwidth else float("nan"),
        group_weight=wx,
        n_subjects=n_half + m_half,
        empty_cells=cx.empty_cells + cy.empty_cells,
    )


def presmooth_curve(subject: Subject, grid: GridSpec, h: float) -> np.ndarray:
    """Local linear fit of one subject's observations, evaluated on ``grid``.

    Where the local design is singular the fit falls back to the local
    kernel average, and where no observation has kernel mass to the mean of
    the observations at the nearest observed time.
    """
    if subject.n_obs < 2:
        raise InputError(f"subject {subject.subject_id}: need at least 2 observations")
    if not h > 0:
        raise InputError(f"bandwidth must be positive, got {h}")
    t, y = subject.times, subject.values
    s = grid.points
    d = t[None, :] - s[:, None]
    w = kernel_weight(d / h)
    s0 = w.sum(axis=1)
    s1 = (w * d).sum(axis=1)
    s2 = (w * d * d).sum(axis=1)
    t0 = (w * y).sum(axis=1)
    t1 = (w * d * y).sum(axis=1)
    det = s0 * s2 - s1 * s1

    out = np.empty(s.size)
    # Fewer than two distinct times inside the window makes det vanish.
    distinct = np.array([np.unique(t[w[g] > 0]).size for g in range(s.size)])
    linear = (distinct >= 2) & (det > 1e-12 * np.maximum(s0 * s2, 1e-300))
    out[linear] = (s2[linear] * t0[linear] - s1[linear] * t1[linear]) / det[linear]
    const = ~linear & (s0 > 0)
    out[const] = t0[const] / s0[const]
    none = ~linear & ~const
    if np.any(none):
        for g in np.flatnonzero(none):
            dist = np.abs(t - s[g])
            out[g] = y[dist == dist.min()].mean()
    return out


def default_bandwidth(sample: FunctionalSample, purpose: str = "covariance",
                      grid_size: int = DEFAULT_GRID_SIZE, c_h: float = 1.0,
                      override: Optional[float] = None) -> float:
    """Rate-matched bandwidth, clamped to ``[2 / G, 0.5]``.

    covariance: ``c_h * (sum_i N_i (N_i - 1)) ** (-1/5)``
    presmooth:  ``c_h * mean(N_i) ** (-1/5)``

    An explicit ``override`` is returned unchanged.
    """
    if override is not None:
        if not override > 0:
            raise InputError(f"bandwidth override must be positive, got {override}")
        return float(override)
    if len(sample) == 0:
        raise InputError("cannot choose a bandwidth for an empty sample")
    counts = sample.counts.astype(float)
    if purpose == "covariance":
        h = c_h * float(np.sum(counts * (counts - 1.0))) ** -0.2
    elif purpose == "presmooth":
        h = c_h * float(counts.mean()) ** -0.2
    else:
        raise InputError(f"unknown bandwidth purpose {purpose!r}")
    return float(min(max(h, 2.0 / grid_size), H_MAX))


def write_surface_csv(path, surface: CovarianceSurface) -> None:
    """Write ``G``, ``h``, then the G x G matrix, one row per line."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["G", surface.grid.size])
        w.writerow(["h", repr(surface.bandwidth)])
        for row in surface.matrix:
            w.writerow([repr(float(v)) for v in row])


def read_surface_csv(path) -> CovarianceSurface:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    G = int(rows[0][1])
    h = float(rows[1][1])
    values = np.array([[float(v) for v in r] for r in rows[2:2 + G]])
    return CovarianceSurface(GridSpec(G), SymmetricMatrix(values), h)
