"""Eigen-decomposition of covariance surfaces and evaluation of the estimated eigenfunctions."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import InputError, TruncationError
from .numerics import eigh
from .smoothing import CovarianceSurface, GridSpec

RANK_TOL = 1e-12


@dataclass(frozen=True)
class EigenSystem:
    """Leading eigenpairs of a covariance operator discretized on ``grid``.

    ``functions`` has shape (G, K); each column has quadrature norm
    ``sum_g e(s_g)**2 / G == 1``.
    """

    grid: GridSpec
    eigenvalues: np.ndarray
    functions: np.ndarray

    @property
    def K(self) -> int:
        return self.eigenvalues.size

    def evaluate(self, t, K: int | None = None) -> np.ndarray:
        """All (or the first ``K``) eigenfunctions at times ``t``; shape (len(t), K)."""
        t = np.asarray(t, dtype=float)
        K = self.K if K is None else K
        pts = self.grid.points
        # np.interp holds the end values constant outside [s_1, s_G].
        return np.column_stack([np.interp(t, pts, self.functions[:, j]) for j in range(K)])

    def truncated(self, K: int) -> "EigenSystem":
        if not 1 <= K <= self.K:
            raise InputError(f"K must lie in [1, {self.K}], got {K}")
        return EigenSystem(self.grid, self.eigenvalues[:K], self.functions[:, :K])


def eigendecompose(surface: CovarianceSurface, K: int, method: str = "jacobi") -> EigenSystem:
    """Solve ``int C(s, t) e(t) dt = v e(s)`` by midpoint quadrature.

    The operator eigenvalues are the matrix eigenvalues divided by ``G``; the
    unit eigenvectors are scaled by ``sqrt(G)``.
    """
    G = surface.grid.size
    if not 1 <= K <= G:
        raise InputError(f"K must lie in [1, {G}], got {K}")
    if not np.all(np.isfinite(surface.matrix)):
        raise InputError("covariance surface has non-finite entries")
    pairs = eigh(surface.values, k=K, method=method)
    values = np.array([lam for lam, _ in pairs]) / G
    functions = np.column_stack([v for _, v in pairs]) * np.sqrt(G)
    valid = values >= RANK_TOL * values[0] if values[0] > 0 else np.zeros(K, dtype=bool)
    if not np.all(valid):
        max_k = int(np.argmin(valid))  # index of the first invalid pair
        raise TruncationError(
            f"K={K} exceeds the numerical rank of the pooled covariance; largest valid K is {max_k}",
            max_valid_k=max_k,
        )
    return EigenSystem(surface.grid, values, functions)


def evaluate_eigenfunction(system: EigenSystem, j: int, t: float) -> float:
    """Value of the ``j``-th (1-based) eigenfunction at ``t`` by linear interpolation."""
    if not 1 <= j <= system.K:
        raise InputError(f"j must lie in [1, {system.K}], got {j}")
    return float(np.interp(t, system.grid.points, system.functions[:, j - 1]))


def write_eigensystem_csv(path, system: EigenSystem) -> None:
    """One column per eigenfunction; the header carries the eigenvalues."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s"] + [f"e{j + 1}:{v!r}" for j, v in enumerate(system.eigenvalues.tolist())])
        for g, s in enumerate(system.grid.points):
            w.writerow([repr(float(s))] + [repr(float(x)) for x in system.functions[g]])


def read_eigensystem_csv(path) -> EigenSystem:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    values = np.array([float(h.split(":", 1)[1]) for h in rows[0][1:]])
    functions = np.array([[float(x) for x in r[1:]] for r in rows[1:]])
    return EigenSystem(GridSpec(functions.shape[0]), values, functions)
