"""Two-sample covariance test statistics, split-sample orchestration and p-value combination."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .data import FunctionalSample, SplitAssignment, split_sample
from .errors import FdcovError, InputError, StageError, UsageError
from .numerics import RngStream, SymmetricMatrix, chi_squared_upper_tail
from .scores import ScoreMoments, aggregate_moments, half_moments
from .smoothing import (
    CovarianceSurface,
    GridSpec,
    default_bandwidth,
    pool_two_groups,
    pooled_covariance,
)
from .spectral import EigenSystem, eigendecompose

SPLIT_IDS = ("Z_eval", "Z_prime_eval", "combined", "fully_observed")


def degrees_of_freedom(K: int) -> int:
    return K * (K + 1) // 2


@dataclass
class TestResult:
    statistic: float
    K: int
    df: int
    p_value: Optional[float]
    split_id: str
    flags: Dict = field(default_factory=dict)
    bandwidth_x: Optional[float] = None
    bandwidth_y: Optional[float] = None
    grid_size: Optional[int] = None
    seed: Optional[int] = None

    __test__ = False  # keep pytest from collecting this class

    def to_record(self) -> Dict:
        return asdict(self)


@dataclass
class TestConfig:
    """Settings of one split-sample test run.

    ``K`` may be a single truncation level or a sequence; all levels share the
    eigen-decomposition of each split direction.
    """

    K: Union[int, Sequence[int]] = 2
    grid_size: int = 51
    bandwidth_x: Optional[float] = None
    bandwidth_y: Optional[float] = None
    c_h: float = 1.0
    split: str = "random"
    seed: int = 0
    raw_denominator: bool = False
    eigensolver: str = "jacobi"

    __test__ = False

    @property
    def k_values(self) -> List[int]:
        ks = [self.K] if isinstance(self.K, (int, np.integer)) else list(self.K)
        if not ks or any(int(k) < 1 for k in ks):
            raise InputError(f"truncation levels must be positive integers, got {self.K}")
        return [int(k) for k in ks]


def nonstandardized_statistic(moments: ScoreMoments, K: int) -> float:
    """``n0 m0 / (n0 + m0) * sum_{j <= k <= K} (theta_jk - zeta_jk)**2``."""
    if not 1 <= K <= moments.K:
        raise InputError(f"K must lie in [1, {moments.K}], got {K}")
    d = moments.theta_hat[:K, :K] - moments.zeta_hat[:K, :K]
    iu = np.triu_indices(K)
    n0, m0 = moments.n0, moments.m0
    return float(n0 * m0 / (n0 + m0) * np.sum(d[iu] ** 2))


def standardized_statistic(moments: ScoreMoments, K: int) -> float:
    """``n0 m0 / (n0 + m0) * sum_{j <= k <= K} (theta_jk - zeta_jk)**2 / rho_jk``."""
    if not 1 <= K <= moments.K:
        raise InputError(f"K must lie in [1, {moments.K}], got {K}")
    m = moments.truncated(K)
    d = m.theta_hat - m.zeta_hat
    iu = np.triu_indices(K)
    n0, m0 = m.n0, m.m0
    return float(n0 * m0 / (n0 + m0) * np.sum(d[iu] ** 2 / m.rho_hat[iu]))


def combine_pvalues(p1: float, p2: float, rule: str = "mean") -> float:
    if rule != "mean":
        raise InputError(f"unknown combination rule {rule!r}")
    for p in (p1, p2):
        if not 0.0 <= p <= 1.0:
            raise InputError(f"p-values must lie in [0, 1], got {p}")
    return min(1.0, max(0.0, 0.5 * (p1 + p2)))


@dataclass
class DirectionFit:
    """Intermediate products of one split direction (kept for diagnostics)."""

    surface: CovarianceSurface
    system: EigenSystem
    moments: ScoreMoments
    bandwidth_x: float
    bandwidth_y: float


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except FdcovError as exc:
        raise StageError(name, exc) from exc


def fit_direction(est_x: FunctionalSample, est_y: FunctionalSample, eval_x: FunctionalSample,
                  eval_y: FunctionalSample, config: TestConfig, k_max: int) -> DirectionFit:
    """Eigenfunctions from the estimation halves, moments from the evaluation halves."""
    grid = GridSpec(config.grid_size)
    hx = _stage("bandwidth", default_bandwidth, est_x, "covariance", grid.size, config.c_h, config.bandwidth_x)
    hy = _stage("bandwidth", default_bandwidth, est_y, "covariance", grid.size, config.c_h, config.bandwidth_y)
    cx = _stage("smoothing", pooled_covariance, est_x, grid, hx, config.raw_denominator)
    cy = _stage("smoothing", pooled_covariance, est_y, grid, hy, config.raw_denominator)
    cp = _stage("pooling", pool_two_groups, cx, cy, len(est_x), len(est_y))
    system = _stage("eigendecomposition", eigendecompose, cp, k_max, config.eigensolver)
    mx = _stage("moments", half_moments, eval_x, system)
    my = _stage("moments", half_moments, eval_y, system)
    moments = _stage("moments", aggregate_moments, mx, my)
    return DirectionFit(cp, system, moments, hx, hy)


def _direction_results(fit: DirectionFit, ks: Sequence[int], split_id: str, config: TestConfig) -> Dict[int, TestResult]:
    out = {}
    for K in ks:
        m = fit.moments.truncated(K)
        stat = standardized_statistic(m, K)
        df = degrees_of_freedom(K)
        flags = {
            "floored_pairs": m.floored_pairs(),
            "empty_cells": fit.surface.empty_cells,
            "empty_fraction": fit.surface.empty_cells / (2 * fit.surface.grid.size ** 2),
            "eigenvalues": fit.system.eigenvalues[:K].tolist(),
            "n0": m.n0,
            "m0": m.m0,
        }
        out[K] = TestResult(stat, K, df, chi_squared_upper_tail(stat, df), split_id, flags,
                            fit.bandwidth_x, fit.bandwidth_y, config.grid_size, config.seed)
    return out


def run_split_tests(sample_x: FunctionalSample, sample_y: FunctionalSample, config: TestConfig,
                    split: Optional[SplitAssignment] = None, return_fits: bool = False):
    """Run the split-sample test in both directions for every K in ``config``.

    Returns ``{K: (Z_eval, Z_prime_eval, combined)}``. ``Z_prime_eval`` uses
    eigenfunctions estimated on half a (1-based even positions) and moments
    on half b; ``Z_eval`` reverses the roles. The combined result carries the
    mean of the two p-values and the mean of the two statistics.
    """
    ks = config.k_values
    if split is None:
        split = _stage("splitting", split_sample, sample_x, sample_y, config.split, config.seed)
    xa, xb = sample_x.subset(split.x_a), sample_x.subset(split.x_b)
    ya, yb = sample_y.subset(split.y_a), sample_y.subset(split.y_b)
    k_max = max(ks)
    fit_zp = fit_direction(xa, ya, xb, yb, config, k_max)
    fit_z = fit_direction(xb, yb, xa, ya, config, k_max)
    res_zp = _direction_results(fit_zp, ks, "Z_prime_eval", config)
    res_z = _direction_results(fit_z, ks, "Z_eval", config)
    out = {}
    for K in ks:
        rz, rzp = res_z[K], res_zp[K]
        combined = TestResult(
            0.5 * (rz.statistic + rzp.statistic), K, rz.df, combine_pvalues(rz.p_value, rzp.p_value), "combined",
            {"p_Z_eval": rz.p_value, "p_Z_prime_eval": rzp.p_value,
             "floored_pairs": sorted(set(map(tuple, rz.flags["floored_pairs"])) | set(map(tuple, rzp.flags["floored_pairs"])))},
            None, None, config.grid_size, config.seed,
        )
        out[K] = (rz, rzp, combined)
    if return_fits:
        return out, {"Z_prime_eval": fit_zp, "Z_eval": fit_z}
    return out


def run_split_test(sample_x: FunctionalSample, sample_y: FunctionalSample, config: TestConfig,
                   split: Optional[SplitAssignment] = None) -> Tuple[TestResult, TestResult, TestResult]:
    """Single-K form of :func:`run_split_tests`: ``(Z_eval, Z_prime_eval, combined)``."""
    if not isinstance(config.K, (int, np.integer)):
        raise InputError("run_split_test takes a single K; use run_split_tests for a range")
    return run_split_tests(sample_x, sample_y, config, split)[int(config.K)]


def cross_sectional_covariance(curves: np.ndarray) -> np.ndarray:
    """Sample covariance of curves on a grid (rows are subjects), divisor n."""
    c = curves - curves.mean(axis=0)
    return c.T @ c / curves.shape[0]


def _fully_observed_value(cx, cy, n, m, grid, K, eigensolver) -> float:
    cp = (n * cx + m * cy) / (n + m)
    surface = CovarianceSurface(grid, SymmetricMatrix(cp), float("nan"))
    system = eigendecompose(surface, K, eigensolver)
    E = system.functions
    proj = E.T @ (cx - cy) @ E / grid.size ** 2
    iu = np.triu_indices(K)
    return float(n * m / (n + m) * np.sum(proj[iu] ** 2))


def fully_observed_statistic(curves_x: np.ndarray, curves_y: np.ndarray, grid: GridSpec, K: int,
                             n_permutations: int = 0, rng: Optional[RngStream] = None,
                             eigensolver: str = "jacobi") -> TestResult:
    """Projection statistic for curves observed on a common grid.

    ``nm/(n+m) * sum_{j <= k <= K} <(C_X - C_Y) e_j, e_k>**2`` with
    cross-sectional covariances and eigenfunctions of the pooled covariance.
    No asymptotic p-value is attached; with ``n_permutations > 0`` a
    permutation p-value ``(1 + #{T* >= T}) / (1 + B)`` is reported.
    """
    curves_x = np.asarray(curves_x, dtype=float)
    curves_y = np.asarray(curves_y, dtype=float)
    if curves_x.ndim != 2 or curves_y.ndim != 2 or curves_x.shape[1] != grid.size or curves_y.shape[1] != grid.size:
        raise UsageError(f"curves must be (subjects, {grid.size}) arrays")
    n, m = curves_x.shape[0], curves_y.shape[0]
    cx, cy = cross_sectional_covariance(curves_x), cross_sectional_covariance(curves_y)
    stat = _fully_observed_value(cx, cy, n, m, grid, K, eigensolver)
    p_value = None
    flags = {}
    if n_permutations > 0:
        if rng is None:
            raise InputError("permutation p-value requires an RngStream")
        pooled = np.vstack([curves_x, curves_y])
        exceed = 0
        for _ in range(n_permutations):
            idx = rng.generator.permutation(n + m)
            px, py = pooled[idx[:n]], pooled[idx[n:]]
            t = _fully_observed_value(cross_sectional_covariance(px), cross_sectional_covariance(py),
                                      n, m, grid, K, eigensolver)
            exceed += t >= stat
        p_value = (1 + exceed) / (1 + n_permutations)
        flags["n_permutations"] = n_permutations
    return TestResult(stat, K, degrees_of_freedom(K), p_value, "fully_observed", flags, None, None, grid.size,
                      rng.seed if rng is not None else None)
