"""Monte-Carlo coefficients, diagonal-removed second moments and their variance estimates."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import FunctionalSample, Subject
from .errors import InputError, UsageError
from .spectral import EigenSystem

VARIANCE_FLOOR = 1e-12


@dataclass(frozen=True)
class SubjectMoments:
    subject_id: str
    xi: np.ndarray  # (K,)
    theta: np.ndarray  # (K, K), symmetric


@dataclass(frozen=True)
class HalfMoments:
    """Stacked per-subject moments of one group within one half."""

    xi: np.ndarray  # (n, K)
    theta: np.ndarray  # (n, K, K)

    @property
    def n(self) -> int:
        return self.xi.shape[0]

    @classmethod
    def stack(cls, moments: Sequence[SubjectMoments]) -> "HalfMoments":
        if not moments:
            raise UsageError("cannot stack an empty list of subject moments")
        return cls(np.stack([m.xi for m in moments]), np.stack([m.theta for m in moments]))


def subject_moments(subject: Subject, system: EigenSystem, K: int | None = None) -> SubjectMoments:
    """``xi_j = mean_p X_p e_j(s_p)`` and ``theta_jk = sum_{p != p'} X_p X_p' e_j(s_p) e_k(s_p') / (N (N - 1))``.

    The double sum is evaluated as ``(S_j S_k - D_jk) / (N (N - 1))`` with
    ``S_j = sum_p X_p e_j(s_p)`` and ``D_jk = sum_p X_p**2 e_j(s_p) e_k(s_p)``.
    """
    N = subject.n_obs
    if N < 2:
        raise InputError(f"subject {subject.subject_id}: need at least 2 observations, has {N}")
    E = system.evaluate(subject.times, K)
    xe = subject.values[:, None] * E
    S = xe.sum(axis=0)
    D = xe.T @ xe
    theta = (np.outer(S, S) - D) / (N * (N - 1.0))
    return SubjectMoments(subject.subject_id, S / N, 0.5 * (theta + theta.T))


def half_moments(sample: FunctionalSample, system: EigenSystem, K: int | None = None) -> HalfMoments:
    """Vectorized :func:`subject_moments` over all subjects of ``sample``."""
    flat = sample.flat()
    if flat["counts"].size == 0:
        raise UsageError("empty half")
    if np.any(flat["counts"] < 2):
        raise InputError("every subject needs at least 2 observations")
    E = system.evaluate(flat["times"], K)
    xe = flat["values"][:, None] * E
    S = np.add.reduceat(xe, flat["starts"], axis=0)
    D = np.add.reduceat(xe[:, :, None] * xe[:, None, :], flat["starts"], axis=0)
    N = flat["counts"].astype(float)
    theta = (S[:, :, None] * S[:, None, :] - D) / (N * (N - 1.0))[:, None, None]
    theta = 0.5 * (theta + np.swapaxes(theta, 1, 2))
    return HalfMoments(S / N[:, None], theta)


def _as_half(moments) -> HalfMoments:
    if isinstance(moments, HalfMoments):
        return moments
    return HalfMoments.stack(list(moments))


@dataclass(frozen=True)
class ScoreMoments:
    """Centered second moments of both groups on the evaluation half.

    ``rho_raw`` holds the variance estimates before flooring; ``rho_hat``
    applies the floor ``1e-12 * max(rho_raw)`` and ``floored`` marks the
    affected (j, k) pairs.
    """

    theta_hat: np.ndarray
    zeta_hat: np.ndarray
    rho_raw: np.ndarray
    n0: int
    m0: int

    @property
    def K(self) -> int:
        return self.theta_hat.shape[0]

    @property
    def floor(self) -> float:
        return VARIANCE_FLOOR * max(float(self.rho_raw.max()), 0.0)

    @property
    def floored(self) -> np.ndarray:
        return self.rho_raw < self.floor if self.floor > 0 else np.ones_like(self.rho_raw, dtype=bool)

    @property
    def rho_hat(self) -> np.ndarray:
        fl = self.floor
        if fl == 0.0:
            # Everything degenerate; unit weights keep the statistic finite.
            return np.ones_like(self.rho_raw)
        return np.maximum(self.rho_raw, fl)

    def floored_pairs(self):
        f = self.floored
        return [(j + 1, k + 1) for j in range(self.K) for k in range(j, self.K) if f[j, k]]

    def truncated(self, K: int) -> "ScoreMoments":
        if not 1 <= K <= self.K:
            raise InputError(f"K must lie in [1, {self.K}], got {K}")
        return ScoreMoments(self.theta_hat[:K, :K], self.zeta_hat[:K, :K], self.rho_raw[:K, :K], self.n0, self.m0)


def _centered(h: HalfMoments) -> np.ndarray:
    xbar = h.xi.mean(axis=0)
    c = h.theta.mean(axis=0) - np.outer(xbar, xbar)
    return 0.5 * (c + c.T)


def aggregate_moments(half_x, half_y) -> ScoreMoments:
    """``theta_hat = mean_i theta_i - outer(mean_i xi_i)``, likewise for the Y half, plus variances."""
    hx, hy = _as_half(half_x), _as_half(half_y)
    if hx.n == 0 or hy.n == 0:
        raise UsageError("both halves must be nonempty")
    rho = variance_estimates(hx, hy) if hx.n >= 2 and hy.n >= 2 else np.full(hx.theta.shape[1:], np.nan)
    return ScoreMoments(_centered(hx), _centered(hy), rho, hx.n, hy.n)


def variance_estimates(half_x, half_y) -> np.ndarray:
    """Cross-weighted variance of the per-subject moments.

    ``rho_jk = m0/(n0+m0) * [mean_i theta_jk,i**2 - mean_i(theta_jk,i)**2]
             + n0/(n0+m0) * [mean_i zeta_jk,i**2 - mean_i(zeta_jk,i)**2]``

    Returned unfloored; see :attr:`ScoreMoments.rho_hat`.
    """
    hx, hy = _as_half(half_x), _as_half(half_y)
    if hx.n < 2 or hy.n < 2:
        raise InputError("variance estimates need at least 2 subjects in each half")
    n0, m0 = hx.n, hy.n
    vx = np.mean(hx.theta ** 2, axis=0) - hx.theta.mean(axis=0) ** 2
    vy = np.mean(hy.theta ** 2, axis=0) - hy.theta.mean(axis=0) ** 2
    rho = (m0 * vx + n0 * vy) / (n0 + m0)
    return 0.5 * (rho + rho.T)


def write_moments_csv(path, moments: ScoreMoments) -> None:
    """Long table ``j, k, theta_hat, zeta_hat, rho_raw, rho_hat, floored`` over ``j <= k``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["j", "k", "theta_hat", "zeta_hat", "rho_raw", "rho_hat", "floored"])
        rho, fl = moments.rho_hat, moments.floored
        for j in range(moments.K):
            for k in range(j, moments.K):
                w.writerow([j + 1, k + 1, repr(float(moments.theta_hat[j, k])), repr(float(moments.zeta_hat[j, k])),
                            repr(float(moments.rho_raw[j, k])), repr(float(rho[j, k])), int(fl[j, k])])
