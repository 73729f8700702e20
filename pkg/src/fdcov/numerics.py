"""Numerical primitives: smoothing kernel, Jacobi eigensolver, chi-squared tail, RNG streams."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
from numba import njit

from .errors import ConvergenceError, InputError

__all__ = [
    "kernel_weight",
    "SymmetricMatrix",
    "eigh",
    "chi_squared_upper_tail",
    "RngStream",
    "standard_normal_draws",
    "child_seed",
]

MASK64 = (1 << 64) - 1
RNG_ALGORITHM = "numpy-PCG64"
JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100
GAMMA_TOL = 1e-12
GAMMA_MAX_ITER = 10_000


def kernel_weight(u):
    """Epanechnikov kernel ``0.75 * (1 - u**2)`` on ``|u| <= 1``, zero outside.

    Accepts scalars or arrays; returns the same shape.
    """
    u = np.asarray(u, dtype=float)
    w = np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)
    return float(w) if w.ndim == 0 else w


class SymmetricMatrix:
    """Dense real symmetric matrix.

    The constructor symmetrizes its input by averaging with the transpose,
    so ``entries[i, j] == entries[j, i]`` holds exactly afterwards.
    """

    __slots__ = ("entries",)

    def __init__(self, entries):
        a = np.array(entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise InputError(f"expected a non-empty square matrix, got shape {a.shape}")
        a = 0.5 * (a + a.T)
        a.setflags(write=False)
        self.entries = a

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    def __repr__(self):
        return f"SymmetricMatrix(dim={self.dim})"


def _canonical_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so the first entry with magnitude above 1e-12 is positive."""
    out = vectors.copy()
    for j in range(out.shape[1]):
        nz = np.flatnonzero(np.abs(out[:, j]) > 1e-12)
        if nz.size and out[nz[0], j] < 0:
            out[:, j] = -out[:, j]
    return out


@njit(cache=True)
def _jacobi_kernel(A, V, tol, max_sweeps):
    """Row-cyclic Jacobi on ``A`` in place; returns (sweeps used, final relative off-norm)."""
    n = A.shape[0]
    scale = 0.0
    for i in range(n):
        for j in range(n):
            scale += A[i, j] * A[i, j]
    scale = np.sqrt(scale)
    sweeps = 0
    while True:
        off = 0.0
        for i in range(n):
            for j in range(n):
                if i != j:
                    off += A[i, j] * A[i, j]
        off = np.sqrt(off)
        if off <= tol * scale or sweeps >= max_sweeps:
            return sweeps, off / scale
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                tau = (A[q, q] - A[p, p]) / (2.0 * apq)
                if abs(tau) > 1e150:
                    t = 0.5 / tau
                elif tau >= 0.0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                # A <- J^T A J, V <- V J with J[p,p] = J[q,q] = c, J[p,q] = s, J[q,p] = -s
                for k in range(n):
                    akp = A[k, p]
                    akq = A[k, q]
                    A[k, p] = c * akp - s * akq
                    A[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = A[p, k]
                    aqk = A[q, k]
                    A[p, k] = c * apk - s * aqk
                    A[q, k] = s * apk + c * aqk
                A[p, q] = 0.0
                A[q, p] = 0.0
                for k in range(n):
                    vkp = V[k, p]
                    vkq = V[k, q]
                    V[k, p] = c * vkp - s * vkq
                    V[k, q] = s * vkp + c * vkq
        sweeps += 1


def _jacobi(a: np.ndarray, tol: float, max_sweeps: int):
    n = a.shape[0]
    A = np.array(a, dtype=np.float64, order="C")
    V = np.eye(n)
    if n == 1 or not np.any(A):
        return np.diag(A).copy(), V
    sweeps, residual = _jacobi_kernel(A, V, tol, max_sweeps)
    if residual > tol:
        raise ConvergenceError(
            f"Jacobi eigensolver did not converge in {max_sweeps} sweeps "
            f"(relative off-diagonal norm {residual:.3e})",
            residual=residual,
        )
    return np.diag(A).copy(), V


def eigh(matrix, k: int | None = None, method: str = "jacobi") -> List[Tuple[float, np.ndarray]]:
    """Top-``k`` eigenpairs of a symmetric matrix, in descending eigenvalue order.

    Parameters
    ----------
    matrix : SymmetricMatrix or array_like
        Symmetric input; plain arrays are symmetrized first.
    k : int, optional
        Number of leading pairs to return (default: all).
    method : {'jacobi', 'lapack'}
        ``'jacobi'`` runs row-cyclic Jacobi rotations until the
        off-diagonal Frobenius norm falls below ``1e-12 * ||A||_F`` (cap of 100
        sweeps). ``'lapack'`` delegates to :func:`numpy.linalg.eigh`.

    Returns
    -------
    list of (float, ndarray)
        Unit eigenvectors, each sign-canonicalized so that its first entry with
        magnitude above 1e-12 is positive.

    Raises
    ------
    ConvergenceError
        If Jacobi sweeps hit the cap; ``residual`` holds the attained off-norm.
    """
    if not isinstance(matrix, SymmetricMatrix):
        matrix = SymmetricMatrix(matrix)
    a = matrix.entries
    n = matrix.dim
    if k is None:
        k = n
    if not 1 <= k <= n:
        raise InputError(f"k must lie in [1, {n}], got {k}")
    if method == "jacobi":
        values, vectors = _jacobi(a, JACOBI_TOL, JACOBI_MAX_SWEEPS)
    elif method == "lapack":
        values, vectors = np.linalg.eigh(a)
    else:
        raise InputError(f"unknown eigensolver {method!r}")
    order = np.argsort(-values, kind="stable")[:k]
    vectors = _canonical_signs(vectors[:, order])
    return [(float(values[i]), vectors[:, j].copy()) for j, i in enumerate(order)]


def _lower_series(a: float, x: float) -> float:
    # P(a, x) = x^a e^{-x} / Gamma(a+1) * sum_n x^n / ((a+1)...(a+n))
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(GAMMA_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * GAMMA_TOL:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _upper_continued_fraction(a: float, x: float) -> float:
    # Modified Lentz evaluation of the Legendre continued fraction for Q(a, x).
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, GAMMA_MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < GAMMA_TOL:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def chi_squared_upper_tail(x: float, df: int) -> float:
    """``P(chi2_df > x)`` via the regularized upper incomplete gamma ``Q(df/2, x/2)``.

    Uses the power series when ``x/2 < df/2 + 1`` and a continued fraction otherwise.
    """
    if df < 1:
        raise InputError(f"df must be >= 1, got {df}")
    if not x >= 0:
        raise InputError(f"x must be nonnegative, got {x}")
    if x == 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    a = 0.5 * df
    h = 0.5 * x
    if h < a + 1.0:
        q = 1.0 - _lower_series(a, h)
    else:
        q = _upper_continued_fraction(a, h)
    return min(1.0, max(0.0, q))


def _splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def child_seed(seed: int, index: int) -> int:
    """Derive the seed of replication ``index`` from a master seed.

    ``splitmix64(splitmix64(seed) XOR index)``, all arithmetic modulo 2**64.
    Distinct indices give statistically independent children and the mapping
    does not depend on how replications are scheduled.
    """
    return _splitmix64(_splitmix64(seed & MASK64) ^ (index & MASK64))


@dataclass
class RngStream:
    """Seeded random stream owned by exactly one replication."""

    seed: int
    algorithm: str = RNG_ALGORITHM
    generator: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 0 <= self.seed <= MASK64:
            raise InputError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        self.generator = np.random.Generator(np.random.PCG64(self.seed))

    def child(self, index: int) -> "RngStream":
        return RngStream(child_seed(self.seed, index))


def standard_normal_draws(rng: RngStream, count: int) -> np.ndarray:
    if count < 0:
        raise InputError(f"count must be >= 0, got {count}")
    return rng.generator.standard_normal(count)
