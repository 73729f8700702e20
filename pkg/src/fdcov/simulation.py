"""Simulation designs, replication engine for size/power curves, permutation and bootstrap studies."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .covtest import TestConfig, fully_observed_statistic, run_split_tests
from .data import FunctionalSample, Subject, bootstrap_within_groups, permute_groups
from .errors import FdcovError, InputError
from .numerics import RngStream, child_seed
from .smoothing import GridSpec, default_bandwidth, presmooth_curve

READINGS = ("combined", "pooled", "Z_eval", "Z_prime_eval")


def default_eigenvalues(J: int = 50, decay: float = 1.5) -> np.ndarray:
    lam = np.arange(1, J + 1, dtype=float) ** -decay
    lam[0] = 1.0
    if J > 1:
        lam[1] = 0.64
    return lam


def sine_basis(t, J: int) -> np.ndarray:
    """``sqrt(2) sin(j pi t)`` for j = 1..J; shape (len(t), J)."""
    t = np.asarray(t, dtype=float)
    return np.sqrt(2.0) * np.sin(np.pi * t[:, None] * np.arange(1, J + 1)[None, :])


@dataclass(frozen=True)
class ScenarioSpec:
    """Alternative direction: I scales components 1-2, II components 3-4, custom uses ``gamma``."""

    id: str = "I"
    a: float = 0.0
    gamma: Optional[tuple] = None

    def __post_init__(self):
        if self.id not in ("I", "II", "custom"):
            raise InputError(f"unknown scenario {self.id!r}")
        if self.a < 0:
            raise InputError(f"signal strength must be >= 0, got {self.a}")
        if self.id == "custom" and self.gamma is None:
            raise InputError("custom scenario needs a gamma vector")

    def gamma_vector(self, J: int) -> np.ndarray:
        g = np.zeros(J)
        if self.id == "I":
            g[:2] = self.a
        elif self.id == "II":
            g[2:4] = self.a
        else:
            given = np.asarray(self.gamma, dtype=float)
            if given.size > J:
                raise InputError(f"gamma has {given.size} entries but the design has {J} components")
            g[: given.size] = given
        if np.any(g <= -1):
            raise InputError("every gamma_j must exceed -1")
        return g


@dataclass(frozen=True)
class SimulationDesign:
    n: int = 100
    m: int = 100
    N: int = 15
    M: int = 15
    J: int = 50
    sigma: float = 0.1
    eigenvalues: Optional[tuple] = None

    def __post_init__(self):
        for name in ("n", "m"):
            if getattr(self, name) < 1:
                raise InputError(f"{name} must be positive")
        for name in ("N", "M"):
            if getattr(self, name) < 2:
                raise InputError(f"{name} must be at least 2")
        if self.sigma < 0:
            raise InputError("sigma must be nonnegative")
        lam = self.lambdas
        if np.any(lam <= 0) or np.any(np.diff(lam[2:]) > 0):
            raise InputError("eigenvalues must be positive and nonincreasing from the third on")

    @property
    def lambdas(self) -> np.ndarray:
        if self.eigenvalues is None:
            return default_eigenvalues(self.J)
        lam = np.asarray(self.eigenvalues, dtype=float)
        if lam.size != self.J:
            raise InputError(f"expected {self.J} eigenvalues, got {lam.size}")
        return lam


def _generate_group(label: str, size: int, n_obs: int, coef: np.ndarray, sigma: float,
                    gen: np.random.Generator) -> FunctionalSample:
    J = coef.size
    scores = gen.standard_normal((size, J)) * coef
    times = gen.uniform(0.0, 1.0, size=(size, n_obs))
    noise = gen.standard_normal((size, n_obs)) * sigma
    subjects = []
    for i in range(size):
        curve = sine_basis(times[i], J) @ scores[i]
        subjects.append(Subject(f"{label}{i + 1:04d}", times[i], curve + noise[i]))
    return FunctionalSample(label, tuple(subjects))


def generate_pair(design: SimulationDesign, scenario: ScenarioSpec, rng: RngStream):
    """Draw both groups from the truncated Karhunen-Loeve model with uniform times and Gaussian noise.

    Y's j-th coefficient is ``(1 + gamma_j) * sqrt(lambda_j) * b_ij``.
    """
    lam = design.lambdas
    gamma = scenario.gamma_vector(design.J)
    gen = rng.generator
    x = _generate_group("x", design.n, design.N, np.sqrt(lam), design.sigma, gen)
    y = _generate_group("y", design.m, design.M, (1.0 + gamma) * np.sqrt(lam), design.sigma, gen)
    return x, y


def presmooth_sample(sample: FunctionalSample, grid: GridSpec, h: Optional[float] = None) -> np.ndarray:
    h = default_bandwidth(sample, "presmooth", grid.size) if h is None else h
    return np.vstack([presmooth_curve(s, grid, h) for s in sample.subjects])


# -- replication engine -------------------------------------------------------------------------


@dataclass
class _Task:
    kind: str  # "simulate" | "permute" | "bootstrap"
    rep: int
    seed: int
    config: TestConfig
    level: float
    design: Optional[SimulationDesign] = None
    scenario: Optional[ScenarioSpec] = None
    sample_x: Optional[FunctionalSample] = None
    sample_y: Optional[FunctionalSample] = None
    baseline_permutations: int = 0


def _run_task(task: _Task) -> Dict:
    """One replication: returns per-K rejection indicators for every reading, or a failure record."""
    rng = RngStream(child_seed(task.seed, task.rep))
    if task.kind == "simulate":
        x, y = generate_pair(task.design, task.scenario, rng)
    elif task.kind == "permute":
        x, y = permute_groups(task.sample_x, task.sample_y, rng)
    elif task.kind == "bootstrap":
        x, y = bootstrap_within_groups(task.sample_x, task.sample_y, rng)
    else:
        raise ValueError(task.kind)
    config = replace(task.config, seed=child_seed(rng.seed, 1))
    try:
        results = run_split_tests(x, y, config)
    except FdcovError as exc:
        return {"rep": task.rep, "error": str(exc)}
    out = {"rep": task.rep, "rejections": {}}
    for K, (rz, rzp, comb) in results.items():
        zr = rz.p_value < task.level
        zpr = rzp.p_value < task.level
        out["rejections"][K] = {
            "combined": float(comb.p_value < task.level),
            "pooled": (zr + zpr) / 2.0,
            "Z_eval": float(zr),
            "Z_prime_eval": float(zpr),
        }
    if task.baseline_permutations > 0:
        grid = GridSpec(task.config.grid_size)
        cx, cy = presmooth_sample(x, grid), presmooth_sample(y, grid)
        base_rng = rng.child(2)
        for K in results:
            res = fully_observed_statistic(cx, cy, grid, K, task.baseline_permutations, base_rng,
                                           task.config.eigensolver)
            out["rejections"][K]["baseline"] = float(res.p_value < task.level)
    return out


def _execute(tasks: List[_Task], n_jobs: int) -> List[Dict]:
    if n_jobs is None or n_jobs <= 1 or len(tasks) <= 1:
        return [_run_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * n_jobs))))


def _summarize(outcomes: List[Dict], ks: Sequence[int], base: Dict) -> List[Dict]:
    ok = sorted((o for o in outcomes if "rejections" in o), key=lambda o: o["rep"])
    failures = len(outcomes) - len(ok)
    readings = list(READINGS)
    if ok and "baseline" in ok[0]["rejections"][ks[0]]:
        readings.append("baseline")
    rows = []
    for K in ks:
        for reading in readings:
            hits = [o["rejections"][K][reading] for o in ok]
            r = float(np.mean(hits)) if hits else float("nan")
            reps = len(hits)
            rows.append({**base, "K": K, "split_reading": reading, "rate": r,
                         "mc_se": math.sqrt(r * (1 - r) / reps) if reps else float("nan"),
                         "reps": reps, "failures": failures})
    return rows


def rejection_curve(design: SimulationDesign, scenarios: Iterable[ScenarioSpec], ks: Sequence[int],
                    level: float = 0.05, reps: int = 200, seed: int = 0, config: Optional[TestConfig] = None,
                    n_jobs: int = 1, baseline_permutations: int = 0) -> List[Dict]:
    """Rejection rates per (scenario, a, K, reading) over ``reps`` replications.

    Replication ``r`` draws its data from ``child_seed(seed, r)`` for every
    scenario, so different signal strengths share common random numbers.
    The ``combined`` reading rejects when the mean of the two split p-values
    is below ``level``; ``pooled`` averages the two directional rejections.
    Replications that raise a numerical error are excluded and counted in
    ``failures``.
    """
    if reps < 1:
        raise InputError("reps must be >= 1")
    ks = sorted(set(int(k) for k in ks))
    config = replace(config or TestConfig(), K=ks, split="random")
    rows = []
    for sc in scenarios:
        tasks = [_Task("simulate", r, seed, config, level, design, sc, baseline_permutations=baseline_permutations)
                 for r in range(reps)]
        base = {"scenario": sc.id, "a": sc.a, "n": design.n, "m": design.m, "N": design.N, "M": design.M}
        rows += _summarize(_execute(tasks, n_jobs), ks, base)
    return rows


def _resampling_study(kind: str, sample_x, sample_y, config: TestConfig, reps: int, seed: int,
                      level: float, n_jobs: int) -> List[Dict]:
    if reps <= 0:
        return []
    ks = config.k_values
    config = replace(config, split="random")
    tasks = [_Task(kind, r, seed, config, level, sample_x=sample_x, sample_y=sample_y) for r in range(reps)]
    base = {"study": kind, "n": len(sample_x), "m": len(sample_y)}
    return _summarize(_execute(tasks, n_jobs), ks, base)


def permutation_study(sample_x: FunctionalSample, sample_y: FunctionalSample, config: TestConfig,
                      reps: int, seed: int, level: float = 0.05, n_jobs: int = 1) -> List[Dict]:
    """Rejection rates over datasets whose group labels were randomly permuted."""
    return _resampling_study("permute", sample_x, sample_y, config, reps, seed, level, n_jobs)


def bootstrap_study(sample_x: FunctionalSample, sample_y: FunctionalSample, config: TestConfig,
                    reps: int, seed: int, level: float = 0.05, n_jobs: int = 1) -> List[Dict]:
    """Rejection rates over within-group bootstrap resamples."""
    return _resampling_study("bootstrap", sample_x, sample_y, config, reps, seed, level, n_jobs)


def rate(rows: Sequence[Dict], reading: str = "combined", **match) -> float:
    """Look up a single rate from a rejection table."""
    hits = [r["rate"] for r in rows if r["split_reading"] == reading and all(r.get(k) == v for k, v in match.items())]
    if len(hits) != 1:
        raise KeyError(f"{len(hits)} rows match reading={reading} {match}")
    return hits[0]


def write_table_csv(path, rows: Sequence[Dict]) -> None:
    if not rows:
        with open(path, "w", newline="") as fh:
            fh.write("")
        return
    fields = list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        w.writerows(rows)
