import math

import numpy as np
import pytest

from fdcov.covtest import TestConfig
from fdcov.errors import InputError
from fdcov.numerics import RngStream, child_seed
from fdcov.simulation import (
    ScenarioSpec,
    SimulationDesign,
    bootstrap_study,
    default_eigenvalues,
    generate_pair,
    permutation_study,
    rate,
    rejection_curve,
    sine_basis,
    write_table_csv,
)


def test_default_eigenvalues():
    lam = default_eigenvalues()
    assert lam.size == 50
    assert lam[0] == 1.0 and lam[1] == 0.64
    assert lam[2] == pytest.approx(3 ** -1.5)
    assert np.all(np.diff(lam[2:]) < 0)


def test_scenarios():
    np.testing.assert_array_equal(ScenarioSpec("I", 0.6).gamma_vector(5), [0.6, 0.6, 0, 0, 0])
    np.testing.assert_array_equal(ScenarioSpec("II", 0.6).gamma_vector(5), [0, 0, 0.6, 0.6, 0])
    np.testing.assert_array_equal(ScenarioSpec("custom", 1, (0.1, -0.5)).gamma_vector(3), [0.1, -0.5, 0])
    with pytest.raises(InputError):
        ScenarioSpec("custom", 1, (-1.5,)).gamma_vector(3)
    with pytest.raises(InputError):
        ScenarioSpec("III", 0.1)
    with pytest.raises(InputError):
        ScenarioSpec("I", -0.1)


def test_design_validation():
    with pytest.raises(InputError):
        SimulationDesign(N=1)
    with pytest.raises(InputError):
        SimulationDesign(J=4, eigenvalues=(1.0, 0.5, 0.3, 0.4))


def test_generate_pair_shapes():
    design = SimulationDesign(n=7, m=9, N=5, M=3)
    x, y = generate_pair(design, ScenarioSpec("I", 0.0), RngStream(1))
    assert (len(x), len(y)) == (7, 9)
    assert set(x.counts) == {5} and set(y.counts) == {3}
    assert all(np.all((s.times >= 0) & (s.times <= 1)) for s in x.subjects)


def test_generate_pair_deterministic():
    design = SimulationDesign(n=5, m=5, N=4, M=4)
    a = generate_pair(design, ScenarioSpec("II", 0.3), RngStream(12))
    b = generate_pair(design, ScenarioSpec("II", 0.3), RngStream(12))
    assert a == b


def test_noise_free_curves_lie_in_span_and_scaled_variance():
    design = SimulationDesign(n=2, m=10_000, N=60, M=60, sigma=0.0)
    _, y = generate_pair(design, ScenarioSpec("I", 0.6), RngStream(3))
    lam = design.lambdas
    first = []
    worst = 0.0
    for s in y.subjects:
        basis = sine_basis(s.times, 50)
        coef, *_ = np.linalg.lstsq(basis, s.values, rcond=None)
        worst = max(worst, np.abs(basis @ coef - s.values).max())
        first.append(coef[0] / np.sqrt(lam[0]))
    assert worst <= 1e-10
    assert abs(np.var(first) / 2.56 - 1) <= 0.05


def test_rejection_curve_rows():
    design = SimulationDesign(n=20, m=20, N=6, M=6)
    rows = rejection_curve(design, [ScenarioSpec("I", 0.0), ScenarioSpec("I", 0.6)], [1, 2], reps=6, seed=3)
    assert len(rows) == 2 * 2 * 4
    for r in rows:
        assert r["reps"] + r["failures"] == 6
        assert 0 <= r["rate"] <= 1
        assert r["mc_se"] == pytest.approx(math.sqrt(r["rate"] * (1 - r["rate"]) / r["reps"]))
    assert {r["split_reading"] for r in rows} == {"combined", "pooled", "Z_eval", "Z_prime_eval"}
    pooled = rate(rows, "pooled", a=0.0, K=1)
    halves = (rate(rows, "Z_eval", a=0.0, K=1) + rate(rows, "Z_prime_eval", a=0.0, K=1)) / 2
    assert pooled == pytest.approx(halves)


def test_rejection_curve_reproducible_across_jobs():
    design = SimulationDesign(n=16, m=16, N=5, M=5)
    sc = [ScenarioSpec("I", 0.4)]
    a = rejection_curve(design, sc, [1, 2], reps=6, seed=9)
    b = rejection_curve(design, sc, [1, 2], reps=6, seed=9, n_jobs=2)
    assert a == b


def test_rejection_curve_baseline_reading():
    design = SimulationDesign(n=12, m=12, N=8, M=8)
    rows = rejection_curve(design, [ScenarioSpec("I", 0.0)], [1], reps=2, seed=1, baseline_permutations=9)
    assert rate(rows, "baseline", K=1) in (0.0, 0.5, 1.0)


def test_failures_counted():
    design = SimulationDesign(n=12, m=12, N=4, M=4)
    rows = rejection_curve(design, [ScenarioSpec("I", 0.0)], [1], reps=3, seed=1,
                           config=TestConfig(bandwidth_x=1e-6))
    assert all(r["failures"] == 3 and r["reps"] == 0 and math.isnan(r["rate"]) for r in rows)


def test_rejection_curve_rejects_zero_reps():
    with pytest.raises(InputError):
        rejection_curve(SimulationDesign(), [ScenarioSpec()], [1], reps=0)


def _dataset(seed=2, n=24, a=0.0):
    return generate_pair(SimulationDesign(n=n, m=n, N=6, M=6), ScenarioSpec("I", a), RngStream(seed))


def test_permutation_study_zero_reps():
    x, y = _dataset()
    assert permutation_study(x, y, TestConfig(K=[1, 2]), 0, 1) == []


def test_permutation_study_deterministic():
    x, y = _dataset()
    a = permutation_study(x, y, TestConfig(K=[1, 2]), 4, 5)
    assert a == permutation_study(x, y, TestConfig(K=[1, 2]), 4, 5)
    assert {r["K"] for r in a} == {1, 2}


def test_bootstrap_single_rep():
    x, y = _dataset()
    rows = bootstrap_study(x, y, TestConfig(K=[1, 2, 3]), 1, 5)
    combined = [r for r in rows if r["split_reading"] == "combined"]
    assert len(combined) == 3
    assert all(r["rate"] in (0.0, 1.0) for r in combined)


def test_table_csv(tmp_path):
    x, y = _dataset()
    rows = permutation_study(x, y, TestConfig(K=1), 2, 1)
    write_table_csv(tmp_path / "t.csv", rows)
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0].startswith("study,n,m,K,split_reading,rate,mc_se")
    assert len(lines) == 1 + len(rows)
    write_table_csv(tmp_path / "empty.csv", [])
    assert (tmp_path / "empty.csv").read_text() == ""


@pytest.mark.slow
def test_identical_groups_bootstrap_near_nominal():
    x, _ = _dataset(seed=4, n=60)
    y = x.with_label("y")
    rows = bootstrap_study(x, y, TestConfig(K=[1, 2]), 100, 3)
    for K in (1, 2):
        assert rate(rows, "pooled", K=K) <= 0.05 + 3 * math.sqrt(0.05 * 0.95 / 100)


@pytest.mark.slow
def test_monotone_signal_response():
    design = SimulationDesign(n=60, m=60, N=10, M=10)
    reps = 100
    rows = rejection_curve(design, [ScenarioSpec("I", a) for a in (0.0, 0.2, 0.4, 0.6)], [2], reps=reps, seed=21)
    rates = [rate(rows, "pooled", a=a) for a in (0.0, 0.2, 0.4, 0.6)]
    for lo, hi in zip(rates, rates[1:]):
        se = math.sqrt((lo * (1 - lo) + hi * (1 - hi)) / reps)
        assert hi >= lo - 2 * se, rates


@pytest.mark.slow
def test_bootstrap_tracks_power():
    design = SimulationDesign(n=100, m=100, N=15, M=15)
    reps = 200
    power = rate(rejection_curve(design, [ScenarioSpec("I", 0.6)], [2], reps=reps, seed=31), "pooled")
    x, y = generate_pair(design, ScenarioSpec("I", 0.6), RngStream(child_seed(77, 0)))
    boot = rate(bootstrap_study(x, y, TestConfig(K=2), reps, 32), "pooled")
    assert boot >= power - 0.1, (boot, power)
