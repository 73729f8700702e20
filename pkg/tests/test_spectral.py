import numpy as np
import pytest

from fdcov.errors import InputError, TruncationError
from fdcov.numerics import SymmetricMatrix
from fdcov.simulation import SimulationDesign, ScenarioSpec, generate_pair, sine_basis
from fdcov.smoothing import CovarianceSurface, GridSpec, default_bandwidth, pooled_covariance
from fdcov.spectral import (
    EigenSystem,
    eigendecompose,
    evaluate_eigenfunction,
    read_eigensystem_csv,
    write_eigensystem_csv,
)
from fdcov.numerics import RngStream, child_seed


def surface_from(matrix, G):
    return CovarianceSurface(GridSpec(G), SymmetricMatrix(matrix), 0.1)


def sine_surface(weights, G=51):
    phi = sine_basis(GridSpec(G).points, len(weights))
    return surface_from(phi @ np.diag(weights) @ phi.T, G)


def aligned_error(e, phi):
    """Grid L2 distance up to sign."""
    return min(np.sqrt(np.mean((e - phi) ** 2)), np.sqrt(np.mean((e + phi) ** 2)))


def test_rank_one_analytic():
    G = 51
    system = eigendecompose(sine_surface([1.0], G), 1)
    assert abs(system.eigenvalues[0] - 1.0) <= 1.0 / G**2
    phi = sine_basis(GridSpec(G).points, 1)[:, 0]
    assert np.abs(system.functions[:, 0] - phi).max() <= 0.01


def test_rank_two_eigenvalues():
    system = eigendecompose(sine_surface([1.0, 0.64]), 2)
    np.testing.assert_allclose(system.eigenvalues, [1.0, 0.64], atol=1e-3)


def test_truncation_beyond_rank():
    with pytest.raises(TruncationError) as info:
        eigendecompose(sine_surface([1.0, 0.64]), 3)
    assert info.value.max_valid_k == 2


def test_k_out_of_range():
    with pytest.raises(InputError):
        eigendecompose(sine_surface([1.0], 5), 6)


def test_canonical_signs_idempotent(gen):
    b = gen.normal(size=(21, 21))
    surface = surface_from(b @ b.T, 21)
    system = eigendecompose(surface, 21)
    # Rebuild the surface from sign-flipped eigenvectors; the output must not change.
    flipped = system.functions * np.where(np.arange(21) % 2, -1.0, 1.0)
    rebuilt = flipped @ np.diag(system.eigenvalues) @ flipped.T
    again = eigendecompose(surface_from(rebuilt, 21), 21)
    np.testing.assert_allclose(again.functions, system.functions, atol=1e-8)
    for col in system.functions.T:
        assert col[np.flatnonzero(np.abs(col) > 1e-12)[0]] > 0


def test_orthonormal_and_trace(gen):
    G = 31
    b = gen.normal(size=(G, G))
    surface = surface_from(b @ b.T / G, G)
    system = eigendecompose(surface, G)
    gram = system.functions.T @ system.functions / G
    np.testing.assert_allclose(gram, np.eye(G), atol=1e-8)
    assert np.all(np.diff(system.eigenvalues) <= 0)
    assert abs(system.eigenvalues.sum() - np.trace(surface.matrix) / G) <= 1e-8


def test_lapack_agrees_with_jacobi():
    surface = sine_surface([1.0, 0.64, 0.2])
    a = eigendecompose(surface, 3)
    b = eigendecompose(surface, 3, method="lapack")
    np.testing.assert_allclose(a.eigenvalues, b.eigenvalues, atol=1e-12)
    np.testing.assert_allclose(a.functions, b.functions, atol=1e-8)


def test_evaluate_at_knots_and_midpoints():
    system = eigendecompose(sine_surface([1.0, 0.64]), 2)
    pts = system.grid.points
    f = system.functions
    assert evaluate_eigenfunction(system, 2, pts[7]) == f[7, 1]
    mid = 0.5 * (pts[10] + pts[11])
    assert evaluate_eigenfunction(system, 1, mid) == pytest.approx(0.5 * (f[10, 0] + f[11, 0]), abs=1e-15)
    np.testing.assert_allclose(system.evaluate([pts[3], mid]), [f[3], 0.5 * (f[10] + f[11])], atol=1e-15)


def test_evaluate_extrapolates_constant():
    system = eigendecompose(sine_surface([1.0]), 1)
    f = system.functions[:, 0]
    assert evaluate_eigenfunction(system, 1, 0.0) == f[0]
    assert evaluate_eigenfunction(system, 1, 1.0) == f[-1]


def test_evaluate_index_checked():
    system = eigendecompose(sine_surface([1.0]), 1)
    with pytest.raises(InputError):
        evaluate_eigenfunction(system, 2, 0.5)


def test_interpolation_error_bound(gen):
    G = 51
    pts = GridSpec(G).points
    system = EigenSystem(GridSpec(G), np.ones(1), np.sqrt(2) * np.sin(np.pi * pts)[:, None])
    t = gen.uniform(pts[0], pts[-1], 200)
    err = np.abs(system.evaluate(t)[:, 0] - np.sqrt(2) * np.sin(np.pi * t)).max()
    assert err <= 2 * (np.pi / G) ** 2


def test_eigensystem_csv_round_trip(tmp_path):
    system = eigendecompose(sine_surface([1.0, 0.64, 0.3], 11), 3)
    write_eigensystem_csv(tmp_path / "e.csv", system)
    back = read_eigensystem_csv(tmp_path / "e.csv")
    np.testing.assert_array_equal(back.eigenvalues, system.eigenvalues)
    np.testing.assert_array_equal(back.functions, system.functions)


@pytest.mark.slow
def test_perturbation_scaling():
    design_n = (100, 200, 400)
    grid = GridSpec()
    phi = sine_basis(grid.points, 3)
    err = np.zeros((len(design_n), 3))
    reps = 50
    for a, n in enumerate(design_n):
        design = SimulationDesign(n=n, m=2, N=15, M=2)
        for r in range(reps):
            x, _ = generate_pair(design, ScenarioSpec("I", 0.0), RngStream(child_seed(99, r)))
            h = default_bandwidth(x, "covariance")
            system = eigendecompose(pooled_covariance(x, grid, h), 3)
            for j in range(3):
                err[a, j] += aligned_error(system.functions[:, j], phi[:, j]) ** 2 / reps
    assert np.all(np.diff(err, axis=0) <= 0), err
    assert np.all(np.diff(err, axis=1) >= 0), err
