import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from rdpi.spectral import (
    ReactionProfile,
    SpectralError,
    compute_basis,
    mode_coefficients,
    project,
    simpson_weights,
)


def shooting_eigenvalue(c, L, guess, width):
    """Dirichlet eigenvalue of y'' + c y = lam y near ``guess`` by shooting."""

    def miss(lam):
        sol = solve_ivp(lambda x, y: [y[1], (lam - c(x)) * y[0]], (0, L), [0.0, 1.0], rtol=1e-12, atol=1e-14)
        return sol.y[0, -1]

    return brentq(miss, guess - width, guess + width, xtol=1e-13)


def test_section6_eigenvalues_analytic():
    basis = compute_basis(ReactionProfile.constant(1.25, 2 * math.pi), 3)
    assert np.allclose(basis.lambdas, [1.0, 0.25, -1.0], atol=1e-10, rtol=0)
    assert basis.method == "analytic"


def test_section6_eigenvalues_numeric():
    basis = compute_basis(ReactionProfile.constant(1.25, 2 * math.pi), 3, method="numeric")
    assert np.allclose(basis.lambdas, [1.0, 0.25, -1.0], atol=1e-6, rtol=0)


def test_laplacian_on_pi():
    basis = compute_basis(ReactionProfile.constant(0.0, math.pi), 2)
    assert np.allclose(basis.lambdas, [-1.0, -4.0])
    assert np.allclose(basis.ep0, math.sqrt(2 / math.pi) * np.array([1.0, 2.0]))


def test_sampled_profile_against_shooting_oracle():
    prof = ReactionProfile.from_function(lambda x: x, 1.0, 801)
    basis = compute_basis(prof, 4, 801)
    assert basis.method == "numeric"
    for lam in basis.lambdas:
        ref = shooting_eigenvalue(lambda x: x, 1.0, lam, 1e-3 * abs(lam) + 1e-2)
        assert abs(lam - ref) < 1e-6


def test_sampled_profile_against_refined_mesh():
    prof = ReactionProfile.from_function(lambda x: x, 1.0, 1601)
    coarse = compute_basis(prof, 4, 801)
    fine = compute_basis(prof, 4, 1601)
    assert np.max(np.abs(coarse.lambdas - fine.lambdas)) < 1e-6


def test_numeric_matches_analytic_for_constant_profile():
    prof = ReactionProfile.constant(2.0, 3.0)
    a = compute_basis(prof, 8, method="analytic")
    n = compute_basis(prof, 8, method="numeric")
    assert np.max(np.abs(a.lambdas - n.lambdas)) < 1e-6
    assert np.max(np.abs(a.ep0 - n.ep0) / a.ep0) < 1e-5


def test_sign_convention_and_nonzero_traces():
    for prof in (ReactionProfile.constant(1.25, 2 * math.pi), ReactionProfile.from_function(np.cos, 2.0)):
        basis = compute_basis(prof, 6)
        assert np.all(basis.ep0 > 0)
        assert np.all(np.abs(basis.epL) > 1e-6)
        assert np.all(np.diff(basis.lambdas) < 0)


def test_orthonormality():
    basis = compute_basis(ReactionProfile.constant(1.25, 2 * math.pi), 16)
    assert np.max(np.abs(basis.gram() - np.eye(16))) < 1e-8
    num = compute_basis(ReactionProfile.from_function(lambda x: 1 + np.sin(x), 2.0), 8)
    assert np.max(np.abs(num.gram() - np.eye(8))) < 1e-6


def test_trace_asymptotics():
    basis = compute_basis(ReactionProfile.constant(1.25, 2 * math.pi), 20)
    ratio = basis.ep0 / (math.sqrt(2 / basis.L) * np.sqrt(np.abs(basis.lambdas)))
    tail = np.abs(ratio[2:] - 1)  # past the last nonnegative eigenvalue
    assert np.all(np.diff(tail) <= 0)
    assert tail[-1] < 0.05
    j = np.arange(1, 21)
    scaled = basis.lambdas * basis.L**2 / (math.pi**2 * j**2)
    assert np.allclose(scaled, -1 + 1.25 * basis.L**2 / (math.pi**2 * j**2), atol=1e-13)
    assert np.all(np.diff(np.abs(scaled + 1)) < 0)


def test_project_eigenfunction_and_zero():
    basis = compute_basis(ReactionProfile.constant(1.25, 2 * math.pi), 6)
    c = project(basis, basis.eigvecs[1])
    assert np.allclose(c, np.eye(6)[1], atol=1e-12)
    assert not np.any(project(basis, np.zeros_like(basis.mesh)))


def test_project_linear_function_closed_form():
    basis = compute_basis(ReactionProfile.constant(0.0, math.pi), 10)
    j = np.arange(1, 11)
    exact = math.sqrt(2 / math.pi) * (-1.0) ** (j + 1) * math.pi / j
    assert np.allclose(project(basis, basis.mesh), exact, atol=1e-10)


def test_mode_coefficients_closed_forms():
    lap = compute_basis(ReactionProfile.constant(0.0, math.pi), 5)
    assert not np.any(mode_coefficients(lap).a)
    basis = compute_basis(ReactionProfile.constant(1.25, 2 * math.pi), 10)
    coeffs = mode_coefficients(basis)
    j = np.arange(1, 11)
    b_exact = -(2 / math.sqrt(math.pi)) * (-1.0) ** (j + 1) / j
    assert np.allclose(coeffs.b, b_exact, atol=1e-10)
    assert np.allclose(coeffs.a, -1.25 * b_exact, atol=1e-10)


def test_trace_identity():
    basis = compute_basis(ReactionProfile.constant(1.25, 2 * math.pi), 10)
    assert np.max(np.abs(mode_coefficients(basis).trace_residual(basis))) < 1e-8
    num = compute_basis(ReactionProfile.from_function(lambda x: 1 + x * (2 - x), 2.0), 8)
    assert np.max(np.abs(mode_coefficients(num).trace_residual(num))) < 1e-5


def test_simpson_weights_integrate_cubics_exactly():
    x = np.linspace(0, 2, 11)
    w = simpson_weights(11, 0.2)
    assert abs(w @ x**3 - 4.0) < 1e-13


@pytest.mark.parametrize(
    "kwargs",
    [dict(J=0), dict(J=300, mesh_size=2001), dict(J=3, method="nope")],
)
def test_compute_basis_rejects(kwargs):
    with pytest.raises(SpectralError):
        compute_basis(ReactionProfile.constant(1.0, 1.0), **kwargs)


def test_profile_validation():
    with pytest.raises(ValueError):
        ReactionProfile.sampled([1.0, np.nan, 2.0], 1.0)
    with pytest.raises(ValueError):
        ReactionProfile.constant(1.0, -1.0)
    with pytest.raises(ValueError):
        ReactionProfile.sampled([1.0, 2.0], 1.0)
    with pytest.raises(SpectralError):
        compute_basis(ReactionProfile.from_function(np.sin, 1.0), 2, method="analytic")


def test_project_mesh_mismatch():
    basis = compute_basis(ReactionProfile.constant(1.0, 1.0), 2, 101)
    with pytest.raises(SpectralError):
        project(basis, np.zeros(50))
