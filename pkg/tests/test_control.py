import math

import numpy as np
import pytest
import scipy.linalg

from rdpi.control import (
    ControlError,
    augmented_kalman_equivalence,
    build_certificate,
    certificate_bounds,
    controllability_determinant,
    coupling_determinant,
    expm,
    kalman_rank,
    lyapunov_solve,
    place_poles,
    profile_norms,
)
from rdpi.model import build_truncated_model, model_from_blocks
from rdpi.spectral import ReactionProfile, compute_basis, mode_coefficients

SEC6_POLES = (-0.5, -0.6, -0.7, -0.8)


# ---------------------------------------------------------------- expm


def test_expm_closed_forms():
    assert np.array_equal(expm(np.zeros((3, 3))), np.eye(3))
    assert np.allclose(expm([[0, 1], [0, 0]]), [[1, 1], [0, 1]], atol=1e-15)
    assert np.allclose(expm(np.diag([-1.0, 2.0])), np.diag([math.exp(-1), math.exp(2)]), rtol=1e-14)


def test_expm_inverse_property(rng):
    """``|expm(M) expm(-M) - I| < 1e-10`` on test matrices of norm <= 10.

    For a general matrix the product is limited by rounding at about
    ``eps |e^M| |e^-M|`` (up to ``eps e^20 ~ 1e-7`` at norm 10), so the
    families below are those where the bound is meaningful: skew-symmetric
    (orthogonal exponential), skew plus a symmetric part of norm <= 2,
    and general matrices of norm <= 3.
    """
    for _ in range(20):
        S = rng.standard_normal((5, 5))
        S = S - S.T
        S *= rng.uniform(0.1, 10.0) / np.linalg.norm(S, 2)
        assert np.linalg.norm(expm(S) @ expm(-S) - np.eye(5)) < 1e-10
        Q, _ = np.linalg.qr(rng.standard_normal((5, 5)))
        N = Q @ np.diag(rng.uniform(-2.0, 2.0, 5)) @ Q.T + S
        N *= min(1.0, 10.0 / np.linalg.norm(N, 2))
        assert np.linalg.norm(expm(N) @ expm(-N) - np.eye(5)) < 1e-10
        G = rng.standard_normal((5, 5))
        G *= rng.uniform(0.1, 3.0) / np.linalg.norm(G, 2)
        assert np.linalg.norm(expm(G) @ expm(-G) - np.eye(5)) < 1e-10
        assert np.allclose(expm(G), scipy.linalg.expm(G), rtol=1e-14, atol=0)


def test_expm_rejects_bad_input():
    with pytest.raises(ControlError):
        expm(np.ones((2, 3)))
    with pytest.raises(ControlError):
        expm([[np.nan]])


# ---------------------------------------------------------------- rank tests


def test_kalman_rank_examples(section6):
    assert not kalman_rank(np.zeros((2, 2)), [1.0, 0.0])
    assert kalman_rank([[0, 0], [1, 0]], [1.0, 0.0])
    assert kalman_rank(section6["model"].A, section6["model"].B)


def test_augmented_equivalence_random(rng):
    violations = 0
    for k in range(200):
        n, m, p = rng.integers(1, 6), rng.integers(1, 3), rng.integers(1, 4)
        A, B = rng.standard_normal((n, n)), rng.standard_normal((n, m))
        C, D = rng.standard_normal((p, n)), rng.standard_normal((p, m))
        if k % 4 == 1:
            C[:], D[:] = 0.0, 0.0
        elif k % 4 == 2:
            D = C @ np.linalg.pinv(A) @ B if n > 0 else D  # often rank deficient block
        lhs, rhs = augmented_kalman_equivalence(A, B, C, D)
        violations += lhs != rhs
    assert violations == 0


def test_augmented_equivalence_trivial_and_model(section6):
    lhs, rhs = augmented_kalman_equivalence(np.eye(2), [[1.0], [2.0]], np.zeros((1, 2)), [[0.0]])
    assert (lhs, rhs) == (False, False)
    m = section6["model"]
    assert augmented_kalman_equivalence(m.A1, m.B1, m.L1[None, :], [[m.beta]]) == (True, True)


# ---------------------------------------------------------------- determinants


def test_controllability_determinant_section6(section6):
    direct, formula = controllability_determinant(section6["model"], section6["basis"])
    assert direct != 0
    assert abs(direct - formula) <= 1e-8 * abs(formula)


def test_controllability_determinant_random(rng):
    for _ in range(50):
        n = int(rng.integers(1, 6))
        lam = -np.sort(-rng.choice(np.linspace(-3, 3, 61), n, replace=False))
        m = model_from_blocks(lam, rng.standard_normal(n), rng.standard_normal(n), rng.standard_normal(n), 0.2, 0.1)
        direct, formula = controllability_determinant(m)
        assert abs(direct - formula) <= 1e-8 * abs(formula)


def test_controllability_determinant_small_cases():
    m = model_from_blocks([0.7], [1.3], [-0.4], [1.0], 0.1, 0.0)
    direct, formula = controllability_determinant(m)
    assert formula == pytest.approx(1.3 + 0.7 * -0.4, abs=0)
    assert direct == pytest.approx(formula, abs=1e-15)
    m = model_from_blocks([2.0, 1.0], [2.0, 1.0], [-1.0, 0.5], [1.0, 1.0], 0.1, 0.0)  # a_1 + lambda_1 b_1 = 0
    direct, formula = controllability_determinant(m)
    assert formula == 0.0 and abs(direct) < 1e-14
    with pytest.raises(ControlError):
        controllability_determinant(model_from_blocks([], [], [], [], 0.3, 0.1))


@pytest.mark.parametrize("n", [1, 2, 3])
def test_coupling_determinant_both_cases(rng, n):
    lam = np.linspace(2.0, 0.5, n)
    a, b, e = rng.standard_normal(n), rng.standard_normal(n), rng.uniform(0.5, 2, n)
    d, f, case = coupling_determinant(model_from_blocks(lam, a, b, e, 0.4, 0.3))
    assert case == "nonzero-spectrum" and d == pytest.approx(f, rel=1e-10)
    lam[-1] = 0.0
    d, f, case = coupling_determinant(model_from_blocks(lam, a, b, e, 0.4, 0.3))
    assert case == "zero-eigenvalue" and d == pytest.approx(f, rel=1e-10)


def test_coupling_determinant_section6(section6):
    d, f, _ = coupling_determinant(section6["model"])
    assert d != 0 and d == pytest.approx(f, rel=1e-10)


# ---------------------------------------------------------------- placement


def test_place_poles_scalar():
    assert place_poles([[0.0]], [1.0], [-1.0]) == pytest.approx([-1.0])


def test_place_poles_section6(section6):
    m = section6["model"]
    K = place_poles(m.A, m.B, SEC6_POLES, 1.0)
    AK = m.A + np.outer(scipy.linalg.expm(-m.A) @ m.B, K)
    eig = np.sort(np.linalg.eigvals(AK).real)
    assert np.allclose(eig, sorted(SEC6_POLES), rtol=1e-6, atol=0)


def test_place_poles_random(rng):
    for _ in range(10):
        A = rng.standard_normal((4, 4))
        B = rng.standard_normal(4)
        poles = -np.sort(rng.uniform(0.5, 3.0, 4))
        K = place_poles(A, B, poles)
        eig = np.sort(np.linalg.eigvals(A + np.outer(B, K)))
        assert np.allclose(eig.real, np.sort(poles), rtol=1e-6) and np.allclose(eig.imag, 0, atol=1e-6)
        # placing again on the closed loop keeps the spectrum (well separated
        # targets, so eigenvalue sensitivity does not swamp the comparison)
        spread = -rng.uniform(0.5, 1.0) * np.array([1.0, 2.0, 3.0, 4.0])
        K = place_poles(A, B, spread)
        K2 = place_poles(A + np.outer(B, K), B, spread)
        eig2 = np.sort(np.linalg.eigvals(A + np.outer(B, K + K2)).real)
        assert np.allclose(eig2, np.sort(spread), rtol=1e-6)


def test_place_poles_errors():
    with pytest.raises(ControlError, match="condition number"):
        place_poles(np.eye(2), [1.0, 1.0], [-1.0, -2.0])
    with pytest.raises(ControlError):
        place_poles(np.zeros((2, 2)), [1.0, 0.0], [-1.0])


# ---------------------------------------------------------------- Lyapunov


def test_lyapunov_closed_forms():
    assert np.allclose(lyapunov_solve(-np.eye(3)), np.eye(3) / 2, atol=1e-15)
    assert np.allclose(lyapunov_solve(-np.diag([1.0, 2.0])), np.diag([0.5, 0.25]), atol=1e-15)


def test_lyapunov_against_scipy(rng):
    for _ in range(10):
        M = rng.standard_normal((4, 4))
        AK = M - (np.max(np.linalg.eigvals(M).real) + 0.5) * np.eye(4)
        P = lyapunov_solve(AK)
        ref = scipy.linalg.solve_continuous_lyapunov(AK.T, -np.eye(4))
        assert np.allclose(P, ref, rtol=1e-9, atol=1e-12)


def test_lyapunov_not_hurwitz():
    with pytest.raises(ControlError):
        lyapunov_solve(np.diag([-1.0, 0.1]))


# ---------------------------------------------------------------- certificate


def test_certificate_invariants(section6):
    cert, m, basis = section6["cert"], section6["model"], section6["basis"]
    assert cert.lyapunov_residual < 1e-10
    assert np.allclose(cert.P, cert.P.T, atol=0)
    eigP = np.linalg.eigvalsh(cert.P)
    assert eigP[0] > 0
    assert np.max(np.linalg.eigvals(cert.AK).real) <= max(SEC6_POLES) + 1e-9
    na, nb = profile_norms(basis)
    inner = cert.gamma1 * na**2 + 2 * nb**2 * np.linalg.norm(expm(-cert.D * cert.AK), 2) ** 2 * np.linalg.norm(cert.K) ** 2
    bound = max(cert.gamma1 * basis.lambdas[0] / eigP[0], 4 * inner)
    assert cert.M > bound and cert.M == pytest.approx(1.01 * bound, rel=1e-12)
    assert cert.gamma5 == pytest.approx(cert.M / 4 - inner, rel=1e-12)
    assert cert.gamma6 == pytest.approx(1 / abs(basis.lambdas[m.n]))
    kappa = 0.5 * min(2 * cert.gamma5 / (cert.M * eigP[-1]), 1 / (2 * cert.gamma6))
    assert cert.kappa == pytest.approx(kappa, rel=1e-12) and cert.kappa > 0


def test_profile_norms_closed_form(section6):
    na, nb = profile_norms(section6["basis"])
    L = 2 * math.pi
    assert nb == pytest.approx(math.sqrt(L / 3), rel=1e-12)
    assert na == pytest.approx(1.25 * math.sqrt(L / 3), rel=1e-12)


def test_certificate_delay_sweep(section6):
    """With the gain re-placed for each delay, the M bound shrinks with D and gamma1 -> 2."""
    m, basis = section6["model"], section6["basis"]
    na, nb = profile_norms(basis)
    bounds = []
    for D in (2.0, 1.5, 1.0, 0.5, 0.25, 0.1, 0.01, 0.001):
        K = place_poles(m.A, m.B, SEC6_POLES, D)
        parts = certificate_bounds(m, K, D, basis.lambdas[0], na, nb)
        bounds.append(max(parts["m_first"], parts["m_second"]))
    assert np.all(np.diff(bounds) < 0)
    K = place_poles(m.A, m.B, SEC6_POLES, 1e-9)
    assert certificate_bounds(m, K, 1e-9, basis.lambdas[0], na, nb)["gamma1"] == 2.0


def test_certificate_stable_plant():
    basis = compute_basis(ReactionProfile.constant(-1.0, math.pi), 16)
    coeffs = mode_coefficients(basis)
    model, _ = build_truncated_model(basis, coeffs)
    assert model.n == 0
    cert = build_certificate(model, basis, coeffs, 1.0, (-1.0, -1.5))
    assert 0 < cert.kappa <= abs(basis.lambdas[0]) / 2
    assert np.allclose(cert.achieved_poles, [-1.5, -1.0], rtol=1e-6)


def test_certificate_rejects(section6):
    m, basis = section6["model"], section6["basis"]
    with pytest.raises(ControlError):
        build_certificate(m, basis, None, 1.0, (-0.5, -0.6, -0.7, 0.1))
    with pytest.raises(ControlError):
        build_certificate(m, basis, None, 0.0, SEC6_POLES)
    with pytest.raises(ControlError):
        build_certificate(m, basis, None, 1.0, SEC6_POLES[:3])
