"""Controllability tests, pole placement and the closed-loop certificate."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .model import TruncatedModel
from .spectral import ModeCoefficients, SpectralBasis

__all__ = [
    "ControlError",
    "Certificate",
    "expm",
    "kalman_matrix",
    "kalman_rank",
    "augmented_kalman_equivalence",
    "controllability_determinant",
    "coupling_determinant",
    "place_poles",
    "lyapunov_solve",
    "lyapunov_residual_matrix",
    "certificate_bounds",
    "profile_norms",
    "build_certificate",
    "RANK_TOL",
    "COND_LIMIT",
    "M_MARGIN",
]

RANK_TOL = 1e-9
COND_LIMIT = 1e12
M_MARGIN = 1.01


class ControlError(ValueError):
    pass


def expm(M) -> np.ndarray:
    """Matrix exponential (Pade approximant with scaling and squaring)."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ControlError("expm needs a square matrix")
    if not np.all(np.isfinite(M)):
        raise ControlError("expm input has non-finite entries")
    return scipy.linalg.expm(M)


def _as_columns(B, n: int) -> np.ndarray:
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    if B.shape[0] != n:
        raise ControlError(f"input matrix has {B.shape[0]} rows, state dimension is {n}")
    return B


def kalman_matrix(A, B) -> np.ndarray:
    """``[B, AB, ..., A^{k-1} B]`` for a ``k x k`` matrix ``A``."""
    A = np.asarray(A, dtype=float)
    k = A.shape[0]
    B = _as_columns(B, k)
    blocks = [B]
    for _ in range(k - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def _rank(M: np.ndarray, tol: float = RANK_TOL) -> int:
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > tol * s[0]))


def kalman_rank(A, B, tol: float = RANK_TOL) -> bool:
    """True when ``(A, B)`` satisfies the Kalman rank condition.

    ``A`` is rescaled to unit norm first; the condition is invariant under
    that scaling and the powers stay well conditioned.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ControlError("A must be square")
    k = A.shape[0]
    B = _as_columns(B, k)
    nrm = np.linalg.norm(A, 2)
    As = A / nrm if nrm > 0 else A
    Bs = B / np.linalg.norm(B, 2) if np.linalg.norm(B, 2) > 0 else B
    return _rank(kalman_matrix(As, Bs), tol) == k


def augmented_kalman_equivalence(A, B, C, D, tol: float = RANK_TOL) -> tuple[bool, bool]:
    """Evaluate both sides of the augmented-pair rank equivalence.

    ``lhs``: ``(A, B)`` controllable and ``rank [[A, B], [C, D]] = n + p``.
    ``rhs``: ``([[A, 0], [C, 0]], [[B], [D]])`` controllable.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    B = _as_columns(B, n)
    C = np.atleast_2d(np.asarray(C, dtype=float))
    p = C.shape[0]
    D = np.asarray(D, dtype=float).reshape(p, B.shape[1])
    if C.shape[1] != n:
        raise ControlError("C must have as many columns as A")
    block = np.block([[A, B], [C, D]])
    lhs = kalman_rank(A, B, tol) and _rank(block, tol) == n + p
    Aa = np.block([[A, np.zeros((n, p))], [C, np.zeros((p, p))]])
    Ba = np.vstack([B, D])
    rhs = kalman_rank(Aa, Ba, tol)
    return bool(lhs), bool(rhs)


def _vandermonde(values: np.ndarray) -> float:
    """``prod_{i<j} (x_j - x_i)``, the determinant of ``[x_i^k]`` with rows in order."""
    v = np.asarray(values, dtype=float)
    out = 1.0
    for i in range(v.size):
        for j in range(i + 1, v.size):
            out *= v[j] - v[i]
    return out


def controllability_determinant(model: TruncatedModel, basis: SpectralBasis | None = None) -> tuple[float, float]:
    """Direct ``det(B1, A1 B1, ..., A1^n B1)`` and its product-Vandermonde form.

    The formula ``prod_j (a_j + lambda_j b_j) * VdM(lambda_1..lambda_n)``
    uses the head coefficients stored in the model; ``basis`` is accepted for
    call-site symmetry and to cross-check the eigenvalues.
    """
    n = model.n
    if n == 0:
        raise ControlError("controllability determinant needs n >= 1")
    lam = model.lambdas_head
    if basis is not None and not np.allclose(lam, basis.lambdas[:n], rtol=0, atol=1e-12):
        raise ControlError("model and basis eigenvalues disagree")
    if np.unique(lam).size != n:
        raise ControlError("head eigenvalues are not distinct")
    direct = float(np.linalg.det(kalman_matrix(model.A1, model.B1)))
    formula = float(np.prod(model.a_head + lam * model.b_head)) * _vandermonde(lam)
    return direct, formula


def coupling_determinant(model: TruncatedModel) -> tuple[float, float, str]:
    """``det [[A1, B1], [L1, beta]]`` directly and by the closed form of its case.

    Without a zero eigenvalue the closed form is
    ``-(alpha - sum_i a_i e_i'(0)/lambda_i) * prod lambda_j``; with
    ``lambda_n = 0`` it is ``a_n e_n'(0) prod_{i<n} lambda_i``.  Returns ``(direct, formula, case)``.
    """
    n = model.n
    M = np.zeros((n + 2, n + 2))
    M[: n + 1, : n + 1] = model.A1
    M[: n + 1, n + 1] = model.B1
    M[n + 1, : n + 1] = model.L1
    M[n + 1, n + 1] = model.beta
    direct = float(np.linalg.det(M))
    lam = model.lambdas_head
    a = model.a_head
    ep0 = model.L1[1:]
    if n >= 1 and lam[-1] == 0.0:
        # the cofactor signs of the two expansions cancel
        formula = a[-1] * ep0[-1] * float(np.prod(lam[:-1]))
        return direct, formula, "zero-eigenvalue"
    formula = -(model.alpha - float(np.sum(a * ep0 / lam))) * float(np.prod(lam))
    return direct, formula, "nonzero-spectrum"


def place_poles(A, B, poles, D: float = 0.0) -> np.ndarray:
    """Gain ``K`` with ``eig(A + exp(-D A) B K) = poles`` (Ackermann).

    Raises :class:`ControlError` when the controllability matrix of
    ``(A, exp(-D A) B)`` has condition number above ``COND_LIMIT``.
    """
    A = np.asarray(A, dtype=float)
    k = A.shape[0]
    B = np.asarray(B, dtype=float).reshape(k)
    poles = np.asarray(poles)
    if poles.size != k:
        raise ControlError(f"need {k} poles, got {poles.size}")
    if np.any(np.abs(np.imag(poles)) > 0):
        raise ControlError("only real poles are supported")
    poles = np.real(poles).astype(float)
    Bd = expm(-D * A) @ B if D else B
    C = kalman_matrix(A, Bd)
    cond = np.linalg.cond(C)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise ControlError(
            f"controllability matrix condition number {cond:.3g} exceeds {COND_LIMIT:g}; "
            "the pair is (nearly) uncontrollable or the poles should be rescaled"
        )
    coeffs = np.poly(poles)
    pA = np.zeros_like(A)
    for c in coeffs:
        pA = pA @ A + c * np.eye(k)
    last = np.zeros(k)
    last[-1] = 1.0
    return -np.linalg.solve(C.T, last) @ pA


def lyapunov_solve(AK, extended: bool = False) -> np.ndarray:
    """Solve ``AK^T P + P AK = -I`` through the Kronecker-product system.

    With ``extended=True`` the double-precision solution is polished by
    iterative refinement with residuals formed in ``np.longdouble`` and the
    refined matrix is returned in that type.  For gains of size ~1e2 and
    ``|P| ~ 1e4`` no float64 matrix can push the residual below ~1e-9, since
    the rounding of ``P`` alone contributes ``eps |AK| |P|``.
    """
    AK = np.asarray(AK, dtype=float)
    k = AK.shape[0]
    if np.max(np.linalg.eigvals(AK).real) >= 0:
        raise ControlError("AK is not Hurwitz; the Lyapunov equation has no positive solution")
    eye = np.eye(k)
    # row-major vec: vec(M^T X) = (M^T kron I) vec(X), vec(X M) = (I kron M^T) vec(X)
    op = np.kron(AK.T, eye) + np.kron(eye, AK.T)
    lu = scipy.linalg.lu_factor(op)
    P = scipy.linalg.lu_solve(lu, -eye.ravel()).reshape(k, k)
    P = 0.5 * (P + P.T)
    if not extended:
        return P
    AKx = AK.astype(np.longdouble)
    Px = P.astype(np.longdouble)
    for _ in range(4):
        R = lyapunov_residual_matrix(AKx, Px)
        if np.max(np.abs(R)) == 0:
            break
        delta = scipy.linalg.lu_solve(lu, -np.asarray(R, dtype=float).ravel()).reshape(k, k)
        Px = Px + delta.astype(np.longdouble)
        Px = (Px + Px.T) / 2
    return Px


def lyapunov_residual_matrix(AK, P) -> np.ndarray:
    """``AK^T P + P AK + I`` in the precision of the inputs."""
    return AK.T @ P + P @ AK + np.eye(P.shape[0], dtype=P.dtype)


@dataclass(frozen=True, eq=False)
class Certificate:
    """Feedback gain, Lyapunov matrix and decay constants for one delay."""

    K: np.ndarray = field(repr=False)
    AK: np.ndarray = field(repr=False)
    P: np.ndarray = field(repr=False)
    M: float
    M_bound: float
    kappa: float
    gamma1: float
    gamma5: float
    gamma6: float
    lambda1: float
    norm_a: float
    norm_b: float
    poles: tuple
    D: float

    P_ext: np.ndarray = field(default=None, repr=False)

    @property
    def lyapunov_residual(self) -> float:
        """Frobenius norm of ``AK^T P + P AK + I`` on the extended-precision ``P``."""
        P = self.P if self.P_ext is None else self.P_ext
        R = lyapunov_residual_matrix(self.AK.astype(P.dtype), P)
        return float(np.sqrt(np.sum(R * R)))

    @property
    def achieved_poles(self) -> np.ndarray:
        return np.sort(np.linalg.eigvals(self.AK).real)


def profile_norms(basis: SpectralBasis) -> tuple[float, float]:
    """L2 norms of ``a(x) = x c(x)/L`` and ``b(x) = -x/L`` by Simpson quadrature."""
    x = basis.mesh
    w = basis.weights
    a = x * basis.profile(x) / basis.L
    b = -x / basis.L
    return float(np.sqrt(w @ a**2)), float(np.sqrt(w @ b**2))


def certificate_bounds(model: TruncatedModel, K, D: float, lambda1: float, norm_a: float, norm_b: float) -> dict:
    """Constants of the Lyapunov argument for a given gain and delay.

    Returns ``AK``, ``P``, ``gamma1`` and the two terms of the lower bound
    on ``M`` (``m_first = gamma1 lambda1 / lambda_m(P)`` and
    ``m_second = 4 (gamma1 |a|^2 + 2 |b|^2 |exp(-D AK)|^2 |K|^2)``).
    """
    A, B = model.A, model.B
    K = np.asarray(K, dtype=float).reshape(-1)
    AK = A + np.outer(expm(-D * A) @ B, K)
    P_ext = lyapunov_solve(AK, extended=True)
    P = np.asarray(P_ext, dtype=float)
    nK = np.linalg.norm(K)
    nBK = np.linalg.norm(B) * nK
    gamma1 = 2.0 * max(1.0, D * np.exp(2.0 * D * np.linalg.norm(A, 2)) * nBK**2)
    lam_P = np.linalg.eigvalsh(P)
    inner = gamma1 * norm_a**2 + 2.0 * norm_b**2 * np.linalg.norm(expm(-D * AK), 2) ** 2 * nK**2
    return {
        "AK": AK,
        "P": P,
        "P_ext": P_ext,
        "gamma1": float(gamma1),
        "inner": float(inner),
        "m_first": float(gamma1 * lambda1 / lam_P[0]),
        "m_second": float(4.0 * inner),
        "lam_min_P": float(lam_P[0]),
        "lam_max_P": float(lam_P[-1]),
    }


def build_certificate(
    model: TruncatedModel,
    basis: SpectralBasis,
    coeffs: ModeCoefficients | None,
    D: float,
    poles,
    margin: float = M_MARGIN,
) -> Certificate:
    """Place the poles of ``A + exp(-D A) B K`` and derive ``P``, ``M`` and ``kappa``.

    ``M`` is ``margin`` times the larger of the two lower bounds; ``kappa``
    follows ``1/2 min(2 gamma5 / (M lambda_M(P)), 1 / (2 gamma6))`` with
    ``gamma6 = 1/|lambda_{n+1}|``.  ``coeffs`` is not needed for the
    constants (the norms of ``a`` and ``b`` are taken in L2 directly) and
    may be ``None``.
    """
    if not D > 0:
        raise ControlError("delay D must be positive")
    if margin <= 1.0:
        raise ControlError("M margin must exceed 1 (strict inequality)")
    poles = tuple(float(p) for p in np.real(np.asarray(poles)))
    if any(p >= 0 for p in poles):
        raise ControlError("requested poles must be strictly negative")
    if not kalman_rank(model.A, model.B):
        raise ControlError("truncated pair (A, B) is not controllable")
    K = place_poles(model.A, model.B, poles, D)
    norm_a, norm_b = profile_norms(basis)
    lambda1 = float(basis.lambdas[0])
    parts = certificate_bounds(model, K, D, lambda1, norm_a, norm_b)
    M_bound = max(parts["m_first"], parts["m_second"])
    M = margin * M_bound
    gamma5 = M / 4.0 - parts["inner"]
    gamma6 = 1.0 / abs(float(basis.lambdas[model.n]))
    kappa = 0.5 * min(2.0 * gamma5 / (M * parts["lam_max_P"]), 1.0 / (2.0 * gamma6))
    if not (kappa > 0 and np.isfinite(M)):
        raise ControlError(f"certificate degenerate: kappa={kappa}, M={M}")
    K.setflags(write=False)
    for arr in (parts["AK"], parts["P"]):
        arr.setflags(write=False)
    return Certificate(
        K=K,
        AK=parts["AK"],
        P=parts["P"],
        M=float(M),
        M_bound=float(M_bound),
        kappa=float(kappa),
        gamma1=parts["gamma1"],
        gamma5=float(gamma5),
        gamma6=float(gamma6),
        lambda1=lambda1,
        norm_a=norm_a,
        norm_b=norm_b,
        poles=poles,
        D=float(D),
        P_ext=parts["P_ext"],
    )
