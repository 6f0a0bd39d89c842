"""Augmented finite-dimensional design model.

The state is ``X = (u_D, w_1, ..., w_n, zeta)`` where ``n`` counts the
nonnegative eigenvalues and ``zeta`` is the tracking integrator corrected by
the tail ``sum_{j>n} e_j'(0)/lambda_j w_j``.  The three tail series
(``alpha``, ``beta`` and the disturbance gain ``M_d``) are summed over the
computed modes, continued with closed-form or asymptotic terms, and closed
with an analytic remainder; :class:`TailReport` records what was dropped.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spectral import ModeCoefficients, SpectralBasis

__all__ = [
    "TruncatedModel",
    "TailReport",
    "ModelError",
    "TailToleranceError",
    "select_n",
    "build_truncated_model",
    "model_from_blocks",
    "tail_weights",
    "gamma_signal",
    "DEFAULT_TAIL_TOL",
]

DEFAULT_TAIL_TOL = 1e-8
MAX_TAIL_J = 20_000_000
_SAFETY = 2.0


class ModelError(ValueError):
    pass


class TailToleranceError(ModelError):
    pass


@dataclass(frozen=True)
class TailReport:
    tail_J: int
    alpha_tail_bound: float
    beta_tail_bound: float
    Md_tail_bound: float
    extension: str

    def max_bound(self) -> float:
        return max(self.alpha_tail_bound, self.beta_tail_bound, self.Md_tail_bound)


@dataclass(frozen=True, eq=False)
class TruncatedModel:
    """Pair ``(A, B)`` of dimension ``n + 2`` with its building blocks."""

    n: int
    A: np.ndarray = field(repr=False)
    B: np.ndarray = field(repr=False)
    A1: np.ndarray = field(repr=False)
    B1: np.ndarray = field(repr=False)
    L1: np.ndarray = field(repr=False)
    alpha: float
    beta: float
    Md: float
    tail_J: int
    basis_ref: str
    L: float

    @property
    def dim(self) -> int:
        return self.n + 2

    @property
    def lambdas_head(self) -> np.ndarray:
        return np.diag(self.A1)[1:]

    @property
    def a_head(self) -> np.ndarray:
        return self.A1[1:, 0]

    @property
    def b_head(self) -> np.ndarray:
        return self.B1[1:]


def select_n(basis: SpectralBasis) -> int:
    """Number of nonnegative eigenvalues, i.e. the ``n`` with ``lambda_{n+1} < 0 <= lambda_n``."""
    n = int(np.count_nonzero(basis.lambdas >= 0.0))
    if n == basis.J:
        raise ModelError(
            f"all {basis.J} computed eigenvalues are nonnegative; compute more modes"
        )
    return n


def _extension_terms(basis: SpectralBasis, j: np.ndarray):
    """Per-mode ``(q_j, a_j, b_j)`` beyond the computed basis.

    ``q_j = e_j'(0) / lambda_j``.  Exact for a constant profile; otherwise
    the leading-order asymptotics with ``c`` replaced by its mean (for
    ``lambda_j``) and by ``c(L)`` (for the boundary term of ``a_j``).
    """
    L = basis.L
    prof = basis.profile
    k = j * np.pi / L
    amp = np.sqrt(2.0 / L)
    sgn = np.where(j % 2 == 0, 1.0, -1.0)
    b = amp * sgn / k
    if prof.is_constant:
        c = prof.value
        a = -c * b
    else:
        x = basis.mesh
        c = float(basis.weights @ prof(x)) / L
        a = -float(prof(np.array([L]))[0]) * b
    q = amp * k / (c - k**2)
    return q, a, b


def _profile_scales(basis: SpectralBasis):
    prof = basis.profile
    if prof.is_constant:
        return prof.value, abs(prof.value)
    c_mean = float(basis.weights @ prof(basis.mesh)) / basis.L
    return c_mean, abs(float(prof(np.array([basis.L]))[0]))


def _choose_tail_J(basis: SpectralBasis, tol: float) -> int:
    L = basis.L
    c_mean, c_end = _profile_scales(basis)
    # alternating alpha/beta terms ~ C / k^2; the half-term estimate of their
    # remainder is off by at most half the difference of consecutive terms
    C = (2.0 / L) * max(1.0, c_end)
    k_alt = (C * np.pi / (L * tol)) ** (1.0 / 3.0) + np.sqrt(max(c_mean, 0.0))
    # midpoint-rule error for the M_d remainder ~ (2L/pi^2) / (12 J^3)
    j_md = ((2.0 * L / np.pi**2) / (12.0 * tol)) ** (1.0 / 3.0)
    tail_J = int(np.ceil(_SAFETY * max(k_alt * L / np.pi, j_md, basis.J + 1)))
    if tail_J > MAX_TAIL_J:
        raise TailToleranceError(
            f"tail tolerance {tol:g} needs {tail_J} tail terms (cap {MAX_TAIL_J}); loosen tail_tol"
        )
    return tail_J


def _md_remainder(basis: SpectralBasis, tail_J: int) -> tuple[float, float]:
    """Estimate and error bound of ``sum_{j > tail_J} (e_j'(0)/lambda_j)^2``."""
    L = basis.L
    c, _ = _profile_scales(basis)
    K = (tail_J + 0.5) * np.pi / L
    # integral of (2/L) k^2 / (k^2 - c)^2 over j in (tail_J + 1/2, inf)
    est = (2.0 / np.pi) * (1.0 / K + 2.0 * c / (3.0 * K**3) + 3.0 * c**2 / (5.0 * K**5))
    bound = (2.0 * L / np.pi**2) / (12.0 * tail_J**3) + (2.0 / np.pi) * 4.0 * abs(c) ** 3 / (7.0 * K**7)
    return est, bound


def _pseries_constant(values: np.ndarray, j: np.ndarray, power: int) -> float:
    """Conservative ``C`` with ``|values_j| <= C / j**power`` over the last modes."""
    take = min(4, values.size)
    return _SAFETY * float(np.max(np.abs(values[-take:]) * j[-take:] ** power))


def build_truncated_model(
    basis: SpectralBasis,
    coeffs: ModeCoefficients,
    tail_tol: float = DEFAULT_TAIL_TOL,
    extend: bool = True,
) -> tuple[TruncatedModel, TailReport]:
    """Assemble ``A = [[A1, 0], [L1, 0]]`` and ``B = [B1; beta]``.

    Parameters
    ----------
    basis, coeffs :
        Eigenpairs and the projections ``a_j``, ``b_j`` on the same basis.
    tail_tol : float
        Upper bound allowed on every reported tail remainder.
    extend : bool
        Continue the series past the computed modes.  Without it the sums
        stop at ``basis.J`` and the p-series remainder must already meet
        ``tail_tol``.

    Raises
    ------
    TailToleranceError
        When a remainder bound is not below ``tail_tol``.
    """
    if not tail_tol > 0:
        raise ModelError("tail_tol must be positive")
    n = select_n(basis)
    J = basis.J
    L = basis.L
    lam = basis.lambdas
    ep0 = basis.ep0
    a = np.asarray(coeffs.a, dtype=float)
    b = np.asarray(coeffs.b, dtype=float)
    if a.size != J or b.size != J:
        raise ModelError("mode coefficients do not match the basis length")

    q = ep0[n:] / lam[n:]
    qa_head = q * a[n:]
    qb_head = q * b[n:]
    qq_head = q * q
    s_qa = float(np.sum(qa_head))
    s_qb = float(np.sum(qb_head))
    s_qq = float(np.sum(qq_head))
    j_head = np.arange(n + 1, J + 1, dtype=float)

    if extend:
        tail_J = _choose_tail_J(basis, tail_tol)
        j_ext = np.arange(J + 1, tail_J + 3)
        qe, ae, be = _extension_terms(basis, j_ext)
        ta, tb = qe * ae, qe * be
        s_qa += float(np.sum(ta[:-2])) + 0.5 * ta[-2]
        s_qb += float(np.sum(tb[:-2])) + 0.5 * tb[-2]
        s_qq += float(np.sum(qe[:-2] ** 2))
        md_est, md_bound = _md_remainder(basis, tail_J)
        s_qq += md_est
        alpha_bound = 0.5 * abs(float(ta[-2] + ta[-1]))
        beta_bound = 0.5 * abs(float(tb[-2] + tb[-1]))
        kind = "analytic" if basis.profile.is_constant else "asymptotic"
        if not basis.profile.is_constant:
            # mismatch between computed and surrogate terms decays like j^-3
            qs, as_, bs = _extension_terms(basis, j_head.astype(int))
            alpha_bound += _pseries_constant(qa_head - qs * as_, j_head, 3) / (2.0 * J**2)
            beta_bound += _pseries_constant(qb_head - qs * bs, j_head, 3) / (2.0 * J**2)
            md_bound += _pseries_constant(qq_head - qs * qs, j_head, 4) / (3.0 * J**3)
    else:
        tail_J = J
        kind = "none"
        alpha_bound = _pseries_constant(qa_head, j_head, 2) / J
        beta_bound = _pseries_constant(qb_head, j_head, 2) / J
        md_bound = _pseries_constant(qq_head, j_head, 2) / J

    report = TailReport(tail_J, alpha_bound, beta_bound, md_bound, kind)
    if report.max_bound() >= tail_tol:
        raise TailToleranceError(
            f"tail remainder bounds (alpha {alpha_bound:.3g}, beta {beta_bound:.3g}, "
            f"M_d {md_bound:.3g}) not below tail_tol={tail_tol:g}; "
            + ("compute more modes or loosen tail_tol" if extend else "enable the asymptotic extension")
        )

    alpha = 1.0 / L - s_qa
    beta = -s_qb
    Md = float(np.sqrt(2.0 * max(1.0, s_qq)))

    model = model_from_blocks(
        lam[:n], a[:n], b[:n], ep0[:n], alpha, beta, Md=Md, tail_J=tail_J, basis_ref=basis.fingerprint, L=L
    )
    return model, report


def model_from_blocks(
    lambdas, a, b, ep0, alpha: float, beta: float, *, Md: float = float("nan"), tail_J: int = 0,
    basis_ref: str = "synthetic", L: float = float("nan"),
) -> TruncatedModel:
    """Assemble a :class:`TruncatedModel` from head data and tail constants.

    Useful on its own for synthetic systems in tests and invariant checks.
    """
    lam = np.asarray(lambdas, dtype=float).reshape(-1)
    n = lam.size
    a, b, ep0 = (np.asarray(v, dtype=float).reshape(-1) for v in (a, b, ep0))
    if not (a.size == b.size == ep0.size == n):
        raise ModelError("head arrays must all have length n")
    A1 = np.zeros((n + 1, n + 1))
    A1[1:, 0] = a
    A1[1:, 1:] = np.diag(lam)
    B1 = np.concatenate([[1.0], b])
    L1 = np.concatenate([[alpha], ep0])
    A = np.zeros((n + 2, n + 2))
    A[: n + 1, : n + 1] = A1
    A[n + 1, : n + 1] = L1
    B = np.concatenate([B1, [beta]])
    for arr in (A, B, A1, B1, L1):
        arr.setflags(write=False)
    return TruncatedModel(n, A, B, A1, B1, L1, float(alpha), float(beta), float(Md), int(tail_J), basis_ref, float(L))


def tail_weights(basis: SpectralBasis, n: int, count: int) -> np.ndarray:
    """``e_j'(0) / lambda_j`` for ``j = n+1 .. count``.

    Modes past the computed basis come from the same extension used by
    :func:`build_truncated_model`.
    """
    count = int(count)
    if count <= n:
        return np.zeros(0)
    head_end = min(count, basis.J)
    head = basis.ep0[n:head_end] / basis.lambdas[n:head_end]
    if count <= basis.J:
        return head
    qe, _, _ = _extension_terms(basis, np.arange(basis.J + 1, count + 1))
    return np.concatenate([head, qe])


def gamma_signal(model: TruncatedModel, basis: SpectralBasis, r: float, d_coeffs) -> float:
    """``gamma = r + sum_{j>n} (e_j'(0)/lambda_j) d_j`` over the supplied projections.

    The sum runs over every coefficient provided, so its accuracy is set by
    how many projections ``d_coeffs`` carries.
    """
    d = np.asarray(d_coeffs, dtype=float)
    if d.size <= model.n:
        return float(r)
    w = tail_weights(basis, model.n, d.size)
    return float(r + w @ d[model.n :])
