"""Eigen-decomposition of ``d2/dx2 + c(x)`` on (0, L) with Dirichlet conditions.

Two routes are available.  A constant reaction coefficient has the closed
form ``lambda_j = c - (j pi / L)**2`` with sine eigenfunctions; a sampled
coefficient goes through a second-order finite-difference tridiagonal
eigenproblem solved at ``h`` and ``h/2`` and combined by one Richardson step.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import eigh_tridiagonal

__all__ = [
    "ReactionProfile",
    "SpectralBasis",
    "ModeCoefficients",
    "SpectralError",
    "simpson_weights",
    "compute_basis",
    "project",
    "mode_coefficients",
    "DEFAULT_MESH_SIZE",
]

DEFAULT_MESH_SIZE = 2001


class SpectralError(ValueError):
    """Invalid input to the eigen-decomposition or projection routines."""


@dataclass(frozen=True, eq=False)
class ReactionProfile:
    """Reaction coefficient ``c(x)`` on ``(0, L)``.

    Use :meth:`constant` or :meth:`sampled` rather than the raw constructor.
    Sampled profiles are uniform grids over ``[0, L]`` (endpoints included)
    and are evaluated elsewhere through a cubic spline.
    """

    kind: str
    L: float
    value: float | None = None
    samples: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if not np.isfinite(self.L) or self.L <= 0:
            raise SpectralError(f"domain length L must be positive and finite, got {self.L}")
        if self.kind == "constant":
            if self.value is None or not np.isfinite(self.value):
                raise SpectralError("constant profile needs one finite value")
        elif self.kind == "sampled":
            s = np.asarray(self.samples, dtype=float)
            if s.ndim != 1 or s.size < 3:
                raise SpectralError("sampled profile needs at least 3 grid values")
            if not np.all(np.isfinite(s)):
                raise SpectralError("sampled profile contains non-finite values")
            s = s.copy()
            s.setflags(write=False)
            object.__setattr__(self, "samples", s)
        else:
            raise SpectralError(f"unknown profile kind {self.kind!r}")

    @classmethod
    def constant(cls, value: float, L: float) -> "ReactionProfile":
        return cls("constant", float(L), value=float(value))

    @classmethod
    def sampled(cls, values, L: float) -> "ReactionProfile":
        return cls("sampled", float(L), samples=np.asarray(values, dtype=float))

    @classmethod
    def from_function(cls, func, L: float, n_points: int = DEFAULT_MESH_SIZE) -> "ReactionProfile":
        x = np.linspace(0.0, L, n_points)
        return cls.sampled(np.broadcast_to(func(x), x.shape), L)

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.is_constant:
            return np.full(x.shape, self.value)
        grid = np.linspace(0.0, self.L, self.samples.size)
        return CubicSpline(grid, self.samples)(x)

    def describe(self) -> str:
        if self.is_constant:
            return f"constant c={self.value:g}, L={self.L:g}"
        return f"sampled c ({self.samples.size} points), L={self.L:g}"


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """First ``J`` Dirichlet eigenpairs, sorted by decreasing eigenvalue.

    ``eigvecs[j]`` holds the L2-normalised samples of ``e_{j+1}`` on ``mesh``
    and is signed so that ``ep0[j] = e_{j+1}'(0) > 0``.
    """

    lambdas: np.ndarray
    ep0: np.ndarray
    epL: np.ndarray
    eigvecs: np.ndarray = field(repr=False)
    mesh: np.ndarray = field(repr=False)
    profile: ReactionProfile
    method: str

    def __post_init__(self):
        for name in ("lambdas", "ep0", "epL", "eigvecs", "mesh"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def J(self) -> int:
        return self.lambdas.size

    @property
    def L(self) -> float:
        return self.profile.L

    @property
    def h(self) -> float:
        return self.mesh[1] - self.mesh[0]

    @property
    def weights(self) -> np.ndarray:
        return simpson_weights(self.mesh.size, self.h)

    @property
    def fingerprint(self) -> str:
        digest = hashlib.sha1()
        digest.update(self.method.encode())
        digest.update(np.float64(self.L).tobytes())
        digest.update(self.lambdas.tobytes())
        digest.update(np.int64(self.mesh.size).tobytes())
        return digest.hexdigest()[:12]

    def gram(self) -> np.ndarray:
        return (self.eigvecs * self.weights) @ self.eigvecs.T

    def synthesize(self, coeffs) -> np.ndarray:
        """Samples of ``sum_j coeffs[j] e_{j+1}`` on the mesh."""
        coeffs = np.asarray(coeffs, dtype=float)
        return coeffs @ self.eigvecs[: coeffs.shape[-1]]


@dataclass(frozen=True, eq=False)
class ModeCoefficients:
    """Projections ``a_j = <x c(x)/L, e_j>`` and ``b_j = <-x/L, e_j>``."""

    a: np.ndarray
    b: np.ndarray

    def trace_residual(self, basis: SpectralBasis) -> np.ndarray:
        """``a_j + lambda_j b_j + e_j'(L)``, zero up to quadrature error."""
        return self.a + basis.lambdas * self.b + basis.epL


def simpson_weights(n_points: int, h: float) -> np.ndarray:
    if n_points < 3 or n_points % 2 == 0:
        raise SpectralError(f"composite Simpson needs an odd point count >= 3, got {n_points}")
    w = np.full(n_points, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return w * (h / 3.0)


# fourth-order one-sided first derivative
_EDGE_STENCIL = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0


def _edge_derivatives(vecs: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    d0 = vecs[:, :5] @ _EDGE_STENCIL / h
    dL = -(vecs[:, ::-1][:, :5] @ _EDGE_STENCIL) / h
    return d0, dL


def _analytic_modes(c: float, L: float, J: int, mesh: np.ndarray):
    j = np.arange(1, J + 1)
    k = j * np.pi / L
    lambdas = c - k**2
    amp = np.sqrt(2.0 / L)
    vecs = amp * np.sin(np.outer(k, mesh))
    # exact zeros at the boundary avoid sin(j pi) round-off
    vecs[:, 0] = 0.0
    vecs[:, -1] = 0.0
    return lambdas, amp * k, amp * k * np.cos(j * np.pi), vecs


def _fd_modes(cfun, L: float, intervals: int, J: int):
    h = L / intervals
    x = np.linspace(0.0, L, intervals + 1)
    diag = -2.0 / h**2 + cfun(x[1:-1])
    off = np.full(intervals - 2, 1.0 / h**2)
    m = intervals - 1
    vals, vecs = eigh_tridiagonal(diag, off, select="i", select_range=(m - J, m - 1))
    order = np.argsort(vals)[::-1]
    vals = vals[order]
    full = np.zeros((J, intervals + 1))
    full[:, 1:-1] = vecs[:, order].T
    w = simpson_weights(intervals + 1, h)
    full /= np.sqrt((full**2) @ w)[:, None]
    d0, dL = _edge_derivatives(full, h)
    sign = np.where(d0 < 0, -1.0, 1.0)
    return vals, full * sign[:, None], d0 * sign, dL * sign


def compute_basis(
    profile: ReactionProfile,
    J: int,
    mesh_size: int = DEFAULT_MESH_SIZE,
    method: str = "auto",
) -> SpectralBasis:
    """Compute the first ``J`` eigenpairs of ``d2/dx2 + c`` with Dirichlet conditions.

    Parameters
    ----------
    profile : ReactionProfile
        Reaction coefficient and domain length.
    J : int
        Number of modes.
    mesh_size : int
        Number of mesh points including both endpoints.  An even value is
        bumped by one so that composite Simpson quadrature applies.
    method : {'auto', 'analytic', 'numeric'}
        ``'auto'`` uses the closed form for constant profiles and the
        Richardson-extrapolated finite-difference solver otherwise.

    Returns
    -------
    SpectralBasis
    """
    J = int(J)
    mesh_size = int(mesh_size)
    if J < 1:
        raise SpectralError("J must be at least 1")
    if mesh_size % 2 == 0:
        mesh_size += 1
    if mesh_size < 8 * J:
        raise SpectralError(
            f"mesh_size={mesh_size} too coarse for J={J} modes (need at least {8 * J})"
        )
    if method == "auto":
        method = "analytic" if profile.is_constant else "numeric"
    if method == "analytic" and not profile.is_constant:
        raise SpectralError("analytic eigenpairs need a constant reaction profile")
    if method not in ("analytic", "numeric"):
        raise SpectralError(f"unknown method {method!r}")

    L = profile.L
    mesh = np.linspace(0.0, L, mesh_size)
    if method == "analytic":
        lambdas, ep0, epL, vecs = _analytic_modes(profile.value, L, J, mesh)
    else:
        n = mesh_size - 1
        lam_h, vec_h, d0_h, dL_h = _fd_modes(profile, L, n, J)
        lam_f, vec_f, d0_f, dL_f = _fd_modes(profile, L, 2 * n, J)
        lambdas = (4.0 * lam_f - lam_h) / 3.0
        ep0 = (4.0 * d0_f - d0_h) / 3.0
        epL = (4.0 * dL_f - dL_h) / 3.0
        vecs = (4.0 * vec_f[:, ::2] - vec_h) / 3.0
        vecs /= np.sqrt((vecs**2) @ simpson_weights(mesh_size, L / n))[:, None]

    if J > 1 and np.min(-np.diff(lambdas)) <= 0:
        raise SpectralError("computed eigenvalues are not simple; refine the mesh")
    return SpectralBasis(lambdas, ep0, epL, vecs, mesh, profile, method)


def project(basis: SpectralBasis, f) -> np.ndarray:
    """Return ``<f, e_j>`` for ``j = 1..J`` by composite Simpson quadrature.

    ``f`` holds samples on ``basis.mesh``; a 2-D array projects each row.
    """
    f = np.asarray(f, dtype=float)
    if f.shape[-1] != basis.mesh.size:
        raise SpectralError(
            f"samples have {f.shape[-1]} points but the basis mesh has {basis.mesh.size}"
        )
    return (f * basis.weights) @ basis.eigvecs.T


def mode_coefficients(basis: SpectralBasis, profile: ReactionProfile | None = None) -> ModeCoefficients:
    profile = basis.profile if profile is None else profile
    if not np.isclose(profile.L, basis.L, rtol=1e-12, atol=0.0):
        raise SpectralError("profile and basis have different domain lengths")
    x = basis.mesh
    a = project(basis, x * profile(x) / basis.L)
    b = project(basis, -x / basis.L)
    return ModeCoefficients(a, b)
