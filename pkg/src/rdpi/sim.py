"""Closed-loop simulation of the modal system with delayed boundary input.

The simulated plant keeps ``J_sim`` modes::

    w_j' = lambda_j w_j + a_j u_D + b_j v_D + d_0(t) g_j
    z'   = sum_j e_j'(0) w_j + u_D / L - r(t)
    u_D' = v_D

and is advanced by classical RK4.  The control ``v`` lives on the step
nodes; between nodes it is the linear interpolant (see
:mod:`rdpi.predictor`), which is what the delayed stages read.  At each
node the predictor is evaluated explicitly: ``v`` at the new node enters
the Artstein integral with a provisional value, ``Z`` and then ``v = K Z``
follow, and the buffer is corrected.  The provisional value is a
second-order Taylor step of ``v`` built from the exact closed-loop
derivatives at the previous node, so the mismatch it leaves in the
identity ``E_1 Z = u`` is ``dt/2 |v - v_prov| = O(dt^4)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from .control import Certificate, build_certificate, expm
from .model import TruncatedModel, build_truncated_model
from .predictor import HistoryBuffer, PredictorState, artstein_transform, first_component_identity
from .signals import PiecewiseSignal, parse_signal
from .spectral import ReactionProfile, SpectralBasis, compute_basis, mode_coefficients, project

__all__ = [
    "SimulationError",
    "Scenario",
    "Design",
    "design",
    "DelayLoopState",
    "Equilibrium",
    "TraceLog",
    "simulate",
    "compute_equilibrium",
    "tail_series",
    "output_trace",
    "lyapunov_trace",
    "decay_report",
    "tracking_report",
    "phase_windows",
    "reference_scenario",
    "disturbance_scenario",
    "TRACE_COLUMNS",
    "BLOWUP_LIMIT",
]

log = logging.getLogger(__name__)

BLOWUP_LIMIT = 1e12
TRACE_COLUMNS = ("t", "u_delayed", "u", "z", "zeta", "yx0", "r", "err", "y_inf", "y_l2", "V")


class SimulationError(RuntimeError):
    """Numerical failure during a run; ``partial`` holds the trace so far."""

    def __init__(self, message: str, partial: "TraceLog | None" = None):
        super().__init__(message)
        self.partial = partial


def _as_spatial(f, L: float):
    if callable(f):
        return f
    samples = np.asarray(f, dtype=float)
    grid = np.linspace(0.0, L, samples.size)
    return CubicSpline(grid, samples)


@dataclass
class Scenario:
    """Everything that defines one closed-loop run.

    ``y0`` and ``g`` are callables of ``x`` (or samples on a uniform grid
    over ``[0, L]``); the disturbance is ``d(t, x) = d0(t) g(x)``.
    """

    profile: ReactionProfile
    D: float = 1.0
    poles: tuple = (-0.5, -0.6, -0.7, -0.8)
    J_sim: int = 10
    dt: float = 0.005
    T: float = 90.0
    y0: object = 0.0
    z0: float = 0.0
    r: PiecewiseSignal = field(default_factory=lambda: PiecewiseSignal.constant(0.0))
    d0: PiecewiseSignal = field(default_factory=lambda: PiecewiseSignal.constant(0.0))
    g: object = 0.0
    tail_tol: float = 1e-8
    mesh_size: int = 2001
    name: str = "scenario"

    def __post_init__(self):
        L = self.profile.L
        if isinstance(self.r, (int, float)):
            self.r = PiecewiseSignal.constant(self.r)
        elif isinstance(self.r, str):
            self.r = parse_signal(self.r)
        if isinstance(self.d0, (int, float)):
            self.d0 = PiecewiseSignal.constant(self.d0)
        elif isinstance(self.d0, str):
            self.d0 = parse_signal(self.d0)
        for name in ("y0", "g"):
            v = getattr(self, name)
            if isinstance(v, (int, float)):
                c = float(v)
                setattr(self, name, lambda x, c=c: np.full(np.shape(x), c))
            else:
                setattr(self, name, _as_spatial(v, L))
        self.poles = tuple(float(p) for p in self.poles)

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))

    def validate(self, n: int | None = None) -> None:
        from .predictor import steps_per_delay

        steps_per_delay(self.D, self.dt)
        if not self.T > self.D:
            raise SimulationError(f"horizon T={self.T} must exceed the delay D={self.D}")
        if abs(self.T / self.dt - self.steps) > 1e-9 * self.steps:
            raise SimulationError("dt must divide the horizon T")
        if n is not None:
            if self.J_sim <= n:
                raise SimulationError(f"J_sim={self.J_sim} must exceed n={n}")
            if len(self.poles) != n + 2:
                raise SimulationError(f"need {n + 2} poles for n={n}, got {len(self.poles)}")
        x = np.linspace(0.0, self.profile.L, 11)
        if not np.all(np.isfinite(self.y0(x))):
            raise SimulationError("y0 is not finite on the mesh")


@dataclass(frozen=True, eq=False)
class Design:
    """Basis, truncated model and certificate shared by runs of one plant."""

    basis: SpectralBasis
    model: TruncatedModel
    cert: Certificate
    tail: object

    @property
    def coeffs(self):
        return mode_coefficients(self.basis)


def design(scenario: Scenario, J: int | None = None) -> Design:
    J = max(int(J or 0), scenario.J_sim, 16)
    basis = compute_basis(scenario.profile, J, scenario.mesh_size)
    coeffs = mode_coefficients(basis)
    model, tail = build_truncated_model(basis, coeffs, scenario.tail_tol)
    scenario.validate(model.n)
    cert = build_certificate(model, basis, coeffs, scenario.D, scenario.poles)
    return Design(basis, model, cert, tail)


@dataclass
class DelayLoopState:
    """Snapshot of the simulation loop at one node."""

    t: float
    w: np.ndarray
    uD: float
    u: float
    z: float
    zeta: float
    history: HistoryBuffer | None = None


def output_trace(state: DelayLoopState, basis: SpectralBasis, J_sim: int | None = None) -> float:
    """``y_x(t, 0) = sum_{j <= J_sim} w_j e_j'(0) + u_D / L``."""
    w = np.asarray(state.w, dtype=float)
    J = w.size if J_sim is None else int(J_sim)
    return float(w[:J] @ basis.ep0[:J] + state.uD / basis.L)


# ------------------------------------------------------------ equilibria


def tail_series(basis: SpectralBasis, n: int, g) -> float:
    """``sum_{j > n} (e_j'(0)/lambda_j) <g, e_j>`` summed to infinity.

    With ``g~`` the part of ``g`` orthogonal to the first ``n`` modes, the
    series is ``phi'(0)`` for the solution of ``phi'' + c phi = g~``,
    ``phi(0) = phi(L) = 0``, taken orthogonal to those modes.  The boundary
    value problem is solved by linear shooting with a tight tolerance.
    """
    L = basis.L
    x = basis.mesh
    gfun = _as_spatial(g, L)
    head = project(basis, gfun(x))[:n]
    head_fun = CubicSpline(x, head @ basis.eigvecs[:n]) if n else (lambda s: 0.0)
    prof = basis.profile
    if prof.is_constant:
        c_val = float(prof.value)
        cfun = lambda s: c_val
    else:
        c_spline = CubicSpline(np.linspace(0.0, L, prof.samples.size), prof.samples)
        cfun = lambda s: float(c_spline(s))

    def rhs(s, y, forced):
        src = float(gfun(np.array([s]))[0] - head_fun(s)) if forced else 0.0
        return [y[1], src - cfun(s) * y[0]]

    opts = dict(method="DOP853", rtol=1e-12, atol=1e-14, dense_output=True)
    hom = solve_ivp(rhs, (0.0, L), [0.0, 1.0], args=(False,), **opts)
    par = solve_ivp(rhs, (0.0, L), [0.0, 0.0], args=(True,), **opts)
    hL = hom.y[0, -1]
    scale = np.max(np.abs(hom.y[0]))
    s = 0.0 if abs(hL) < 1e-10 * scale else -par.y[0, -1] / hL
    phi = par.sol(x)[0] + s * hom.sol(x)[0]
    dphi0 = s  # par has zero slope at 0
    if n:
        coef = project(basis, phi)[:n]
        dphi0 -= float(coef @ basis.ep0[:n])
    return float(dphi0)


@dataclass(frozen=True, eq=False)
class Equilibrium:
    """Closed-loop equilibrium for constant ``r_e`` and ``d_e``.

    ``modes=None`` uses the design model (infinite tail series);
    an integer restricts every tail series to that many modes, which is the
    equilibrium of a simulation that keeps exactly those modes.
    """

    Ze: np.ndarray
    Xe: np.ndarray
    ue: float
    zetae: float
    ze: float
    w: np.ndarray  # all modal coefficients j = 1..J (head from Xe)
    wje: np.ndarray  # tail part j = n+1..J
    de: np.ndarray
    we: np.ndarray = field(repr=False)
    ye: np.ndarray = field(repr=False)
    Gamma: np.ndarray = field(repr=False)
    AK: np.ndarray = field(repr=False)
    n: int
    modes: int | None

    def slope_at_zero(self, basis: SpectralBasis, J: int | None = None, d_e=None) -> float:
        """``y_e'(0)`` reconstructed from the first ``J`` modes.

        Passing the disturbance profile ``d_e`` adds the modes beyond ``J``
        in closed form: there ``w_j = -(a_j u_e + d_j) / lambda_j``, and both
        weighted sums are evaluated by :func:`tail_series`.
        """
        J = self.w.size if J is None else int(J)
        head = float(self.w[:J] @ basis.ep0[:J] + self.ue / basis.L)
        if d_e is None:
            return head
        L = basis.L
        c = basis.profile
        a_fun = lambda x: np.asarray(x) * c(np.asarray(x)) / L
        tail = -self.ue * tail_series(basis, J, a_fun) - tail_series(basis, J, d_e)
        return head + tail

    def modal_residual(self, basis: SpectralBasis, coeffs) -> np.ndarray:
        """``lambda_j w_j + a_j u_e + d_j`` for the stored modes (``v_e = 0``)."""
        J = self.w.size
        return basis.lambdas[:J] * self.w + coeffs.a[:J] * self.ue + self.de[:J]


def compute_equilibrium(
    r_e: float,
    d_e,
    cert: Certificate,
    model: TruncatedModel,
    basis: SpectralBasis,
    modes: int | None = None,
    coeffs=None,
) -> Equilibrium:
    """Solve ``A_K Z_e + Gamma_e = 0`` and rebuild ``w_e`` and ``y_e``.

    ``d_e`` is a callable of ``x`` or samples on ``basis.mesh``.
    """
    n = model.n
    L = basis.L
    x = basis.mesh
    coeffs = mode_coefficients(basis) if coeffs is None else coeffs
    d_samples = d_e(x) if callable(d_e) else np.asarray(d_e, dtype=float)
    de = project(basis, d_samples)
    lam, ep0 = basis.lambdas, basis.ep0
    if modes is None:
        J = basis.J
        alpha = model.alpha
        gamma_tail = tail_series(basis, n, d_e if callable(d_e) else d_samples) if np.any(d_samples) else 0.0
        AK = np.array(cert.AK, dtype=float)
    else:
        J = int(modes)
        if not n < J <= basis.J:
            raise ValueError(f"modes={J} must lie in ({n}, {basis.J}]")
        q = ep0[n:J] / lam[n:J]
        alpha = 1.0 / L - float(q @ coeffs.a[n:J])
        gamma_tail = float(q @ de[n:J])
        A = np.array(model.A, dtype=float)
        A[n + 1, 0] = alpha
        AK = A + np.outer(expm(-cert.D * model.A) @ model.B, cert.K)
    Gamma = np.concatenate([[0.0], de[:n], [-(r_e + gamma_tail)]])
    Ze = -np.linalg.solve(AK, Gamma)
    ue = float(Ze[0])
    w = np.empty(J)
    w[:n] = Ze[1 : n + 1]
    w[n:] = -(coeffs.a[n:J] * ue + de[n:J]) / lam[n:J]
    zetae = float(Ze[-1])
    ze = zetae + float((ep0[n:J] / lam[n:J]) @ w[n:])
    we = basis.synthesize(w)
    ye = we + x / L * ue
    return Equilibrium(
        Ze=Ze,
        Xe=Ze.copy(),
        ue=ue,
        zetae=zetae,
        ze=ze,
        w=w,
        wje=w[n:].copy(),
        de=de[:J],
        we=we,
        ye=ye,
        Gamma=Gamma,
        AK=AK,
        n=n,
        modes=modes,
    )


# ------------------------------------------------------------ trace log


@dataclass(eq=False)
class TraceLog:
    """Per-node records of one run plus the raw modal and transformed states."""

    t: np.ndarray
    u_delayed: np.ndarray
    u: np.ndarray
    z: np.ndarray
    zeta: np.ndarray
    yx0: np.ndarray
    r: np.ndarray
    err: np.ndarray
    y_inf: np.ndarray
    y_l2: np.ndarray
    V: np.ndarray
    W: np.ndarray = field(repr=False)
    Z: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)
    d0: np.ndarray = field(repr=False)
    identity_residual: np.ndarray = field(repr=False)
    zeta_drift: float = 0.0
    dt: float = 0.0
    D: float = 0.0
    n: int = 0
    J_sim: int = 0
    final_state: DelayLoopState | None = None
    complete: bool = True

    def __len__(self) -> int:
        return self.t.size

    def columns(self) -> dict:
        return {name: getattr(self, name) for name in TRACE_COLUMNS}

    def table(self) -> np.ndarray:
        return np.column_stack([getattr(self, c) for c in TRACE_COLUMNS])

    def truncated(self, count: int) -> "TraceLog":
        kw = {}
        for f in self.__dataclass_fields__:
            v = getattr(self, f)
            kw[f] = v[:count] if isinstance(v, np.ndarray) and v.ndim >= 1 and v.shape[0] == self.t.size else v
        kw["complete"] = False
        return TraceLog(**kw)


def _norms(basis: SpectralBasis, W: np.ndarray, uD: np.ndarray, b: np.ndarray, chunk: int = 2048):
    """Sup and L2 norms of ``y = sum w_j e_j + (x/L) u_D`` for each row."""
    J = W.shape[1]
    x_over_L = basis.mesh / basis.L
    vecs = basis.eigvecs[:J]
    y_inf = np.empty(W.shape[0])
    for s in range(0, W.shape[0], chunk):
        y = W[s : s + chunk] @ vecs + np.outer(uD[s : s + chunk], x_over_L)
        y_inf[s : s + chunk] = np.max(np.abs(y), axis=1)
    # <x/L, e_j> = -b_j and |x/L|^2 = L/3
    l2sq = np.sum(W * W, axis=1) - 2.0 * uD * (W @ b[:J]) + uD**2 * basis.L / 3.0
    return y_inf, np.sqrt(np.maximum(l2sq, 0.0))


# ------------------------------------------------------------ simulation


def simulate(
    scenario: Scenario,
    cert: Certificate,
    model: TruncatedModel,
    basis: SpectralBasis,
    *,
    closed_loop: bool = True,
    zeta_check_every: int = 100,
    compute_V: bool = True,
) -> TraceLog:
    """Run the scenario with predictor feedback (or open loop) and return the trace."""
    sc = scenario
    n = model.n
    J = int(sc.J_sim)
    sc.validate(n)
    if J > basis.J:
        raise SimulationError(f"J_sim={J} exceeds the {basis.J} computed modes")
    dt, L = sc.dt, basis.L
    steps = sc.steps
    pred = PredictorState.build(model.A, model.B, cert.K, sc.D, dt)
    buf = HistoryBuffer(sc.D, dt)
    N = pred.N
    K = np.asarray(cert.K, dtype=float)

    coeffs = mode_coefficients(basis)
    lam = np.array(basis.lambdas[:J])
    a = np.array(coeffs.a[:J])
    b = np.array(coeffs.b[:J])
    ep0 = np.array(basis.ep0[:J])
    x = basis.mesh
    gj = project(basis, sc.g(x))[:J]
    q = ep0[n:] / lam[n:]
    alpha_J = 1.0 / L - float(q @ a[n:])
    beta_J = -float(q @ b[n:])
    qg = float(q @ gj[n:])
    ep_head = ep0[:n]

    # state: w (J), z, u_D, zeta
    iz, iu, ize = J, J + 1, J + 2

    def rhs(s, vD, r_t, d_t):
        w = s[:J]
        uD = s[iu]
        out = np.empty(J + 3)
        out[:J] = lam * w + a * uD + b * vD + d_t * gj
        out[iz] = ep0 @ w + uD / L - r_t
        out[iu] = vD
        out[ize] = alpha_J * uD + beta_J * vD - (r_t + qg * d_t) + ep_head @ w[:n]
        return out

    half = 0.5 * dt
    times = np.arange(steps + 1) * dt
    mids = times[:-1] + half
    r_node = sc.r.sample(times)
    r_mid = sc.r.sample(mids)
    r_end = np.array([sc.r(t, left=True) for t in times[1:]]) if sc.r.breakpoints() else r_node[1:]
    d_node = sc.d0.sample(times)
    d_mid = sc.d0.sample(mids)
    d_end = np.array([sc.d0(t, left=True) for t in times[1:]]) if sc.d0.breakpoints() else d_node[1:]

    W = np.empty((steps + 1, J))
    Zs = np.empty((steps + 1, n + 2))
    S = np.empty((steps + 1, J + 3))
    v = np.zeros(steps + 1)
    u = np.zeros(steps + 1)
    resid = np.zeros(steps + 1)

    s = np.zeros(J + 3)
    s[:J] = project(basis, sc.y0(x))[:J]  # u_D(0) = 0
    s[iz] = sc.z0
    s[ize] = sc.z0 - q @ s[n:J]
    S[0] = s
    zeta_drift = 0.0

    c_full = pred.quadrature_weights(N)
    weights = pred.weights

    # X-coordinates of the simulated plant obey
    #   X' = A_J X + B_J v_D + Gamma_J(t)
    # (A_J, B_J: design pair with the tail series cut at J_sim), hence
    #   Z' = A Z + (A_J - A) X + (B_J - B) v_D + exp(-D A) B v + Gamma_J.
    A = np.array(model.A, dtype=float)
    B = np.array(model.B, dtype=float)
    A_J = A.copy()
    A_J[n + 1, 0] = alpha_J
    B_J = B.copy()
    B_J[n + 1] = beta_J
    dA = A_J - A
    dB = B_J - B
    Bd = np.asarray(pred.weights[N], dtype=float)
    g_head = gj[:n]
    r_fun, d_fun = sc.r, sc.d0

    def gamma_J(t, deriv=False):
        rr = r_fun.derivative(t) if deriv else r_fun(t)
        dd = d_fun.derivative(t) if deriv else d_fun(t)
        return np.concatenate([[0.0], dd * g_head, [-(rr + qg * dd)]])

    def provisional(k, X, Z, vk):
        """``v(t_k) + dt v'(t_k) + dt^2/2 v''(t_k)`` from the closed-loop ODE."""
        m = k - N
        vD = v[m] if m >= 0 else 0.0
        vD_dot = (v[m + 1] - v[m]) / dt if m >= 0 else 0.0
        t = times[k]
        Xd = A_J @ X + B_J * vD + gamma_J(t)
        Zd = A @ Z + dA @ X + dB * vD + Bd * vk + gamma_J(t)
        vd = float(K @ Zd)
        Zdd = A @ Zd + dA @ Xd + dB * vD_dot + Bd * vd + gamma_J(t, deriv=True)
        return vk + dt * vd + half * dt * float(K @ Zdd)

    def state_X(s):
        return np.concatenate([[s[iu]], s[:n], [s[ize]]])

    def transform(k, X):
        if k >= N:
            return X + (c_full * buf.window()) @ weights
        return artstein_transform(X, buf, pred)

    # node 0: empty integral, Z = X
    buf.push(0.0)
    X = state_X(s)
    Z = transform(0, X)
    v[0] = float(K @ Z) if closed_loop else 0.0
    buf.set_latest(v[0])
    Zs[0] = Z
    resid[0] = first_component_identity(Z, 0.0)

    partial_error = None
    for k in range(steps):
        win = buf.window()
        if k - N >= 0:
            v0, v1 = win[0], win[1]
            vm = 0.5 * (v0 + v1)
        else:
            v0 = v1 = vm = 0.0
        v_prov = provisional(k, X, Z, v[k]) if closed_loop else 0.0
        k1 = rhs(s, v0, r_node[k], d_node[k])
        k2 = rhs(s + half * k1, vm, r_mid[k], d_mid[k])
        k3 = rhs(s + half * k2, vm, r_mid[k], d_mid[k])
        k4 = rhs(s + dt * k3, v1, r_end[k], d_end[k])
        s = s + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        j = k + 1
        S[j] = s
        if not np.all(np.isfinite(s)) or np.max(np.abs(s[:J])) > BLOWUP_LIMIT:
            partial_error = f"state blew up at t={times[j]:.6g} (|w| > {BLOWUP_LIMIT:g})"
            break
        if zeta_check_every and j % zeta_check_every == 0:
            zeta_drift = max(zeta_drift, abs(s[ize] - (s[iz] - q @ s[n:J])))
        buf.push(v_prov)
        X = state_X(s)
        Z = transform(j, X)
        v[j] = float(K @ Z) if closed_loop else 0.0
        buf.set_latest(v[j])
        u[j] = u[k] + half * (v[k] + v[j])
        Zs[j] = Z
        resid[j] = first_component_identity(Z, u[j])

    count = steps + 1 if partial_error is None else j
    S, W, Zs, v, u, resid = S[:count], S[:count, :J], Zs[:count], v[:count], u[:count], resid[:count]
    times = times[:count]
    uD = S[:, iu]
    yx0 = W @ ep0 + uD / L
    y_inf, y_l2 = _norms(basis, W, uD, b)
    trace = TraceLog(
        t=times,
        u_delayed=uD,
        u=u,
        z=S[:, iz],
        zeta=S[:, ize],
        yx0=yx0,
        r=r_node[:count],
        err=yx0 - r_node[:count],
        y_inf=y_inf,
        y_l2=y_l2,
        V=np.zeros(count),
        W=W,
        Z=Zs,
        v=v,
        d0=d_node[:count],
        identity_residual=resid,
        zeta_drift=float(zeta_drift),
        dt=dt,
        D=sc.D,
        n=n,
        J_sim=J,
        final_state=DelayLoopState(
            float(times[-1]), W[-1].copy(), float(uD[-1]), float(u[-1]), float(S[-1, iz]), float(S[-1, ize]), buf
        ),
        complete=partial_error is None,
    )
    if compute_V:
        trace.V = lyapunov_trace(trace, cert, model, basis, sc)
    if partial_error is not None:
        raise SimulationError(partial_error, trace)
    return trace


# ------------------------------------------------------------ Lyapunov function


def _equilibrium_basis(scenario: Scenario, cert, model, basis, J: int):
    """Equilibria for ``(r_e, d0_e) = (1, 0)`` and ``(0, 1)``; they combine linearly."""
    zero = np.zeros_like(basis.mesh)
    e_r = compute_equilibrium(1.0, zero, cert, model, basis, modes=J)
    e_d = compute_equilibrium(0.0, scenario.g(basis.mesh), cert, model, basis, modes=J)
    return e_r, e_d


def lyapunov_trace(trace: TraceLog, cert: Certificate, model: TruncatedModel, basis: SpectralBasis, scenario: Scenario) -> np.ndarray:
    """``V(t)`` along the run, relative to the equilibrium of the current ``(r, d0)``.

    ``V = M/2 dZ'P dZ + M/2 int_{max(t-D,0)}^t dZ(s)'P dZ(s) ds - 1/2 sum_j lambda_j dw_j^2``
    with the integral by trapezoid on the stored nodes.  The equilibrium is
    that of the simulated ``J_sim``-mode plant, so ``V -> 0`` on settled
    phases.
    """
    J = trace.J_sim
    e_r, e_d = _equilibrium_basis(scenario, cert, model, basis, J)
    rr, dd = trace.r, trace.d0
    Ze = np.outer(rr, e_r.Ze) + np.outer(dd, e_d.Ze)
    we = np.outer(rr, e_r.w) + np.outer(dd, e_d.w)
    P = np.asarray(cert.P, dtype=float)
    M = cert.M
    Z = trace.Z
    dZ = Z - Ze
    quad_now = np.einsum("ij,jk,ik->i", dZ, P, dZ)

    # window integral of (Z(s) - Ze(t))' P (Z(s) - Ze(t)), evaluated directly
    # on the differences: expanding the square cancels catastrophically.
    dt = trace.dt
    N = int(round(trace.D / dt))
    count = Z.shape[0]
    integral = np.zeros(count)
    c = np.full(N + 1, dt)
    c[0] = c[-1] = 0.5 * dt
    for k in range(1, min(N, count)):
        d = Z[: k + 1] - Ze[k]
        q = np.einsum("ij,jk,ik->i", d, P, d)
        integral[k] = dt * (q.sum() - 0.5 * (q[0] + q[-1]))
    if count > N:
        windows = np.lib.stride_tricks.sliding_window_view(Z, N + 1, axis=0)  # (m, dim, N+1)
        chunk = 1024
        for lo in range(0, count - N, chunk):
            hi = min(lo + chunk, count - N)
            d = windows[lo:hi] - Ze[lo + N : hi + N, :, None]
            q = np.einsum("mjs,jk,mks->ms", d, P, d)
            integral[lo + N : hi + N] = q @ c
    dw = trace.W - we
    modal = -0.5 * (dw * dw) @ np.asarray(basis.lambdas[:J])
    return 0.5 * M * quad_now + 0.5 * M * integral + modal


def phase_windows(scenario: Scenario, min_length: float = 0.0) -> list[tuple[float, float]]:
    """Intervals on which both ``r`` and ``d0`` are constant."""
    T = scenario.T
    rw = scenario.r.constant_windows(T)
    dw = scenario.d0.constant_windows(T)
    out = []
    for a0, a1, _ in rw:
        for b0, b1, _ in dw:
            lo, hi = max(a0, b0), min(a1, b1)
            if hi - lo > min_length:
                out.append((lo, hi))
    return out


@dataclass(frozen=True)
class DecayResult:
    start: float
    end: float
    t0: float
    kappa: float
    worst_ratio: float
    holds: bool
    skipped: bool = False


def decay_report(trace: TraceLog, kappa: float, windows, tol: float = 0.05, delay: float | None = None) -> list[DecayResult]:
    """Check ``V(t) <= exp(-2 kappa (t - t0)) V(t0) (1 + tol)`` on each window.

    ``t0`` is the window start plus the delay; windows shorter than the
    delay are skipped with a warning.
    """
    D = trace.D if delay is None else delay
    out = []
    t = trace.t
    eps = 1e-9 * trace.dt
    for lo, hi in windows:
        t0 = lo + D
        if hi - lo < D:
            log.warning("phase [%g, %g] shorter than the delay; skipped", lo, hi)
            out.append(DecayResult(lo, hi, t0, kappa, math.nan, True, skipped=True))
            continue
        mask = (t >= t0 - eps) & (t <= hi + eps)
        if not np.any(mask):
            out.append(DecayResult(lo, hi, t0, kappa, math.nan, True, skipped=True))
            continue
        i0 = int(np.argmax(mask))
        V0 = trace.V[i0]
        bound = np.exp(-2.0 * kappa * (t[mask] - t[i0])) * V0
        Vs = trace.V[mask]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(bound > 0, Vs / bound, np.where(Vs <= 0, 0.0, np.inf))
        worst = float(np.max(ratio))
        out.append(DecayResult(lo, hi, float(t[i0]), kappa, worst, bool(worst <= 1.0 + tol)))
    return out


@dataclass(frozen=True)
class TrackingResult:
    start: float
    end: float
    r_e: float
    settled_max_error: float
    rate: float


def tracking_report(trace: TraceLog, windows, settle_fraction: float = 0.2) -> list[TrackingResult]:
    """Settled error and empirical decay rate of ``|y_x(t,0) - r|`` per window.

    The rate is minus the slope of a least-squares line through the log of
    the error envelope ``max_{s >= t} |err(s)|`` on ``[start + D, end]``,
    ignoring samples at round-off level.
    """
    out = []
    t = trace.t
    for lo, hi in windows:
        sel = (t >= lo) & (t <= hi)
        if not np.any(sel):
            continue
        ts, es = t[sel], np.abs(trace.err[sel])
        tail = ts >= hi - settle_fraction * (hi - lo)
        settled = float(np.max(es[tail])) if np.any(tail) else math.nan
        fit = ts >= lo + trace.D
        env = np.maximum.accumulate(es[fit][::-1])[::-1]
        scale = max(np.max(np.abs(trace.r[sel])), 1.0)
        ok = env > 1e-11 * scale
        rate = math.nan
        if np.count_nonzero(ok) > 10:
            slope = np.polyfit(ts[fit][ok], np.log(env[ok]), 1)[0]
            rate = float(-slope)
        out.append(TrackingResult(lo, hi, float(trace.r[sel][-1]), settled, rate))
    return out


# ------------------------------------------------------------ reference runs


REFERENCE_R = "0:30 const(0); 30:60 const(25) + sin(-25, 0.1*pi, pi/2, 30); 60:inf const(50)"
DISTURBANCE_D0 = "0:30 const(1); 30:40 smoothstep(1, 2, 30, 35) + const(1.25) + sin(-1.25, 0.2*pi, pi/2, 30); 40:inf const(2)"


def _section6_profile() -> ReactionProfile:
    return ReactionProfile.constant(1.25, 2.0 * math.pi)


def _section6_y0(x, L=2.0 * math.pi):
    return x / L * (1.0 - x / L)


def reference_scenario(**overrides) -> Scenario:
    """Time-varying reference under the constant disturbance ``d(t,x) = x``.

    ``r`` is 0 up to 30 s, oscillates inside [0, 50] until 60 s (a
    continuously differentiable stand-in for the unspecified waveform),
    then stays at 50.
    """
    kw = dict(
        profile=_section6_profile(),
        y0=_section6_y0,
        r=REFERENCE_R,
        d0=1.0,
        g=lambda x: np.asarray(x, dtype=float),
        name="reference",
    )
    kw.update(overrides)
    return Scenario(**kw)


def disturbance_scenario(**overrides) -> Scenario:
    """Constant reference 50 with ``d(t,x) = d0(t) x``.

    ``d0`` moves from 1 to 2 between 30 s and 40 s through a smooth step
    plus a raised-cosine bump peaking at 4.5 at 35 s.
    """
    kw = dict(
        profile=_section6_profile(),
        y0=_section6_y0,
        r=50.0,
        d0=DISTURBANCE_D0,
        g=lambda x: np.asarray(x, dtype=float),
        name="disturbance",
    )
    kw.update(overrides)
    return Scenario(**kw)
