"""Invariant suites behind ``rdpi check``.

Each suite is a function returning a :class:`SuiteResult` made of named
checks.  Randomized suites draw from ``numpy.random.default_rng(seed)``.

A *fault* deliberately corrupts one input so that a specific suite must
fail; it exists to prove that the suites can fail at all.

``flip-b``
    negates every ``b_j`` before the trace identity is evaluated.
``zero-kernel``
    drops the matrix exponential from the predictor weights (uses ``B``
    for every node), which the Artstein suite must notice.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .control import (
    augmented_kalman_equivalence,
    controllability_determinant,
    coupling_determinant,
    kalman_rank,
)
from .model import build_truncated_model, model_from_blocks, select_n
from .predictor import HistoryBuffer, PredictorState, artstein_transform
from .sim import (
    Scenario,
    compute_equilibrium,
    decay_report,
    design,
    disturbance_scenario,
    phase_windows,
    reference_scenario,
    simulate,
    tracking_report,
)
from .spectral import ModeCoefficients, ReactionProfile, compute_basis, mode_coefficients

__all__ = ["Check", "SuiteResult", "FAULTS", "SUITES", "run_suites"]

FAULTS = ("flip-b", "zero-kernel")


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class SuiteResult:
    name: str
    checks: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name: str, passed: bool, detail: str = "") -> None:
        self.checks.append(Check(name, bool(passed), detail))


def _section6_basis(J: int = 16, method: str = "auto"):
    return compute_basis(ReactionProfile.constant(1.25, 2.0 * math.pi), J, method=method)


def suite_spectral(rng, fault=None) -> SuiteResult:
    res = SuiteResult("spectral")
    basis = _section6_basis(20)
    err = np.max(np.abs(basis.lambdas[:3] - [1.0, 0.25, -1.0]))
    res.add("eigenvalues 1, 0.25, -1 (analytic)", err < 1e-10, f"max error {err:.2e}")
    num = _section6_basis(4, method="numeric")
    err = np.max(np.abs(num.lambdas[:3] - [1.0, 0.25, -1.0]))
    res.add("eigenvalues 1, 0.25, -1 (finite differences)", err < 1e-6, f"max error {err:.2e}")
    lap = compute_basis(ReactionProfile.constant(0.0, math.pi), 2)
    err = max(np.max(np.abs(lap.lambdas + [1.0, 4.0])), np.max(np.abs(lap.ep0 - math.sqrt(2 / math.pi) * np.array([1, 2]))))
    res.add("pure Laplacian on (0, pi)", err < 1e-10, f"max error {err:.2e}")
    gram = np.max(np.abs(basis.gram() - np.eye(basis.J)))
    res.add("orthonormality", gram < 1e-8, f"max Gram deviation {gram:.2e}")
    ratio = basis.ep0[19] / (math.sqrt(2 / basis.L) * math.sqrt(abs(basis.lambdas[19])))
    res.add("trace asymptotics at j = 20", abs(ratio - 1) < 0.05, f"ratio {ratio:.4f}")
    coeffs = mode_coefficients(basis)
    if fault == "flip-b":
        coeffs = ModeCoefficients(coeffs.a, -coeffs.b)
    tr = np.max(np.abs(coeffs.trace_residual(basis)[:10]))
    res.add("a_j + lambda_j b_j = -e_j'(L), j <= 10", tr < 1e-8, f"max residual {tr:.2e}")
    # sampled profile against a refined finite-difference oracle
    samp = compute_basis(ReactionProfile.from_function(lambda x: x, 1.0), 4, 801)
    fine = compute_basis(ReactionProfile.from_function(lambda x: x, 1.0), 4, 1601)
    err = np.max(np.abs(samp.lambdas - fine.lambdas))
    res.add("sampled c(x) = x against 2x mesh", err < 1e-6, f"max difference {err:.2e}")
    return res


def suite_model(rng, fault=None) -> SuiteResult:
    res = SuiteResult("model")
    basis = _section6_basis()
    model, tail = build_truncated_model(basis, mode_coefficients(basis))
    res.add("n = 2", model.n == 2, f"n = {model.n}")
    res.add("first row of A zero, B[0] = 1", not np.any(model.A[0]) and model.B[0] == 1.0)
    res.add("last column of A zero", not np.any(model.A[:, -1]))
    spec = np.sort(np.linalg.eigvals(model.A1).real)
    err = np.max(np.abs(spec - [0.0, 0.25, 1.0]))
    res.add("spectrum of A1 = {0, 0.25, 1}", err < 1e-12, f"max error {err:.2e}")
    res.add("tail remainders below tolerance", tail.max_bound() < 1e-8, f"max bound {tail.max_bound():.2e}")
    res.add("M_d >= sqrt 2", model.Md >= math.sqrt(2.0) - 1e-15, f"M_d = {model.Md:.6g}")
    return res


def suite_augmented(rng, fault=None, trials: int = 200) -> SuiteResult:
    res = SuiteResult("augmented rank equivalence")
    bad = 0
    both_true = 0
    for k in range(trials):
        n = int(rng.integers(1, 6))
        m = int(rng.integers(1, 3))
        p = int(rng.integers(1, 4))
        A = rng.standard_normal((n, n))
        B = rng.standard_normal((n, m))
        C = rng.standard_normal((p, n))
        D = rng.standard_normal((p, m))
        # a third of the instances are made rank deficient on purpose
        kind = k % 3
        if kind == 1:
            C[:] = 0.0
            D[:] = 0.0
        elif kind == 2 and n > 1:
            B[:] = 0.0
            B[0] = 1.0
            A = rng.standard_normal() * np.eye(n)
        lhs, rhs = augmented_kalman_equivalence(A, B, C, D)
        bad += lhs != rhs
        both_true += lhs and rhs
    res.add(f"{trials} random instances", bad == 0, f"{bad} violations, {both_true} controllable")
    basis = _section6_basis()
    model, _ = build_truncated_model(basis, mode_coefficients(basis))
    lhs, rhs = augmented_kalman_equivalence(model.A1, model.B1, model.L1[None, :], np.array([[model.beta]]))
    res.add("truncated model blocks", lhs and rhs, f"lhs={lhs}, rhs={rhs}")
    res.add("truncated pair controllable", kalman_rank(model.A, model.B))
    return res


def suite_determinant(rng, fault=None, trials: int = 50) -> SuiteResult:
    res = SuiteResult("determinant identity")
    basis = _section6_basis()
    model, _ = build_truncated_model(basis, mode_coefficients(basis))
    direct, formula = controllability_determinant(model, basis)
    rel = abs(direct - formula) / abs(formula)
    res.add("truncated model", rel < 1e-8 and formula != 0, f"{direct:.10g} vs {formula:.10g}")
    worst = 0.0
    for _ in range(trials):
        n = int(rng.integers(1, 6))
        lam = np.sort(rng.uniform(-2.0, 2.0, n))[::-1]
        while n > 1 and np.min(-np.diff(lam)) < 0.1:
            lam = np.sort(rng.uniform(-2.0, 2.0, n))[::-1]
        m = model_from_blocks(lam, rng.standard_normal(n), rng.standard_normal(n), rng.standard_normal(n), 0.3, 0.1)
        d, f = controllability_determinant(m)
        worst = max(worst, abs(d - f) / max(abs(f), 1e-300))
    res.add(f"{trials} random diagonal systems", worst < 1e-8, f"worst relative gap {worst:.2e}")
    d, f, case = coupling_determinant(model)
    res.add(f"coupling determinant ({case})", abs(d - f) <= 1e-8 * abs(f), f"{d:.10g} vs {f:.10g}")
    return res


def suite_artstein(rng, fault=None) -> SuiteResult:
    res = SuiteResult("artstein")
    D, dt = 1.0, 0.01
    lam = np.array([-0.7, 0.4, 1.3])
    A = np.diag(lam)
    B = rng.standard_normal(3)
    K = np.zeros(3)
    pred = PredictorState.build(A, B, K, D, dt)
    if fault == "zero-kernel":
        pred = replace(pred, weights=np.tile(B, (pred.N + 1, 1)))
    vbar = 1.7
    buf = HistoryBuffer(D, dt)
    for _ in range(pred.N + 1):
        buf.push(vbar)
    X = rng.standard_normal(3)
    Z = artstein_transform(X, buf, pred)
    exact = X + (1.0 - np.exp(-lam * D)) / lam * B * vbar
    err = np.max(np.abs(Z - exact))
    # trapezoid on an exponential: error ~ D dt^2 max|lambda|^2 e^{|lambda| D} / 12
    res.add("constant history, diagonal A", err < 1e-4, f"max error {err:.2e}")
    zero = HistoryBuffer(D, dt)
    for _ in range(pred.N + 1):
        zero.push(0.0)
    res.add("zero history gives Z = X", np.array_equal(artstein_transform(X, zero, pred), X))
    pred0 = PredictorState.build(np.zeros((2, 2)), [1.0, -2.0], np.zeros(2), D, dt)
    Z0 = artstein_transform(np.zeros(2), buf, pred0)
    err0 = np.max(np.abs(Z0 - D * vbar * np.array([1.0, -2.0])))
    res.add("A = 0 gives Z = X + D B v", err0 < 1e-12, f"max error {err0:.2e}")
    return res


def suite_equilibrium(rng, fault=None) -> SuiteResult:
    res = SuiteResult("equilibrium")
    sc = reference_scenario()
    d = design(sc)
    coeffs = d.coeffs
    g = lambda x: np.asarray(x, dtype=float)
    eq = compute_equilibrium(50.0, g, d.cert, d.model, d.basis, modes=sc.J_sim, coeffs=coeffs)
    r1 = np.max(np.abs(eq.AK @ eq.Ze + eq.Gamma))
    res.add("A_K Z_e + Gamma_e = 0", r1 < 1e-10, f"residual {r1:.2e}")
    r2 = np.max(np.abs(eq.modal_residual(d.basis, coeffs)[d.model.n :]))
    res.add("stationary modal equations", r2 < 1e-10, f"max residual {r2:.2e}")
    s = eq.slope_at_zero(d.basis, sc.J_sim)
    res.add("y_e'(0) = 50 with 10 modes", abs(s - 50) < 5e-2, f"y_e'(0) = {s:.10g}")
    full = compute_equilibrium(50.0, g, d.cert, d.model, d.basis, coeffs=coeffs)
    s_full = full.slope_at_zero(d.basis, sc.J_sim, d_e=g)
    res.add("y_e'(0) = 50 for the design model", abs(s_full - 50) < 1e-6, f"y_e'(0) = {s_full:.10g}")
    z = compute_equilibrium(0.0, np.zeros_like(d.basis.mesh), d.cert, d.model, d.basis)
    res.add("zero data gives zero equilibrium", not np.any(z.Ze) and not np.any(z.ye))
    return res


def suite_closed_loop(rng, fault=None, scenarios=None) -> SuiteResult:
    res = SuiteResult("closed loop")
    for sc in scenarios or (reference_scenario(), disturbance_scenario()):
        d = design(sc)
        tr = simulate(sc, d.cert, d.model, d.basis)
        res.add(f"{sc.name}: zeta drift", tr.zeta_drift < 1e-8, f"{tr.zeta_drift:.2e}")
        resid = float(np.max(tr.identity_residual))
        res.add(f"{sc.name}: |E1 Z - u|", resid < 1e-4, f"max {resid:.2e}")
        windows = phase_windows(sc, 5.0)
        for r in decay_report(tr, d.cert.kappa, windows):
            if not r.skipped:
                res.add(
                    f"{sc.name}: V decay on [{r.start:g}, {r.end:g}]",
                    r.holds,
                    f"worst ratio {r.worst_ratio:.4f}",
                )
        reports = tracking_report(tr, windows)
        if reports:
            last = reports[-1]
            tol = max(0.01 * abs(last.r_e), 1e-6)
            res.add(
                f"{sc.name}: settled error on [{last.start:g}, {last.end:g}]",
                last.settled_max_error < tol,
                f"{last.settled_max_error:.3g} (limit {tol:.3g})",
            )
    return res


SUITES = {
    "spectral": suite_spectral,
    "model": suite_model,
    "augmented": suite_augmented,
    "determinant": suite_determinant,
    "artstein": suite_artstein,
    "equilibrium": suite_equilibrium,
    "closed-loop": suite_closed_loop,
}


def run_suites(seed: int = 0, fault: str | None = None, names=None, scenarios: list[Scenario] | None = None) -> list[SuiteResult]:
    if fault is not None and fault not in FAULTS:
        raise ValueError(f"unknown fault {fault!r}; choose from {', '.join(FAULTS)}")
    rng = np.random.default_rng(seed)
    out = []
    for name in names or SUITES:
        fn = SUITES[name]
        t0 = time.perf_counter()
        if name == "closed-loop":
            result = fn(rng, fault, scenarios=scenarios)
        else:
            result = fn(rng, fault)
        result.seconds = time.perf_counter() - t0
        out.append(result)
    return out
