"""Command line front end: ``rdpi {eig,certify,simulate,check}``.

Exit codes: 0 success, 1 invalid configuration or arguments, 2 numerical
failure, 3 an invariant suite failed.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .checks import FAULTS, SUITES, run_suites
from .config import BUNDLED, ConfigError, RunConfig, bundled_config, load_config
from .control import ControlError
from .model import ModelError, build_truncated_model, select_n
from .predictor import PredictorError
from .signals import SignalError
from .sim import (
    TRACE_COLUMNS,
    SimulationError,
    TraceLog,
    decay_report,
    design,
    phase_windows,
    simulate,
    tracking_report,
)
from .spectral import SpectralError, compute_basis, mode_coefficients

log = logging.getLogger("rdpi")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CHECK = 0, 1, 2, 3
_NUMERIC_ERRORS = (SpectralError, ModelError, ControlError, PredictorError, SimulationError, np.linalg.LinAlgError)


def write_csv(trace: TraceLog, path: Path) -> Path:
    """Trace table with a header row and 17 significant digits per value."""
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, trace.table(), fmt="%.17g", delimiter=",", header=",".join(TRACE_COLUMNS), comments="")
    return path


def write_svg(trace: TraceLog, out_dir: Path, stem: str) -> list[Path]:
    """Two line charts; any failure is logged and swallowed."""
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except Exception as exc:  # plotting is optional
        log.warning("SVG output skipped: matplotlib unavailable (%s)", exc)
        return []
    written = []
    try:
        fig, ax = plt.subplots(figsize=(7, 3.5))
        ax.plot(trace.t, trace.yx0, label="y_x(t,0)")
        ax.plot(trace.t, trace.r, "--", label="r(t)")
        ax.set_xlabel("t [s]")
        ax.legend()
        fig.tight_layout()
        p = out_dir / f"{stem}_output.svg"
        fig.savefig(p, format="svg")
        plt.close(fig)
        written.append(p)
        fig, ax = plt.subplots(figsize=(7, 3.5))
        ax.plot(trace.t, trace.u_delayed)
        ax.set_xlabel("t [s]")
        ax.set_ylabel("u(t - D)")
        fig.tight_layout()
        p = out_dir / f"{stem}_input.svg"
        fig.savefig(p, format="svg")
        plt.close(fig)
        written.append(p)
    except Exception as exc:
        log.warning("SVG output failed: %s", exc)
    return written


def _load(args) -> RunConfig:
    if args.config is None:
        return bundled_config("reference")
    if args.config in BUNDLED and not Path(args.config).exists():
        return bundled_config(args.config)
    return load_config(args.config)


def _fmt(values, spec=".10g") -> str:
    return "[" + ", ".join(format(float(v), spec) for v in values) + "]"


def cmd_eig(cfg: RunConfig, args) -> int:
    J = max(cfg.modes, 1)
    basis = compute_basis(cfg.profile, J, cfg.mesh_size)
    coeffs = mode_coefficients(basis)
    resid = coeffs.trace_residual(basis)
    print(f"profile: {cfg.profile.describe()}  method: {basis.method}  mesh: {basis.mesh.size}")
    head = ["j".rjust(3)] + [h.rjust(20) for h in ("lambda_j", "e_j'(0)", "e_j'(L)", "a_j", "b_j")]
    print(" ".join(head + ["trace resid".rjust(12)]))
    for j in range(J):
        print(
            f"{j + 1:>3} {basis.lambdas[j]:>20.12g} {basis.ep0[j]:>20.12g} {basis.epL[j]:>20.12g} "
            f"{coeffs.a[j]:>20.12g} {coeffs.b[j]:>20.12g} {resid[j]:>12.2e}"
        )
    try:
        print(f"n (nonnegative eigenvalues): {select_n(basis)}")
    except ModelError as exc:
        print(f"n: undetermined ({exc})")
    print(f"max trace-identity residual: {np.max(np.abs(resid)):.3e}")
    return EXIT_OK


def _certificate_lines(cfg: RunConfig) -> list[str]:
    basis = compute_basis(cfg.profile, max(cfg.modes, cfg.J_sim), cfg.mesh_size)
    coeffs = mode_coefficients(basis)
    model, tail = build_truncated_model(basis, coeffs, cfg.tail_tol)
    if len(cfg.poles) != model.n + 2:
        raise ConfigError([("control.poles", f"need {model.n + 2} poles for n={model.n}, got {len(cfg.poles)}")])
    from .control import build_certificate

    cert = build_certificate(model, basis, coeffs, cfg.D, cfg.poles)
    return [
        f"n = {model.n}   (state dimension {model.dim})",
        f"alpha = {model.alpha:.12g}   beta = {model.beta:.12g}   M_d = {model.Md:.12g}",
        f"tail: J = {tail.tail_J}, bounds alpha {tail.alpha_tail_bound:.2e}, beta {tail.beta_tail_bound:.2e}, "
        f"M_d {tail.Md_tail_bound:.2e} ({tail.extension})",
        f"K = {_fmt(cert.K)}",
        f"requested poles = {_fmt(sorted(cert.poles))}",
        f"achieved poles  = {_fmt(cert.achieved_poles)}",
        f"eig(P) = {_fmt(np.linalg.eigvalsh(cert.P))}",
        f"Lyapunov residual = {cert.lyapunov_residual:.3e}",
        f"gamma1 = {cert.gamma1:.6g}   gamma5 = {cert.gamma5:.6g}   gamma6 = {cert.gamma6:.6g}",
        f"M = {cert.M:.6g}   (bound {cert.M_bound:.6g})",
        f"kappa = {cert.kappa:.6g}",
    ]


def cmd_certify(cfg: RunConfig, args) -> int:
    print("\n".join(_certificate_lines(cfg)))
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, args) -> int:
    out_dir = Path(args.out) if args.out else cfg.out_dir
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".rdpi_write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError([("output.directory", f"cannot write to {out_dir}: {exc.strerror}")]) from None
    sc = cfg.scenario()
    stem = sc.name
    t0 = time.perf_counter()
    d = design(sc)
    try:
        trace = simulate(sc, d.cert, d.model, d.basis)
    except SimulationError as exc:
        if exc.partial is not None:
            p = write_csv(exc.partial, out_dir / f"{stem}_partial.csv")
            print(f"partial trace written to {p}", file=sys.stderr)
        raise
    elapsed = time.perf_counter() - t0
    csv_path = write_csv(trace, out_dir / f"{stem}.csv")
    lines = _certificate_lines(cfg)
    lines.append(f"simulated {sc.T:g} s with dt = {sc.dt:g} and {sc.J_sim} modes in {elapsed:.2f} s")
    lines.append(f"max |E1 Z - u| = {np.max(trace.identity_residual):.3e}   zeta drift = {trace.zeta_drift:.2e}")
    windows = phase_windows(sc, 5.0)
    for r in tracking_report(trace, windows):
        lines.append(
            f"phase [{r.start:g}, {r.end:g}]: r_e = {r.r_e:g}, settled error {r.settled_max_error:.4g}, rate {r.rate:.4g} 1/s"
        )
    for r in decay_report(trace, d.cert.kappa, windows):
        state = "skipped" if r.skipped else ("holds" if r.holds else "VIOLATED")
        lines.append(f"decay on [{r.start:g}, {r.end:g}] from t0 = {r.t0:g}: {state} (worst ratio {r.worst_ratio:.4f})")
    report = out_dir / f"{stem}_report.txt"
    report.write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    print(f"trace: {csv_path} ({len(trace)} rows)")
    if args.svg or "svg" in cfg.formats:
        for p in write_svg(trace, out_dir, stem):
            print(f"plot: {p}")
    return EXIT_OK


def cmd_check(cfg: RunConfig | None, args) -> int:
    scenarios = [cfg.scenario()] if cfg is not None else None
    names = args.suite or None
    results = run_suites(seed=args.seed, fault=args.fault, names=names, scenarios=scenarios)
    for res in results:
        print(f"[{'PASS' if res.passed else 'FAIL'}] {res.name} ({res.seconds:.2f} s)")
        for c in res.checks:
            print(f"    {'ok ' if c.passed else 'BAD'} {c.name}" + (f": {c.detail}" if c.detail else ""))
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} suites passed" + (f"; failed: {', '.join(failed)}" if failed else ""))
    return EXIT_CHECK if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rdpi", description="Predictor-based PI boundary control of a delayed reaction-diffusion plant.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help=f"INI file or a bundled name ({', '.join(BUNDLED)}); default: reference")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("eig", parents=[common], help="eigenvalues, boundary traces and mode coefficients")
    sub.add_parser("certify", parents=[common], help="feedback gain, Lyapunov matrix and decay constants")
    p = sub.add_parser("simulate", parents=[common], help="closed-loop run; writes the trace CSV")
    p.add_argument("--out", metavar="DIR", help="output directory (overrides [output] directory)")
    p.add_argument("--svg", action="store_true", help="also write SVG plots")
    p = sub.add_parser("check", parents=[common], help="run the invariant suites")
    p.add_argument("--seed", type=int, default=0, metavar="N", help="seed for randomized suites")
    p.add_argument("--fault", choices=FAULTS, help="inject a fault (testing the suites themselves)")
    p.add_argument("--suite", action="append", choices=list(SUITES), help="run only this suite (repeatable)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    commands = {"eig": cmd_eig, "certify": cmd_certify, "simulate": cmd_simulate, "check": cmd_check}
    try:
        if args.command == "check" and args.config is None:
            cfg = None
        else:
            cfg = _load(args)
        return commands[args.command](cfg, args)
    except (ConfigError, SignalError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
