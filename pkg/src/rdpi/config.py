"""INI scenario files.

Layout::

    [plant]
    c = 1.25                 ; number, or an expression in x (sampled profile)
    L = 2*pi
    mesh_size = 2001         ; optional
    modes = 16               ; optional, eigenpairs to compute

    [control]
    D = 1
    poles = -0.5, -0.6, -0.7, -0.8
    tail_tol = 1e-8          ; optional

    [simulation]
    J_sim = 10
    dt = 0.005
    T = 90
    y0 = x/L*(1 - x/L)
    z0 = 0

    [signals]
    r = 0:30 const(0); 30:inf const(50)
    d0 = 1
    g = x

    [output]
    directory = out
    formats = csv, svg

Every field is checked before anything is computed.  Problems are
collected and raised together as a :class:`ConfigError` whose message
names each offending ``section.key``.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .predictor import PredictorError, steps_per_delay
from .signals import PiecewiseSignal, SignalError, compile_spatial, eval_number, parse_signal
from .sim import Scenario
from .spectral import DEFAULT_MESH_SIZE, ReactionProfile

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config", "bundled_config", "BUNDLED"]

BUNDLED = ("reference", "disturbance")
_SECTIONS = {
    "plant": {"c", "L", "mesh_size", "modes"},
    "control": {"D", "poles", "tail_tol"},
    "simulation": {"J_sim", "dt", "T", "y0", "z0"},
    "signals": {"r", "d0", "g"},
    "output": {"directory", "formats"},
}
_REQUIRED = {"plant": {"c", "L"}, "control": {"D", "poles"}}
_FORMATS = {"csv", "svg"}


class ConfigError(ValueError):
    """Invalid configuration; ``problems`` lists ``(field, message)`` pairs."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(f"{f}: {m}" for f, m in self.problems))


@dataclass
class RunConfig:
    profile: ReactionProfile
    c_text: str
    D: float
    poles: tuple
    tail_tol: float = 1e-8
    mesh_size: int = DEFAULT_MESH_SIZE
    modes: int = 16
    J_sim: int = 10
    dt: float = 0.005
    T: float = 90.0
    y0_text: str = "0"
    z0: float = 0.0
    r_text: str = "0"
    d0_text: str = "0"
    g_text: str = "0"
    out_dir: Path = Path("out")
    formats: tuple = ("csv",)
    source: str = "<string>"
    extras: dict = field(default_factory=dict)

    @property
    def L(self) -> float:
        return self.profile.L

    def scenario(self, name: str | None = None) -> Scenario:
        L = self.L
        return Scenario(
            profile=self.profile,
            D=self.D,
            poles=self.poles,
            J_sim=self.J_sim,
            dt=self.dt,
            T=self.T,
            y0=compile_spatial(self.y0_text, L),
            z0=self.z0,
            r=parse_signal(self.r_text),
            d0=parse_signal(self.d0_text),
            g=compile_spatial(self.g_text, L),
            tail_tol=self.tail_tol,
            mesh_size=self.mesh_size,
            name=name or Path(self.source).stem,
        )


class _Reader:
    def __init__(self, cp: configparser.ConfigParser):
        self.cp = cp
        self.problems: list[tuple[str, str]] = []

    def raw(self, sec: str, key: str, default=None):
        if self.cp.has_option(sec, key):
            return self.cp.get(sec, key).strip()
        if key in _REQUIRED.get(sec, ()):
            self.problems.append((f"{sec}.{key}", "required field is missing"))
        return default

    def number(self, sec, key, default=None, *, lo=None, hi=None, strict_lo=False, integer=False):
        text = self.raw(sec, key)
        if text is None:
            return default
        name = f"{sec}.{key}"
        try:
            value = eval_number(text)
        except (SignalError, ZeroDivisionError, OverflowError) as exc:
            self.problems.append((name, f"not a number ({exc})"))
            return default
        if not math.isfinite(value):
            self.problems.append((name, "must be finite"))
            return default
        if integer:
            if value != int(value):
                self.problems.append((name, "must be an integer"))
                return default
            value = int(value)
        if lo is not None and (value <= lo if strict_lo else value < lo):
            self.problems.append((name, f"must be {'>' if strict_lo else '>='} {lo:g}"))
            return default
        if hi is not None and value > hi:
            self.problems.append((name, f"must be <= {hi:g}"))
            return default
        return value


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    """Validate an INI document and return the run configuration."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError([("file", str(exc).splitlines()[0])]) from None
    rd = _Reader(cp)
    problems = rd.problems

    for sec in cp.sections():
        if sec not in _SECTIONS:
            problems.append((sec, "unknown section"))
            continue
        for key in cp.options(sec):
            if key not in _SECTIONS[sec]:
                problems.append((f"{sec}.{key}", "unknown key"))
    for sec in _REQUIRED:
        if not cp.has_section(sec):
            problems.append((sec, "required section is missing"))
            cp.add_section(sec)
    for sec in _SECTIONS:
        if not cp.has_section(sec):
            cp.add_section(sec)

    L = rd.number("plant", "L", 1.0, lo=0.0, strict_lo=True)
    mesh_size = rd.number("plant", "mesh_size", DEFAULT_MESH_SIZE, lo=9, integer=True)
    modes = rd.number("plant", "modes", 16, lo=1, integer=True)
    c_text = rd.raw("plant", "c", "0")
    profile = None
    try:
        profile = ReactionProfile.constant(eval_number(c_text), L)
    except SignalError:
        try:
            fn = compile_spatial(c_text, L)
            profile = ReactionProfile.from_function(fn, L, mesh_size)
        except (SignalError, ValueError, ZeroDivisionError) as exc:
            problems.append(("plant.c", f"invalid profile ({exc})"))
    except ValueError as exc:
        problems.append(("plant.c", str(exc)))

    D = rd.number("control", "D", 1.0, lo=0.0, strict_lo=True)
    tail_tol = rd.number("control", "tail_tol", 1e-8, lo=0.0, strict_lo=True, hi=1e-2)
    poles: tuple = ()
    ptxt = rd.raw("control", "poles")
    if ptxt is not None:
        try:
            poles = tuple(eval_number(p) for p in ptxt.split(",") if p.strip())
        except SignalError as exc:
            problems.append(("control.poles", f"not a list of numbers ({exc})"))
        else:
            if not poles:
                problems.append(("control.poles", "empty pole list"))
            elif any(not (math.isfinite(p) and p < 0) for p in poles):
                problems.append(("control.poles", "every pole must be real, finite and negative"))
            elif len(set(poles)) != len(poles):
                problems.append(("control.poles", "poles must be distinct"))

    J_sim = rd.number("simulation", "J_sim", 10, lo=1, integer=True)
    dt = rd.number("simulation", "dt", 0.005, lo=0.0, strict_lo=True)
    T = rd.number("simulation", "T", 90.0, lo=0.0, strict_lo=True)
    z0 = rd.number("simulation", "z0", 0.0)
    if dt and D:
        try:
            steps_per_delay(D, dt)
        except PredictorError as exc:
            problems.append(("simulation.dt", str(exc)))
    if T is not None and D is not None and not T > D:
        problems.append(("simulation.T", f"horizon must exceed the delay D={D:g}"))
    if T and dt and abs(T / dt - round(T / dt)) > 1e-9 * T / dt:
        problems.append(("simulation.dt", "must divide the horizon T"))
    if J_sim is not None and modes is not None and J_sim > modes:
        modes = J_sim
    if mesh_size is not None and modes is not None and mesh_size < 8 * modes:
        problems.append(("plant.mesh_size", f"must be at least 8 x modes = {8 * modes}"))

    texts = {}
    x = np.linspace(0.0, L, 11)
    for sec, key, default in (("simulation", "y0", "0"), ("signals", "g", "0")):
        t = rd.raw(sec, key, default)
        texts[key] = t
        try:
            with np.errstate(all="ignore"):
                vals = compile_spatial(t, L)(x)
            if not np.all(np.isfinite(vals)):
                problems.append((f"{sec}.{key}", "not finite on [0, L]"))
        except (SignalError, ZeroDivisionError) as exc:
            problems.append((f"{sec}.{key}", str(exc)))
    for key in ("r", "d0"):
        t = rd.raw("signals", key, "0")
        texts[key] = t
        try:
            sig: PiecewiseSignal = parse_signal(t)
            if not all(math.isfinite(sig(s)) for s in (0.0, *sig.breakpoints())):
                problems.append((f"signals.{key}", "not finite"))
        except (SignalError, ZeroDivisionError) as exc:
            problems.append((f"signals.{key}", str(exc)))

    out_dir = Path(rd.raw("output", "directory", "out"))
    ftxt = rd.raw("output", "formats", "csv")
    formats = tuple(f.strip().lower() for f in ftxt.split(",") if f.strip())
    bad = [f for f in formats if f not in _FORMATS]
    if bad:
        problems.append(("output.formats", f"unknown format(s) {', '.join(bad)}; choose from csv, svg"))

    if problems:
        raise ConfigError(problems)
    return RunConfig(
        profile=profile,
        c_text=c_text,
        D=D,
        poles=poles,
        tail_tol=tail_tol,
        mesh_size=mesh_size,
        modes=modes,
        J_sim=J_sim,
        dt=dt,
        T=T,
        y0_text=texts["y0"],
        z0=z0,
        r_text=texts["r"],
        d0_text=texts["d0"],
        g_text=texts["g"],
        out_dir=out_dir,
        formats=formats,
        source=source,
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([("file", f"cannot read {path}: {exc.strerror}")]) from None
    return parse_config(text, source=str(path))


def bundled_config(name: str = "reference") -> RunConfig:
    """One of the configurations shipped with the package."""
    if name not in BUNDLED:
        raise ConfigError([("config", f"no bundled config {name!r}; choose from {', '.join(BUNDLED)}")])
    text = resources.files("rdpi.configs").joinpath(f"{name}.ini").read_text()
    return parse_config(text, source=f"{name}.ini")
