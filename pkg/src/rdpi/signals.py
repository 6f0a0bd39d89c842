"""Piecewise time signals and safe spatial expressions.

A :class:`PiecewiseSignal` is a sorted list of segments ``[start, end)``;
each segment is a sum of terms drawn from a small library (constants,
ramps, sinusoids, cubic smooth steps), and every term carries its exact
time derivative.

Text form, used by configuration files::

    0:30 const(1); 30:40 smoothstep(1, 2, 30, 35) + const(1.25) + sin(-1.25, 0.2*pi, pi/2, 30); 40:inf const(2)

Spatial profiles such as ``x/L*(1 - x/L)`` are parsed by
:func:`compile_spatial`, which accepts arithmetic on ``x``, ``L``, ``pi``
and a handful of numpy functions and nothing else.
"""

from __future__ import annotations

import ast
import math
import re
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SignalError",
    "Const",
    "Ramp",
    "Sinusoid",
    "SmoothStep",
    "Segment",
    "PiecewiseSignal",
    "parse_signal",
    "compile_spatial",
    "eval_number",
]


class SignalError(ValueError):
    pass


@dataclass(frozen=True)
class Const:
    value: float

    def __call__(self, t):
        return np.full(np.shape(t), self.value) if np.ndim(t) else self.value

    def derivative(self, t):
        return np.zeros(np.shape(t)) if np.ndim(t) else 0.0


@dataclass(frozen=True)
class Ramp:
    """``slope * (t - t0)``."""

    slope: float
    t0: float = 0.0

    def __call__(self, t):
        return self.slope * (np.asarray(t, dtype=float) - self.t0) if np.ndim(t) else self.slope * (t - self.t0)

    def derivative(self, t):
        return np.full(np.shape(t), self.slope) if np.ndim(t) else self.slope


@dataclass(frozen=True)
class Sinusoid:
    """``amp * sin(omega * (t - t0) + phase)``."""

    amp: float
    omega: float
    phase: float = 0.0
    t0: float = 0.0

    def __call__(self, t):
        return self.amp * np.sin(self.omega * (np.asarray(t, dtype=float) - self.t0) + self.phase)

    def derivative(self, t):
        return self.amp * self.omega * np.cos(self.omega * (np.asarray(t, dtype=float) - self.t0) + self.phase)


@dataclass(frozen=True)
class SmoothStep:
    """Cubic ``3s^2 - 2s^3`` transition from ``a`` (before ``ta``) to ``b`` (after ``tb``)."""

    a: float
    b: float
    ta: float
    tb: float

    def __post_init__(self):
        if not self.tb > self.ta:
            raise SignalError("smoothstep needs ta < tb")

    def _s(self, t):
        return np.clip((np.asarray(t, dtype=float) - self.ta) / (self.tb - self.ta), 0.0, 1.0)

    def __call__(self, t):
        s = self._s(t)
        return self.a + (self.b - self.a) * s * s * (3.0 - 2.0 * s)

    def derivative(self, t):
        s = self._s(t)
        return (self.b - self.a) * 6.0 * s * (1.0 - s) / (self.tb - self.ta)


_TERM_TYPES = {
    "const": (Const, 1, 1),
    "ramp": (Ramp, 1, 2),
    "sin": (Sinusoid, 2, 4),
    "smoothstep": (SmoothStep, 4, 4),
}


@dataclass(frozen=True)
class Segment:
    start: float
    end: float
    terms: tuple

    def value(self, t):
        return sum((term(t) for term in self.terms), 0.0)

    def derivative(self, t):
        return sum((term.derivative(t) for term in self.terms), 0.0)


class PiecewiseSignal:
    """Scalar signal of time defined segment by segment.

    Segments must tile ``[0, inf)`` without gaps.  At a breakpoint the
    right segment is used unless ``left=True``.
    """

    def __init__(self, segments):
        segs = sorted(segments, key=lambda s: s.start)
        if not segs:
            raise SignalError("signal has no segments")
        if segs[0].start > 0:
            raise SignalError("signal must start at t = 0")
        for prev, nxt in zip(segs, segs[1:]):
            if not np.isclose(prev.end, nxt.start, rtol=0, atol=1e-12):
                raise SignalError(f"segments leave a gap or overlap at t = {prev.end:g}")
        if np.isfinite(segs[-1].end):
            raise SignalError("last segment must extend to inf")
        self.segments = tuple(segs)
        self._starts = np.array([s.start for s in segs])

    @classmethod
    def constant(cls, value: float) -> "PiecewiseSignal":
        return cls([Segment(0.0, math.inf, (Const(float(value)),))])

    def _index(self, t: float, left: bool) -> int:
        side = "left" if left else "right"
        return max(int(np.searchsorted(self._starts, t, side=side)) - 1, 0)

    def __call__(self, t: float, left: bool = False) -> float:
        return float(self.segments[self._index(t, left)].value(t))

    def derivative(self, t: float, left: bool = False) -> float:
        return float(self.segments[self._index(t, left)].derivative(t))

    def sample(self, times) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        out = np.empty(times.shape)
        idx = np.clip(np.searchsorted(self._starts, times, side="right") - 1, 0, None)
        for k, seg in enumerate(self.segments):
            mask = idx == k
            if np.any(mask):
                out[mask] = seg.value(times[mask])
        return out

    def breakpoints(self) -> list[float]:
        return [s.start for s in self.segments[1:]]

    def constant_windows(self, T: float) -> list[tuple[float, float, float]]:
        """``(start, end, value)`` for segments made only of constants and
        settled smooth steps, clipped to ``[0, T]``."""
        out = []
        for s in self.segments:
            start, end = s.start, min(s.end, T)
            if end <= start:
                continue
            lo = start
            ok = True
            for term in s.terms:
                if isinstance(term, Const):
                    continue
                if isinstance(term, SmoothStep):
                    lo = max(lo, term.tb)
                    continue
                if isinstance(term, (Ramp, Sinusoid)) and (
                    getattr(term, "slope", 1.0) == 0.0 or getattr(term, "amp", 1.0) == 0.0
                ):
                    continue
                ok = False
            if ok and end > lo:
                out.append((lo, end, float(s.value(lo))))
        return _merge_windows(out)

    def __repr__(self) -> str:
        return f"PiecewiseSignal({len(self.segments)} segments)"


def _merge_windows(windows):
    merged = []
    for w in windows:
        if merged and np.isclose(merged[-1][1], w[0]) and np.isclose(merged[-1][2], w[2]):
            merged[-1] = (merged[-1][0], w[1], merged[-1][2])
        else:
            merged.append(w)
    return merged


# ---------------------------------------------------------------- parsing

_NUM_NAMES = {"pi": math.pi, "e": math.e, "inf": math.inf}
_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "sqrt": np.sqrt,
    "tanh": np.tanh,
    "abs": np.abs,
    "log": np.log,
}
_BINOPS = {
    ast.Add: lambda a, b: a + b,
    ast.Sub: lambda a, b: a - b,
    ast.Mult: lambda a, b: a * b,
    ast.Div: lambda a, b: a / b,
    ast.Pow: lambda a, b: a**b,
}


def _compile(node, names: dict):
    """Turn a whitelisted AST into a closure of the variables in ``names``."""
    if isinstance(node, ast.Expression):
        return _compile(node.body, names)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        v = float(node.value)
        return lambda env: v
    if isinstance(node, ast.Name):
        if node.id in names:
            key = node.id
            return lambda env: env[key]
        if node.id in _NUM_NAMES:
            v = _NUM_NAMES[node.id]
            return lambda env: v
        raise SignalError(f"unknown name {node.id!r}")
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        op = _BINOPS[type(node.op)]
        lhs, rhs = _compile(node.left, names), _compile(node.right, names)
        return lambda env: op(lhs(env), rhs(env))
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        inner = _compile(node.operand, names)
        sign = -1.0 if isinstance(node.op, ast.USub) else 1.0
        return lambda env: sign * inner(env)
    if (
        isinstance(node, ast.Call)
        and isinstance(node.func, ast.Name)
        and node.func.id in _FUNCS
        and len(node.args) == 1
        and not node.keywords
    ):
        fn = _FUNCS[node.func.id]
        arg = _compile(node.args[0], names)
        return lambda env: fn(arg(env))
    raise SignalError(f"unsupported expression element: {ast.dump(node)[:60]}")


def _parse_expr(text: str) -> ast.Expression:
    try:
        return ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise SignalError(f"cannot parse expression {text!r}: {exc.msg}") from None


def eval_number(text: str) -> float:
    """Evaluate a numeric literal expression such as ``2*pi`` or ``-1.5e-3``."""
    value = _compile(_parse_expr(str(text)), {})({})
    return float(value)


def compile_spatial(text: str, L: float):
    """Return ``f(x)`` for an expression in ``x`` (and the constant ``L``).

    The result always broadcasts to the shape of ``x``.
    """
    fn = _compile(_parse_expr(text), {"x": None, "L": None})
    L = float(L)

    def f(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(fn({"x": x, "L": L}), dtype=float), x.shape).copy()

    f.source = text.strip()
    return f


_TERM_RE = re.compile(r"^\s*([a-z]+)\s*\((.*)\)\s*$")


def _split_top(text: str, sep: str) -> list[str]:
    """Split on ``sep`` outside parentheses."""
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == sep and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return parts


def _parse_term(text: str):
    m = _TERM_RE.match(text)
    if not m:
        raise SignalError(f"cannot parse term {text.strip()!r}")
    kind, body = m.group(1), m.group(2)
    if kind not in _TERM_TYPES:
        raise SignalError(f"unknown term {kind!r} (known: {', '.join(_TERM_TYPES)})")
    cls, lo, hi = _TERM_TYPES[kind]
    args = [eval_number(a) for a in _split_top(body, ",")] if body.strip() else []
    if not lo <= len(args) <= hi:
        raise SignalError(f"{kind} takes {lo}..{hi} arguments, got {len(args)}")
    return cls(*args)


def parse_signal(text: str) -> PiecewiseSignal:
    """Parse ``start:end term + term; start:end ...`` (a bare number is a constant)."""
    text = str(text).strip()
    if not text:
        raise SignalError("empty signal specification")
    try:
        return PiecewiseSignal.constant(eval_number(text))
    except SignalError:
        pass
    segments = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        head, _, body = chunk.partition(" ")
        if ":" not in head:
            raise SignalError(f"segment {chunk!r} lacks a 'start:end' range")
        a, b = head.split(":", 1)
        start, end = eval_number(a), eval_number(b)
        if not end > start:
            raise SignalError(f"segment range {head!r} is empty")
        terms = tuple(_parse_term(t) for t in _split_top(body, "+") if t.strip())
        if not terms:
            raise SignalError(f"segment {head!r} has no terms")
        segments.append(Segment(start, end, terms))
    return PiecewiseSignal(segments)
