"""Input history, Artstein transformation and predictor feedback.

The auxiliary input ``v`` is represented by its values at the step nodes
``t_k = k dt`` for ``k >= 0`` and vanishes for negative times.  Between nodes
it is read as the linear interpolant, so ``v`` has a single jump, at
``t = 0``, from ``0`` to ``v(0) = K Z(0)``.  The trapezoid weights below
account for that jump so that the integral stays second-order accurate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .control import expm

__all__ = [
    "PredictorError",
    "HistoryBuffer",
    "PredictorState",
    "steps_per_delay",
    "artstein_transform",
    "feedback",
    "first_component_identity",
]


class PredictorError(ValueError):
    pass


def steps_per_delay(D: float, dt: float, rtol: float = 1e-9) -> int:
    """``D / dt`` as an integer, rejecting steps that do not divide the delay."""
    if not (D > 0 and dt > 0):
        raise PredictorError("delay and step must be positive")
    ratio = D / dt
    N = int(round(ratio))
    if N < 1 or abs(ratio - N) > rtol * max(1.0, ratio):
        raise PredictorError(f"dt={dt!r} does not divide D={D!r} (D/dt = {ratio!r})")
    return N


class HistoryBuffer:
    """Samples of ``v`` on the window ``[t - D, t]``.

    Storage is a double-length array: every sample is written twice, ``N+1``
    slots apart, so the current window is always one contiguous slice with
    no copying.  Samples standing for negative times are zero.
    """

    def __init__(self, D: float, dt: float):
        self.N = steps_per_delay(D, dt)
        self.D = float(D)
        self.dt = float(dt)
        self._size = self.N + 1
        self._data = np.zeros(2 * self._size)
        self._head = 0  # slot that the next push fills
        self.step = -1  # index k of the newest sample, t = k dt

    @property
    def t(self) -> float:
        return self.step * self.dt

    def __len__(self) -> int:
        return self._size

    def push(self, value: float) -> None:
        """Append ``v(t + dt)``; the oldest sample drops out."""
        value = float(value)
        self._data[self._head] = value
        self._data[self._head + self._size] = value
        self._head = (self._head + 1) % self._size
        self.step += 1

    def set_latest(self, value: float) -> None:
        """Overwrite the newest sample (used once the control at ``t`` is known)."""
        if self.step < 0:
            raise PredictorError("buffer is empty")
        slot = (self._head - 1) % self._size
        self._data[slot] = float(value)
        self._data[slot + self._size] = float(value)

    def window(self) -> np.ndarray:
        """``v(t - D + k dt)`` for ``k = 0..N`` (oldest first)."""
        return self._data[self._head : self._head + self._size]

    def delayed(self, lag_steps: int) -> float:
        """``v(t - lag_steps dt)`` for ``0 <= lag_steps <= N``."""
        if not 0 <= lag_steps <= self.N:
            raise PredictorError("lag outside the stored window")
        return float(self.window()[self.N - lag_steps])


@dataclass(frozen=True, eq=False)
class PredictorState:
    """Precomputed kernel ``exp(A (t - D - tau)) B`` at the window nodes.

    Row ``k`` of ``weights`` belongs to ``tau = t - D + k dt``; it equals
    ``exp(-k dt A) B``, so row 0 is ``B`` and row ``N`` is ``exp(-D A) B``.
    """

    K: np.ndarray
    weights: np.ndarray = field(repr=False)
    D: float
    dt: float
    N: int

    @classmethod
    def build(cls, A, B, K, D: float, dt: float) -> "PredictorState":
        A = np.asarray(A, dtype=float)
        B = np.asarray(B, dtype=float).reshape(-1)
        N = steps_per_delay(D, dt)
        rows = np.array([expm(-k * dt * A) @ B for k in range(N + 1)])
        K = np.asarray(K, dtype=float).reshape(-1).copy()
        for arr in (rows, K):
            arr.setflags(write=False)
        return cls(K, rows, float(D), float(dt), N)

    def quadrature_weights(self, step: int) -> np.ndarray:
        """Trapezoid weights for the window ending at node ``step``.

        Nodes before ``t = 0`` get zero weight; the node at ``t = 0`` keeps
        only the half-interval to its right because ``v`` jumps there.
        """
        N, dt = self.N, self.dt
        c = np.full(N + 1, dt)
        c[0] = c[-1] = 0.5 * dt
        if step < N:
            first = N - step  # window index of t = 0
            c[:first] = 0.0
            c[first] = 0.5 * dt if step > 0 else 0.0
        return c


def artstein_transform(X, buffer: HistoryBuffer, pred: PredictorState) -> np.ndarray:
    """``Z = X + int_{t-D}^{t} exp(A (t - D - tau)) B v(tau) dtau`` by trapezoid.

    The newest buffer sample is the value of ``v`` at the current time.
    """
    if buffer.N != pred.N or not np.isclose(buffer.dt, pred.dt, rtol=1e-12):
        raise PredictorError("history buffer and predictor use different grids")
    if buffer.step < 0:
        raise PredictorError("history buffer is not aligned with any time yet")
    X = np.asarray(X, dtype=float)
    c = pred.quadrature_weights(buffer.step)
    return X + (c * buffer.window()) @ pred.weights


def feedback(Z, K, t: float) -> float:
    """``v(t) = K Z`` for ``t >= 0`` and ``0`` before."""
    if t < 0:
        return 0.0
    return float(np.dot(np.asarray(K, dtype=float).reshape(-1), np.asarray(Z, dtype=float)))


def first_component_identity(Z, u: float) -> float:
    """``|E_1 Z - u|``: the first transformed coordinate reproduces the input."""
    return abs(float(np.asarray(Z, dtype=float)[0]) - float(u))
