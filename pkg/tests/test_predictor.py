import math

import numpy as np
import pytest

from rdpi.predictor import (
    HistoryBuffer,
    PredictorError,
    PredictorState,
    artstein_transform,
    feedback,
    first_component_identity,
    steps_per_delay,
)


def _filled(D, dt, values):
    buf = HistoryBuffer(D, dt)
    for v in values:
        buf.push(v)
    return buf


def test_steps_per_delay():
    assert steps_per_delay(1.0, 0.005) == 200
    assert steps_per_delay(0.3, 0.1) == 3
    with pytest.raises(PredictorError):
        steps_per_delay(1.0, 0.003)
    with pytest.raises(PredictorError):
        steps_per_delay(1.0, 0.0)


def test_history_buffer_layout_and_causality():
    buf = HistoryBuffer(1.0, 0.25)
    assert len(buf) == 5
    assert buf.step == -1
    assert not np.any(buf.window())  # samples for negative times are zero
    for k in range(7):
        buf.push(float(k))
    assert buf.step == 6 and buf.t == 1.5
    assert np.array_equal(buf.window(), [2, 3, 4, 5, 6])
    assert buf.delayed(0) == 6 and buf.delayed(4) == 2
    buf.set_latest(-1.0)
    assert buf.window()[-1] == -1.0
    with pytest.raises(PredictorError):
        buf.delayed(5)


def test_weights_endpoints():
    A = np.array([[0.3, 1.0], [0.0, -0.2]])
    B = np.array([1.0, 2.0])
    pred = PredictorState.build(A, B, [1.0, 1.0], 1.0, 0.1)
    assert np.array_equal(pred.weights[0], B)
    from scipy.linalg import expm

    assert np.allclose(pred.weights[-1], expm(-A) @ B, rtol=1e-14)


def test_zero_history_gives_identity(rng):
    pred = PredictorState.build(rng.standard_normal((3, 3)), rng.standard_normal(3), np.zeros(3), 1.0, 0.05)
    X = rng.standard_normal(3)
    buf = _filled(1.0, 0.05, np.zeros(21))
    assert np.array_equal(artstein_transform(X, buf, pred), X)


def test_constant_history_A_zero():
    pred = PredictorState.build(np.zeros((2, 2)), [1.0, -0.5], np.zeros(2), 2.0, 0.1)
    buf = _filled(2.0, 0.1, np.full(21, 3.0))
    Z = artstein_transform(np.array([1.0, 1.0]), buf, pred)
    assert np.allclose(Z, [1.0 + 2.0 * 3.0, 1.0 - 2.0 * 0.5 * 3.0], atol=1e-13)


def test_constant_history_diagonal_A_and_order():
    lam = np.array([-0.8, 0.3, 1.1])
    B = np.array([1.0, -2.0, 0.5])
    D, vbar = 1.0, 1.3
    exact = (1 - np.exp(-lam * D)) / lam * B * vbar
    errs = []
    for dt in (0.02, 0.01, 0.005):
        pred = PredictorState.build(np.diag(lam), B, np.zeros(3), D, dt)
        buf = _filled(D, dt, np.full(pred.N + 1, vbar))
        errs.append(np.max(np.abs(artstein_transform(np.zeros(3), buf, pred) - exact)))
    assert errs[-1] < 1e-5
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.01)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.01)


def test_varying_history_second_order():
    """Single mode with v(tau) = sin(tau); the integral has a closed form."""
    lam, D, t = 0.7, 1.0, 2.0
    # int_{t-D}^{t} e^{lam (t - D - tau)} sin(tau) dtau
    s = np.linspace(t - D, t, 200001)
    f = np.exp(lam * (t - D - s)) * np.sin(s)
    from scipy.integrate import simpson

    exact = simpson(f, x=s)
    errs = []
    for dt in (0.05, 0.025, 0.0125):
        pred = PredictorState.build([[lam]], [1.0], [0.0], D, dt)
        buf = HistoryBuffer(D, dt)
        for k in range(int(round(t / dt)) + 1):
            buf.push(math.sin(k * dt))
        errs.append(abs(artstein_transform([0.0], buf, pred)[0] - exact))
    assert 3.5 < errs[0] / errs[1] < 4.5 and 3.5 < errs[1] / errs[2] < 4.5


def test_start_up_window_uses_jump_weights():
    """Before t = D the window reaches into negative time, where v = 0."""
    D, dt = 1.0, 0.1
    pred = PredictorState.build(np.zeros((1, 1)), [1.0], [0.0], D, dt)
    buf = HistoryBuffer(D, dt)
    buf.push(2.0)  # v(0) = 2, so the integral over [-1, 0] is zero
    assert artstein_transform([0.0], buf, pred)[0] == 0.0
    buf.push(2.0)  # t = dt: integral over [0, dt] of the constant 2
    assert artstein_transform([0.0], buf, pred)[0] == pytest.approx(2 * dt, abs=1e-15)


def test_transform_rejects_mismatched_grid():
    pred = PredictorState.build([[0.0]], [1.0], [0.0], 1.0, 0.1)
    with pytest.raises(PredictorError):
        artstein_transform([0.0], _filled(1.0, 0.05, [1.0]), pred)
    with pytest.raises(PredictorError):
        artstein_transform([0.0], HistoryBuffer(1.0, 0.1), pred)


def test_feedback():
    K = np.array([1.0, -2.0])
    assert feedback([1.0, 1.0], K, -0.1) == 0.0
    assert feedback([1.0, 1.0], K, 0.0) == -1.0
    assert feedback([3.0, 4.0], np.zeros(2), 5.0) == 0.0


def test_first_component_identity_constant_input():
    """With A = 0 and constant v the first component is the exact integral."""
    D, dt, vbar = 1.0, 0.01, 0.37
    A = np.zeros((2, 2))
    B = np.array([1.0, 0.0])
    pred = PredictorState.build(A, B, np.zeros(2), D, dt)
    buf = HistoryBuffer(D, dt)
    assert first_component_identity(np.zeros(2), 0.0) == 0.0
    u_D = 0.0
    for k in range(300):
        buf.push(vbar)
        t = k * dt
        u = vbar * t
        u_D = vbar * max(t - D, 0.0)
        Z = artstein_transform(np.array([u_D, 0.0]), buf, pred)
        assert first_component_identity(Z, u) < 1e-10
