import math

import numpy as np
import pytest
from numba import njit

from fourier_control.errors import StepSizeUnderflowError
from fourier_control.ode import (
    EventSpec, IntegratorSettings, VectorEvents, integrate_until_event, solve, step_rk45)


@njit(cache=False)
def oscillator(t, y, args):
    return np.array([y[1], -y[0]])


@njit(cache=False)
def growth(t, y, args):
    return np.array([y[0]])


@njit(cache=False)
def velocity_guard(t, y, args):
    return np.array([y[1]])


def py_oscillator(t, y, args):
    return np.array([y[1], -y[0]])


TIGHT = IntegratorSettings()


def test_constant_rhs_is_exact():
    res = solve(lambda t, y, a: np.array([1.0]), 0.0, 1.0, [0.0])
    assert abs(res.y[0] - 1.0) < 1e-12


def test_oscillator_full_period():
    res = solve(oscillator, 0.0, 2 * math.pi, [1.0, 0.0], TIGHT)
    assert abs(res.y[0] - 1.0) < 1e-8 and abs(res.y[1]) < 1e-8


def test_exponential():
    res = solve(growth, 0.0, 1.0, [1.0], TIGHT)
    assert abs(res.y[0] - math.e) < 1e-8


def test_python_and_jit_paths_agree():
    a = solve(oscillator, 0.0, 10.0, [1.0, 0.0])
    b = solve(py_oscillator, 0.0, 10.0, [1.0, 0.0])
    np.testing.assert_array_equal(a.y, b.y)
    assert a.n_steps == b.n_steps


def test_linear_crossing():
    ev = [EventSpec(lambda t, y, a: y[0] - 0.5, +1)]
    res = integrate_until_event(lambda t, y, a: np.array([1.0]), ev, 0.0, 1.0, [0.0])
    assert res.event == 0
    assert abs(res.t - 0.5) < 1e-10


def test_zero_crossing_at_pi():
    # velocity -sin(t) passes from negative into non-negative at pi
    res = integrate_until_event(oscillator, VectorEvents(velocity_guard, (1,)), 0.0, 10.0,
                                [1.0, 0.0], TIGHT)
    assert res.event == 0
    assert abs(res.t - math.pi) < 1e-8


def test_falling_direction_fires_at_start_boundary_only_after_leaving():
    # y' = -sin t is 0 at t=0 and leaves [0, inf) immediately: a falling trigger fires at once
    res = integrate_until_event(oscillator, VectorEvents(velocity_guard, (-1,)), 0.0, 10.0,
                                [1.0, 0.0], TIGHT)
    assert res.event == 0 and res.t < 1e-8


def test_no_event_reaches_end():
    ev = [EventSpec(lambda t, y, a: y[0] - 5.0, 0)]
    res = integrate_until_event(lambda t, y, a: np.array([1.0]), ev, 0.0, 1.0, [0.0])
    assert res.event is None and res.t == 1.0


def test_earliest_of_two_events():
    ev = [EventSpec(lambda t, y, a: y[0] - 0.7, 0), EventSpec(lambda t, y, a: y[0] - 0.3, 0)]
    res = integrate_until_event(lambda t, y, a: np.array([1.0]), ev, 0.0, 1.0, [0.0])
    assert res.event == 1 and abs(res.t - 0.3) < 1e-10


def test_event_guard_brackets_root():
    ev = [EventSpec(lambda t, y, a: y[0] - 0.25, +1)]
    s = IntegratorSettings(event_time_tol=1e-6)
    res = integrate_until_event(lambda t, y, a: np.array([1.0]), ev, 0.0, 1.0, [0.0], s)
    assert res.y[0] - 0.25 >= 0.0
    assert res.t - 0.25 < 2e-6


def test_t_eval_sampling():
    grid = np.linspace(0.0, 2.0, 21)
    res = solve(oscillator, 0.0, 2.0, [1.0, 0.0], TIGHT, t_eval=grid)
    np.testing.assert_allclose(res.y_eval[:, 0], np.cos(grid), atol=1e-9)


def test_t_eval_after_event_is_nan():
    grid = np.linspace(0.0, 1.0, 11)
    ev = [EventSpec(lambda t, y, a: y[0] - 0.45, 0)]
    res = integrate_until_event(lambda t, y, a: np.array([1.0]), ev, 0.0, 1.0, [0.0],
                                t_eval=grid)
    assert np.all(np.isfinite(res.y_eval[:5])) and np.all(np.isnan(res.y_eval[5:]))


def test_deterministic():
    a = solve(oscillator, 0.0, 50.0, [1.0, 0.0])
    b = solve(oscillator, 0.0, 50.0, [1.0, 0.0])
    assert a.y.tobytes() == b.y.tobytes()


def _fixed_step_error(h):
    loose = IntegratorSettings(abs_tol=1e6, rel_tol=1e6, h_init=h, h_min=1e-14)
    t, y = 0.0, np.array([1.0, 0.0])
    n = round(1.0 / h)
    for _ in range(n):
        r = step_rk45(oscillator, t, y, h, loose)
        assert r.accepted
        t, y = t + h, r.y
    return abs(y[0] - math.cos(1.0))


def test_convergence_order():
    hs = [0.1, 0.05, 0.025]
    errs = [_fixed_step_error(h) for h in hs]
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert min(orders) >= 4.0


def test_tolerance_sweep_is_monotone():
    errs = []
    for tol in (1e-4, 1e-6, 1e-8, 1e-10):
        s = IntegratorSettings(abs_tol=tol, rel_tol=tol)
        errs.append(abs(solve(oscillator, 0.0, 10.0, [1.0, 0.0], s).y[0] - math.cos(10.0)))
    assert all(errs[i + 1] < errs[i] for i in range(3))


def test_rejected_step_shrinks():
    r = step_rk45(oscillator, 0.0, [1.0, 0.0], 3.0, IntegratorSettings(h_init=1e-3))
    assert not r.accepted and r.h_next < 3.0


def test_underflow_raises():
    s = IntegratorSettings(h_init=1e-3, h_min=1e-3)
    stiff = lambda t, y, a: np.array([1e12 * math.sin(1e9 * t)])  # noqa: E731
    with pytest.raises(StepSizeUnderflowError):
        step_rk45(stiff, 0.0, [0.0], 1e-3, s)


@pytest.mark.parametrize("kw", [dict(abs_tol=0.0), dict(h_min=1.0, h_init=1e-3),
                                dict(h_max=1e-4), dict(max_bisections=0)])
def test_settings_validation(kw):
    with pytest.raises(ValueError):
        IntegratorSettings(**kw)


def test_requires_forward_interval():
    with pytest.raises(ValueError):
        solve(oscillator, 1.0, 1.0, [1.0, 0.0])
