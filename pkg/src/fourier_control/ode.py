"""Adaptive Dormand-Prince 5(4) integration with bisection event location.

The numerical kernels are written once and instantiated twice by
:func:`_build_kernels`: compiled with numba (right-hand sides and guards must
then be ``@njit`` functions) and as plain Python (any callables).  The
public wrappers pick the compiled variant automatically when every callable
handed to them is a numba dispatcher.

Kernel calling conventions
--------------------------
``rhs(t, y, args) -> dy/dt`` and ``guard(t, y, args) -> array of guard
values``; ``args`` is an opaque parameter container (a float array for the
compiled path).  An event of direction ``+1`` fires when a guard value enters
``[0, inf)``, direction ``-1`` when it leaves it, direction ``0`` on either.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numba import njit
from numba.core.registry import CPUDispatcher

from .errors import EventError, StepSizeUnderflowError

# Dormand-Prince tableau.
C2, C3, C4, C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0
A21 = 1.0 / 5.0
A31, A32 = 3.0 / 40.0, 9.0 / 40.0
A41, A42, A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
A51, A52, A53, A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
A61, A62, A63, A64, A65 = (9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0,
                           49.0 / 176.0, -5103.0 / 18656.0)
B1, B3, B4, B5, B6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
E1 = 71.0 / 57600.0
E3 = -71.0 / 16695.0
E4 = 71.0 / 1920.0
E5 = -17253.0 / 339200.0
E6 = 22.0 / 525.0
E7 = -1.0 / 40.0

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0
PI_BETA = 0.04
PI_ALPHA = 0.2 - 0.75 * PI_BETA
ERR_FLOOR = 1e-4

STATUS_OK = 0
STATUS_UNDERFLOW = 1
STATUS_BISECTION = 2


def _build_kernels(decorate):
    @decorate
    def dopri_step(rhs, t, y, h, args):
        k1 = rhs(t, y, args)
        k2 = rhs(t + C2 * h, y + h * (A21 * k1), args)
        k3 = rhs(t + C3 * h, y + h * (A31 * k1 + A32 * k2), args)
        k4 = rhs(t + C4 * h, y + h * (A41 * k1 + A42 * k2 + A43 * k3), args)
        k5 = rhs(t + C5 * h, y + h * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4), args)
        k6 = rhs(t + h, y + h * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5), args)
        y_new = y + h * (B1 * k1 + B3 * k3 + B4 * k4 + B5 * k5 + B6 * k6)
        k7 = rhs(t + h, y_new, args)
        err = h * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7)
        return y_new, err

    @decorate
    def error_norm(err, y, y_new, atol, rtol):
        # max over components: each one is held to its own tolerance
        worst = 0.0
        for i in range(y.shape[0]):
            scale = atol + rtol * max(abs(y[i]), abs(y_new[i]))
            worst = max(worst, abs(err[i]) / scale)
        return worst

    @decorate
    def step(rhs, t, y, h, args, atol, rtol, h_min, h_max, err_prev):
        y_new, e = dopri_step(rhs, t, y, h, args)
        err = error_norm(e, y, y_new, atol, rtol)
        if err <= 1.0:
            if err == 0.0:
                fac = MAX_FACTOR
            else:
                fac = SAFETY * err ** (-PI_ALPHA) * err_prev ** PI_BETA
                fac = min(MAX_FACTOR, max(MIN_FACTOR, fac))
            return y_new, err, True, min(h * fac, h_max), STATUS_OK
        if math.isfinite(err):
            fac = max(MIN_FACTOR, SAFETY * err ** -0.2)
        else:
            fac = MIN_FACTOR
        if h <= h_min:
            return y, err, False, h, STATUS_UNDERFLOW
        return y, err, False, max(h * fac, h_min), STATUS_OK

    @decorate
    def crossed(ga, gb, direction):
        if direction > 0:
            return ga < 0.0 and gb >= 0.0
        if direction < 0:
            return ga >= 0.0 and gb < 0.0
        return (ga < 0.0) != (gb < 0.0)

    @decorate
    def record(rhs, t, y, t_new, y_new, args, grid, idx, out, inclusive):
        n = grid.shape[0]
        while idx < n and (grid[idx] < t_new or (inclusive and grid[idx] == t_new)):
            tg = grid[idx]
            if tg > t:
                if tg == t_new:
                    out[idx, :] = y_new
                else:
                    yg, _ = dopri_step(rhs, t, y, tg - t, args)
                    out[idx, :] = yg
            idx += 1
        return idx

    @decorate
    def integrate_until_event(rhs, guard, directions, t_start, t_end, y, args,
                              atol, rtol, h, h_min, h_max, event_tol, max_bisect,
                              grid, grid_idx, out):
        """Integrate from ``t_start`` until the earliest event or ``t_end``.

        Returns ``(t, y, event, h_next, grid_idx, n_steps, status)`` with
        ``event = -1`` when ``t_end`` was reached.  Grid rows strictly before
        an event time (or up to ``t_end``) are written into ``out``.
        """
        t = t_start
        g_prev = guard(t, y, args)
        n_ev = directions.shape[0]
        err_prev = ERR_FLOOR
        n_steps = 0
        while t < t_end:
            h_try = min(h, h_max)
            last = False
            if t + h_try >= t_end:
                h_try = t_end - t
                last = True
            y_new, err, accepted, h_next, status = step(
                rhs, t, y, h_try, args, atol, rtol, h_min, h_max, err_prev)
            if status != STATUS_OK:
                return t, y, -1, h_try, grid_idx, n_steps, status
            if not accepted:
                h = h_next
                continue
            n_steps += 1
            err_prev = max(err, ERR_FLOOR)
            t_new = t_end if last else t + h_try
            g_new = guard(t_new, y_new, args)
            best = -1
            best_dt = np.inf
            for i in range(n_ev):
                if not crossed(g_prev[i], g_new[i], directions[i]):
                    continue
                lo = 0.0
                hi = t_new - t
                it = 0
                while hi - lo > event_tol:
                    if it >= max_bisect:
                        return t, y, i, h_try, grid_idx, n_steps, STATUS_BISECTION
                    it += 1
                    mid = 0.5 * (lo + hi)
                    if mid <= lo or mid >= hi:
                        break
                    y_mid, _ = dopri_step(rhs, t, y, mid, args)
                    g_mid = guard(t + mid, y_mid, args)
                    if crossed(g_prev[i], g_mid[i], directions[i]):
                        hi = mid
                    else:
                        lo = mid
                if hi < best_dt:
                    best_dt = hi
                    best = i
            if best >= 0:
                if best_dt == t_new - t:
                    t_ev = t_new
                    y_ev = y_new
                else:
                    t_ev = t + best_dt
                    y_ev, _ = dopri_step(rhs, t, y, best_dt, args)
                grid_idx = record(rhs, t, y, t_ev, y_ev, args, grid, grid_idx, out, False)
                # a grid point sitting exactly on the event is covered by the event sample
                while grid_idx < grid.shape[0] and grid[grid_idx] == t_ev:
                    grid_idx += 1
                return t_ev, y_ev, best, h_try, grid_idx, n_steps, STATUS_OK
            grid_idx = record(rhs, t, y, t_new, y_new, args, grid, grid_idx, out, True)
            t = t_new
            y = y_new
            g_prev = g_new
            h = h_next
        return t, y, -1, h, grid_idx, n_steps, STATUS_OK

    return dopri_step, step, integrate_until_event


def _identity(f):
    return f


(py_dopri_step, py_step, py_integrate_until_event) = _build_kernels(_identity)
(jit_dopri_step, jit_step, jit_integrate_until_event) = _build_kernels(njit(cache=False))


@dataclass(frozen=True)
class IntegratorSettings:
    """Tolerances and step bounds; ``h_max=None`` means a tenth of the interval."""

    abs_tol: float = 1e-9
    rel_tol: float = 1e-12
    h_init: float = 1e-3
    h_min: float = 1e-14
    h_max: float | None = None
    event_time_tol: float = 1e-10
    max_bisections: int = 200

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0 and self.event_time_tol > 0):
            raise ValueError("tolerances must be positive")
        if not 0 < self.h_min <= self.h_init:
            raise ValueError("need 0 < h_min <= h_init")
        if self.h_max is not None and self.h_max < self.h_init:
            raise ValueError("need h_init <= h_max")
        if self.max_bisections < 1:
            raise ValueError("max_bisections must be >= 1")

    def resolved_h_max(self, t_start: float, t_end: float) -> float:
        if self.h_max is not None:
            return float(self.h_max)
        return max((t_end - t_start) / 10.0, self.h_init)


@dataclass(frozen=True)
class EventSpec:
    """Scalar guard ``g(t, y, args)`` and trigger direction (+1, -1 or 0)."""

    guard: Callable
    direction: int = 0
    name: str = ""


@dataclass(frozen=True)
class VectorEvents:
    """Several guards evaluated by one function returning an array.

    Lets compiled right-hand sides be paired with a compiled guard.
    """

    guard: Callable
    directions: tuple[int, ...]


@dataclass
class StepResult:
    y: np.ndarray
    error: float
    accepted: bool
    h_next: float


@dataclass
class IntegrationResult:
    t: float
    y: np.ndarray
    event: int | None
    n_steps: int
    t_eval: np.ndarray | None = None
    y_eval: np.ndarray | None = None


def _is_jitted(*fs) -> bool:
    return all(isinstance(f, CPUDispatcher) for f in fs)


def _args_for(args, jitted: bool):
    if args is None:
        return np.zeros(0) if jitted else None
    return np.ascontiguousarray(args, dtype=float) if jitted else args


def step_rk45(rhs: Callable, t: float, y, h: float,
              settings: IntegratorSettings = IntegratorSettings(),
              args=None, err_prev: float = ERR_FLOOR, h_max: float = np.inf) -> StepResult:
    """Attempt one Dormand-Prince step of size ``h``.

    A rejected step returns the input state unchanged with a reduced
    ``h_next``; rejection at ``h <= h_min`` raises
    :class:`StepSizeUnderflowError`.
    """
    jitted = _is_jitted(rhs)
    y = np.array(y, dtype=float)
    kern = jit_step if jitted else py_step
    y_new, err, accepted, h_next, status = kern(
        rhs, float(t), y, float(h), _args_for(args, jitted), settings.abs_tol,
        settings.rel_tol, settings.h_min, float(h_max), float(err_prev))
    if status == STATUS_UNDERFLOW:
        raise StepSizeUnderflowError(f"step rejected at h={h:g} <= h_min={settings.h_min:g}")
    return StepResult(np.asarray(y_new), float(err), bool(accepted), float(h_next))


def integrate_until_event(rhs: Callable, events: Sequence[EventSpec] | VectorEvents,
                          t_start: float, t_end: float, y0,
                          settings: IntegratorSettings = IntegratorSettings(),
                          args=None, t_eval=None) -> IntegrationResult:
    """Integrate ``y' = rhs(t, y, args)`` until the earliest event or ``t_end``.

    ``result.event`` is the index of the event that fired, or ``None``.  If
    ``t_eval`` is given, states at those times (up to the stopping time) are
    returned in ``result.y_eval``; entries past the stop are NaN.
    """
    if not t_end > t_start:
        raise ValueError("need t_end > t_start")
    y0 = np.array(y0, dtype=float)
    if isinstance(events, VectorEvents):
        guard = events.guard
        directions = np.asarray(events.directions, dtype=np.int64)
        jitted = _is_jitted(rhs, guard)
    else:
        events = list(events)
        directions = np.array([e.direction for e in events], dtype=np.int64)
        guards = [e.guard for e in events]

        def guard(t, y, a):
            return np.array([g(t, y, a) for g in guards], dtype=float)

        jitted = False
    grid = np.zeros(0) if t_eval is None else np.asarray(t_eval, dtype=float)
    out = np.full((grid.size, y0.size), np.nan)
    idx = 0
    while idx < grid.size and grid[idx] <= t_start:
        if grid[idx] == t_start:
            out[idx] = y0
        idx += 1
    kern = jit_integrate_until_event if jitted else py_integrate_until_event
    t, y, ev, _, _, n_steps, status = kern(
        rhs, guard, directions, float(t_start), float(t_end), y0, _args_for(args, jitted),
        settings.abs_tol, settings.rel_tol, settings.h_init, settings.h_min,
        settings.resolved_h_max(t_start, t_end), settings.event_time_tol,
        settings.max_bisections, grid, idx, out)
    if status == STATUS_UNDERFLOW:
        raise StepSizeUnderflowError(f"step size underflow near t={t:g}")
    if status == STATUS_BISECTION:
        raise EventError(f"event bisection did not converge near t={t:g}")
    return IntegrationResult(float(t), np.asarray(y), None if ev < 0 else int(ev), int(n_steps),
                             grid if t_eval is not None else None,
                             out if t_eval is not None else None)


def solve(rhs: Callable, t_start: float, t_end: float, y0,
          settings: IntegratorSettings = IntegratorSettings(), args=None, t_eval=None):
    """Event-free integration; returns :class:`IntegrationResult`."""
    if _is_jitted(rhs):
        events = VectorEvents(_no_guard, ())
    else:
        events = []
    return integrate_until_event(rhs, events, t_start, t_end, y0, settings, args, t_eval)


@njit(cache=False)
def _no_guard(t, y, args):
    return np.zeros(0)
