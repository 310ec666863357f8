"""Dimensionless pendulum-driven capsule with Coulomb stick-slip friction.

State ``y = [theta, theta', z, z']`` in dimensionless time ``tau``.  The
inertia system is

    [ 1        -cos th ] [th'']   [ sin th - rho th - nu th' + u ]
    [ -cos th  gamma+1 ] [z'' ] = [ -th'^2 sin th - f_z          ]

with normal load ``r_y = gamma + 1 - th'' sin th - th'^2 cos th`` and the
horizontal pendulum force ``r_z = th'' cos th - th'^2 sin th``.  While the
capsule sticks ``z'' = 0`` and ``f_z = r_z``; while it slips in direction
``s`` the friction is ``f_z = mu s r_y``.  Because ``r_y`` depends on
``th''`` the slip case is solved as a coupled 2x2 linear system.

Phase changes are located with the bisection events of :mod:`.ode`.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .errors import (ContactLossError, DomainError, EventError, ModelSingularityError,
                     SimulationError, StepSizeUnderflowError)
from .ode import STATUS_BISECTION, STATUS_UNDERFLOW, IntegratorSettings, jit_integrate_until_event
from .parametrization import FourierSeriesControl

SINGULAR_DET = 1e-12
MAX_EVENTS = 1_000_000
DEFAULT_SAMPLES = 2000
# step cap as a fraction of the highest harmonic's period, so that small states
# (below abs_tol) cannot let the controller step across the forcing
STEPS_PER_PERIOD = 8

# layout of the float parameter vector handed to the compiled kernels
I_MU, I_RHO, I_NU, I_GAMMA, I_S, I_OMEGA, I_A0, I_K, I_H = range(9)

EV_STICK_TO_SLIP = 0
EV_SLIP_TO_STICK = 1
EV_SLIP_REVERSAL = 2
EVENT_KINDS = {EV_STICK_TO_SLIP: "stick_to_slip", EV_SLIP_TO_STICK: "slip_to_stick",
               EV_SLIP_REVERSAL: "slip_reversal"}

SIM_OK = 0
SIM_UNDERFLOW = 1
SIM_BISECTION = 2
SIM_CONTACT_LOSS = 3
SIM_SINGULAR = 4
SIM_EVENT_CAP = 5


class MotionPhase(enum.IntEnum):
    SLIP_NEG = -1
    STICK = 0
    SLIP_POS = 1

    @property
    def label(self) -> str:
        return {0: "stick", 1: "slip+", -1: "slip-"}[int(self)]

    @classmethod
    def from_label(cls, label: str) -> "MotionPhase":
        return {"stick": cls.STICK, "slip+": cls.SLIP_POS, "slip-": cls.SLIP_NEG}[label]


@dataclass(frozen=True)
class CapsuleParams:
    """Dimensionless plant constants (friction, stiffness, damping, mass ratio)."""

    mu: float = 0.3
    rho: float = 2.5
    nu: float = 1.0
    gamma: float = 10.0

    def __post_init__(self):
        for name in ("mu", "rho", "nu", "gamma"):
            v = float(getattr(self, name))
            if not (v > 0.0 and math.isfinite(v)):
                raise DomainError(f"{name} must be positive, got {v!r}")
            object.__setattr__(self, name, v)


@dataclass(frozen=True)
class CapsuleState:
    tau: float = 0.0
    theta: float = 0.0
    theta_dot: float = 0.0
    z: float = 0.0
    z_dot: float = 0.0
    phase: MotionPhase = MotionPhase.STICK

    def vector(self) -> np.ndarray:
        return np.array([self.theta, self.theta_dot, self.z, self.z_dot])


@dataclass(frozen=True)
class ContactForces:
    r_y: float
    r_z: float
    f_z: float


@dataclass(frozen=True)
class Scales:
    """Conversion factors from dimensionless to physical quantities."""

    Omega: float
    time: float
    length: float
    force: float
    torque: float


def nondimensionalize(M: float, m: float, l: float, k: float, c: float, g: float,
                      mu: float) -> tuple[CapsuleParams, Scales]:
    """Dimensionless constants of a physical capsule.

    ``M`` capsule mass, ``m`` pendulum mass, ``l`` pendulum length, ``k``
    torsional spring stiffness, ``c`` damping, ``g`` gravity, ``mu`` friction.
    """
    for name, v in (("M", M), ("m", m), ("l", l), ("k", k), ("c", c), ("g", g), ("mu", mu)):
        if not v > 0:
            raise DomainError(f"{name} must be positive, got {v!r}")
    Omega = math.sqrt(g / l)
    params = CapsuleParams(mu=mu, rho=k / (m * Omega**2 * l**2), nu=c / (m * Omega * l**2),
                           gamma=M / m)
    scales = Scales(Omega=Omega, time=1.0 / Omega, length=l, force=m * Omega**2 * l,
                    torque=m * Omega**2 * l**2)
    return params, scales


# --------------------------------------------------------------------------
# compiled kernels
# --------------------------------------------------------------------------

@njit(cache=False)
def control_value(t, args):
    omega = args[I_OMEGA]
    K = int(args[I_K])
    u = 0.5 * args[I_A0]
    for k in range(1, K + 1):
        arg = k * omega * t
        u += args[I_H + 2 * k - 2] * math.cos(arg) + args[I_H + 2 * k - 1] * math.sin(arg)
    return u


@njit(cache=False)
def stick_kernel(theta, theta_dot, u, rho, nu, gamma):
    """``(theta'', r_z, r_y)`` with the capsule held still."""
    sn = math.sin(theta)
    cs = math.cos(theta)
    thdd = sn - rho * theta - nu * theta_dot + u
    w2 = theta_dot * theta_dot
    r_z = thdd * cs - w2 * sn
    r_y = gamma + 1.0 - thdd * sn - w2 * cs
    return thdd, r_z, r_y


@njit(cache=False)
def slip_kernel(theta, theta_dot, u, mu, rho, nu, gamma, s):
    """``(theta'', z'', r_y, det)`` for sliding in direction ``s``."""
    sn = math.sin(theta)
    cs = math.cos(theta)
    w2 = theta_dot * theta_dot
    ms = mu * s
    # row 1: th'' - cos z'' = b1
    # row 2 with f_z = mu s r_y(th''): (-cos - mu s sin) th'' + (gamma+1) z'' = b2
    a21 = -cs - ms * sn
    a22 = gamma + 1.0
    b1 = sn - rho * theta - nu * theta_dot + u
    b2 = -w2 * sn - ms * (gamma + 1.0) + ms * w2 * cs
    det = a22 - cs * (-a21)
    if abs(det) < SINGULAR_DET:
        return math.nan, math.nan, math.nan, det
    thdd = (b1 * a22 + cs * b2) / det
    zdd = (b2 - a21 * b1) / det
    r_y = gamma + 1.0 - thdd * sn - w2 * cs
    return thdd, zdd, r_y, det


@njit(cache=False)
def capsule_rhs(t, y, args):
    u = control_value(t, args)
    s = args[I_S]
    out = np.empty(4)
    out[0] = y[1]
    if s == 0.0:
        thdd, _, _ = stick_kernel(y[0], y[1], u, args[I_RHO], args[I_NU], args[I_GAMMA])
        out[1] = thdd
        out[2] = 0.0
        out[3] = 0.0
    else:
        thdd, zdd, _, _ = slip_kernel(y[0], y[1], u, args[I_MU], args[I_RHO], args[I_NU],
                                      args[I_GAMMA], s)
        out[1] = thdd
        out[2] = y[3]
        out[3] = zdd
    return out


@njit(cache=False)
def capsule_guard(t, y, args):
    """Stick: ``[|r_z| - mu r_y, -r_y, 1]``; slip: ``[s z', -r_y, det - eps]``."""
    u = control_value(t, args)
    s = args[I_S]
    g = np.empty(3)
    if s == 0.0:
        _, r_z, r_y = stick_kernel(y[0], y[1], u, args[I_RHO], args[I_NU], args[I_GAMMA])
        g[0] = abs(r_z) - args[I_MU] * r_y
        g[1] = -r_y
        g[2] = 1.0
    else:
        _, _, r_y, det = slip_kernel(y[0], y[1], u, args[I_MU], args[I_RHO], args[I_NU],
                                     args[I_GAMMA], s)
        g[0] = s * y[3]
        g[1] = -r_y
        g[2] = det - SINGULAR_DET
    return g


STICK_DIRECTIONS = np.array([1, 1, -1], dtype=np.int64)
SLIP_DIRECTIONS = np.array([-1, 1, -1], dtype=np.int64)


@njit(cache=False)
def _sign(x):
    return 1.0 if x > 0.0 else -1.0


@njit(cache=False)
def _forces(t, y, s, args):
    u = control_value(t, args)
    if s == 0.0:
        _, r_z, r_y = stick_kernel(y[0], y[1], u, args[I_RHO], args[I_NU], args[I_GAMMA])
        return r_z, r_y
    _, _, r_y, _ = slip_kernel(y[0], y[1], u, args[I_MU], args[I_RHO], args[I_NU],
                               args[I_GAMMA], s)
    return args[I_MU] * s * r_y, r_y


@njit(cache=False)
def _grow(buf, n):
    if n < buf.shape[0]:
        return buf
    new = np.empty((2 * buf.shape[0], buf.shape[1]))
    new[: buf.shape[0]] = buf
    return new


@njit(cache=False)
def simulate_core(args, t0, tf, y0, atol, rtol, h_init, h_min, h_max, ev_tol,
                  max_bisect, grid, max_events):
    """Event-driven stick-slip integration.

    Returns ``(status, t, y, grid_out, events, n_events, n_steps)``.  Grid rows
    hold ``[theta, theta', z, z', f_z, r_y, phase]`` (NaN where not reached);
    event rows hold ``[tau, kind, theta, theta', z, z', f_z, r_y, phase]``.
    """
    mu = args[I_MU]
    n_grid = grid.shape[0]
    states = np.full((n_grid, 4), np.nan)
    phases = np.zeros(n_grid)
    events = np.empty((16, 9))
    n_events = 0
    n_steps = 0
    t = t0
    y = y0.copy()

    u = control_value(t, args)
    if y[3] != 0.0:
        s = _sign(y[3])
    else:
        _, r_z, r_y = stick_kernel(y[0], y[1], u, args[I_RHO], args[I_NU], args[I_GAMMA])
        if r_y <= 0.0:
            return SIM_CONTACT_LOSS, t, y, states, events[:0], 0, 0
        s = _sign(r_z) if abs(r_z) >= mu * r_y else 0.0

    idx = 0
    while idx < n_grid and grid[idx] <= t0:
        if grid[idx] == t0 and not (s != 0.0 and y[3] == 0.0):
            states[idx] = y
            phases[idx] = s
        idx += 1
    if s != 0.0 and y[3] == 0.0:
        # breakaway at the initial instant; the event row stands in for the t0 sample
        f_z, r_y = _forces(t, y, s, args)
        events[0, 0] = t
        events[0, 1] = EV_STICK_TO_SLIP
        events[0, 2:6] = y
        events[0, 6] = f_z
        events[0, 7] = r_y
        events[0, 8] = s
        n_events = 1

    while t < tf:
        args[I_S] = s
        dirs = STICK_DIRECTIONS if s == 0.0 else SLIP_DIRECTIONS
        first = idx
        t, y, ev, _, idx, nst, status = jit_integrate_until_event(
            capsule_rhs, capsule_guard, dirs, t, tf, y, args, atol, rtol, h_init, h_min,
            h_max, ev_tol, max_bisect, grid, idx, states)
        n_steps += nst
        for i in range(first, idx):
            phases[i] = s
        if status == STATUS_UNDERFLOW:
            return SIM_UNDERFLOW, t, y, states, events[:n_events], n_events, n_steps
        if status == STATUS_BISECTION:
            return SIM_BISECTION, t, y, states, events[:n_events], n_events, n_steps
        if ev < 0:
            break
        if ev == 1:
            return SIM_CONTACT_LOSS, t, y, states, events[:n_events], n_events, n_steps
        if ev == 2:
            return SIM_SINGULAR, t, y, states, events[:n_events], n_events, n_steps
        if n_events >= max_events:
            return SIM_EVENT_CAP, t, y, states, events[:n_events], n_events, n_steps

        y = y.copy()
        u = control_value(t, args)
        if s != 0.0:
            y[3] = 0.0
            _, r_z, r_y = stick_kernel(y[0], y[1], u, args[I_RHO], args[I_NU], args[I_GAMMA])
            if abs(r_z) < mu * r_y:
                s = 0.0
                kind = EV_SLIP_TO_STICK
            else:
                s = _sign(r_z)
                kind = EV_SLIP_REVERSAL
        else:
            _, r_z, r_y = stick_kernel(y[0], y[1], u, args[I_RHO], args[I_NU], args[I_GAMMA])
            s = _sign(r_z)
            kind = EV_STICK_TO_SLIP

        f_z, r_y = _forces(t, y, s, args)
        events = _grow(events, n_events)
        events[n_events, 0] = t
        events[n_events, 1] = kind
        events[n_events, 2:6] = y
        events[n_events, 6] = f_z
        events[n_events, 7] = r_y
        events[n_events, 8] = s
        n_events += 1

    out = np.full((n_grid, 7), np.nan)
    for i in range(n_grid):
        if not np.isnan(states[i, 0]):
            out[i, :4] = states[i]
            f_z, r_y = _forces(grid[i], states[i], phases[i], args)
            out[i, 4] = f_z
            out[i, 5] = r_y
            out[i, 6] = phases[i]
    return SIM_OK, t, y, out, events[:n_events], n_events, n_steps


# --------------------------------------------------------------------------
# Python-level surface
# --------------------------------------------------------------------------

def pack_args(ctrl: FourierSeriesControl, params: CapsuleParams, s: float = 0.0) -> np.ndarray:
    head = [params.mu, params.rho, params.nu, params.gamma, s, ctrl.omega, ctrl.a0, ctrl.K]
    return np.concatenate([np.array(head, dtype=float), ctrl.amplitude_vector()])


def stick_accelerations(state: CapsuleState, u1: float, params: CapsuleParams):
    """``(theta'', 0, ContactForces)`` for a capsule at rest on the ground."""
    if state.z_dot != 0.0:
        raise DomainError("stick accelerations need z_dot == 0")
    thdd, r_z, r_y = stick_kernel(state.theta, state.theta_dot, float(u1), params.rho,
                                  params.nu, params.gamma)
    if r_y <= 0.0:
        raise ContactLossError(f"normal load r_y={r_y:g} <= 0")
    return thdd, 0.0, ContactForces(r_y=r_y, r_z=r_z, f_z=r_z)


def slip_accelerations(state: CapsuleState, u1: float, params: CapsuleParams, s: int):
    """``(theta'', z'', ContactForces)`` while sliding in direction ``s``."""
    if s not in (-1, 1):
        raise DomainError(f"slip direction must be +1 or -1, got {s!r}")
    thdd, zdd, r_y, det = slip_kernel(state.theta, state.theta_dot, float(u1), params.mu,
                                      params.rho, params.nu, params.gamma, float(s))
    if abs(det) < SINGULAR_DET:
        raise ModelSingularityError(f"slip inertia determinant {det:g} is singular")
    if r_y <= 0.0:
        raise ContactLossError(f"normal load r_y={r_y:g} <= 0")
    f_z = params.mu * s * r_y
    r_z = thdd * math.cos(state.theta) - state.theta_dot**2 * math.sin(state.theta)
    return thdd, zdd, ContactForces(r_y=r_y, r_z=r_z, f_z=f_z)


def stick_break_check(state: CapsuleState, u1: float, params: CapsuleParams) -> int | None:
    """Slip direction if static friction cannot hold (``|r_z| >= mu r_y``)."""
    _, _, forces = stick_accelerations(state, u1, params)
    if abs(forces.r_z) >= params.mu * forces.r_y:
        return 1 if forces.r_z > 0 else -1
    return None


@dataclass
class Trajectory:
    """Recorded samples (grid plus event instants), events and cost."""

    tau: np.ndarray
    theta: np.ndarray
    theta_dot: np.ndarray
    z: np.ndarray
    z_dot: np.ndarray
    f_z: np.ndarray
    r_y: np.ndarray
    phase: np.ndarray
    events: list[tuple[float, str]] = field(default_factory=list)
    cost_J: float = 0.0
    z_start: float = 0.0
    z_end: float = 0.0
    n_steps: int = 0

    @property
    def distance(self) -> float:
        return self.z_end - self.z_start

    def stick_segments(self) -> list[tuple[int, int]]:
        """Index ranges ``[i, j)`` of consecutive stick samples."""
        segs = []
        stick = self.phase == 0
        i = 0
        n = len(stick)
        while i < n:
            if stick[i]:
                j = i
                while j < n and stick[j]:
                    j += 1
                segs.append((i, j))
                i = j
            else:
                i += 1
        return segs

    def stick_slip_cycles(self) -> int:
        """Number of completed stick -> slip -> stick cycles in the event log."""
        kinds = [k for _, k in self.events]
        count = 0
        seen_break = False
        for k in kinds:
            if k == "stick_to_slip":
                seen_break = True
            elif k == "slip_to_stick" and seen_break:
                count += 1
                seen_break = False
        return count

    def write_csv(self, path, events_path=None) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["tau", "theta", "theta_dot", "z", "z_dot", "f_z", "r_y", "phase"])
            for i in range(len(self.tau)):
                w.writerow([_fmt(self.tau[i]), _fmt(self.theta[i]), _fmt(self.theta_dot[i]),
                            _fmt(self.z[i]), _fmt(self.z_dot[i]), _fmt(self.f_z[i]),
                            _fmt(self.r_y[i]), MotionPhase(int(self.phase[i])).label])
        if events_path is not None:
            with Path(events_path).open("w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["tau", "kind"])
                for tau, kind in self.events:
                    w.writerow([_fmt(tau), kind])


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


_STATUS_ERRORS = {
    SIM_UNDERFLOW: (StepSizeUnderflowError, "step size underflow"),
    SIM_BISECTION: (EventError, "event bisection did not converge"),
    SIM_CONTACT_LOSS: (ContactLossError, "normal load r_y dropped to zero"),
    SIM_SINGULAR: (ModelSingularityError, "slip inertia matrix became singular"),
    SIM_EVENT_CAP: (EventError, "event budget exhausted (possible Zeno behaviour)"),
}


def simulate(ctrl: FourierSeriesControl, params: CapsuleParams = CapsuleParams(),
             tau0: float = 0.0, tau_f: float = 100.0,
             initial: CapsuleState | None = None,
             settings: IntegratorSettings = IntegratorSettings(),
             n_samples: int = DEFAULT_SAMPLES, max_events: int = MAX_EVENTS) -> Trajectory:
    """Integrate the capsule under control ``ctrl`` over ``[tau0, tau_f]``.

    Samples are taken on ``n_samples`` evenly spaced times (both ends
    included) plus every phase transition.  Steps are capped at an eighth of
    the highest harmonic's period on top of ``settings.h_max``.  Raises a
    :class:`~fourier_control.errors.SimulationError` subclass on contact loss,
    step-size underflow, failed event location or runaway event counts.
    """
    if not tau_f > tau0:
        raise DomainError("need tau_f > tau0")
    if n_samples < 2:
        raise DomainError("need at least two output samples")
    if initial is None:
        initial = CapsuleState(tau=tau0)
    args = pack_args(ctrl, params)
    grid = np.linspace(tau0, tau_f, n_samples)
    h_max = min(settings.resolved_h_max(tau0, tau_f),
                2.0 * math.pi / (ctrl.omega * ctrl.K * STEPS_PER_PERIOD))
    h_max = max(h_max, settings.h_init)
    status, t, y, rows, ev, n_ev, n_steps = simulate_core(
        args, float(tau0), float(tau_f), initial.vector(), settings.abs_tol, settings.rel_tol,
        settings.h_init, settings.h_min, h_max,
        settings.event_time_tol, settings.max_bisections, grid, max_events)
    events = [(float(e[0]), EVENT_KINDS[int(e[1])]) for e in ev]
    if status != SIM_OK:
        cls, msg = _STATUS_ERRORS[status]
        err = cls(f"{msg} at tau={t:.12g} after {n_ev} events")
        err.tau = float(t)
        err.events = events
        raise err

    keep = ~np.isnan(rows[:, 0])
    tau = np.concatenate([grid[keep], ev[:, 0]])
    data = np.concatenate([rows[keep], ev[:, 2:9]])
    order = np.argsort(tau, kind="stable")
    tau = tau[order]
    data = data[order]
    z_start = float(initial.z)
    z_end = float(y[2])
    return Trajectory(
        tau=tau, theta=data[:, 0], theta_dot=data[:, 1], z=data[:, 2], z_dot=data[:, 3],
        f_z=data[:, 4], r_y=data[:, 5], phase=data[:, 6].astype(int), events=events,
        cost_J=-abs(z_end - z_start), z_start=z_start, z_end=z_end, n_steps=int(n_steps))


def progression_cost(ctrl: FourierSeriesControl, params: CapsuleParams = CapsuleParams(),
                     tau0: float = 0.0, tau_f: float = 100.0,
                     initial: CapsuleState | None = None,
                     settings: IntegratorSettings = IntegratorSettings()) -> float:
    """``J = -|z(tau_f) - z(tau0)|`` without keeping a dense record."""
    return simulate(ctrl, params, tau0, tau_f, initial, settings, n_samples=2).cost_J


__all__ = [
    "CapsuleParams", "CapsuleState", "ContactForces", "MotionPhase", "Scales", "SimulationError",
    "Trajectory", "nondimensionalize", "progression_cost", "simulate", "slip_accelerations",
    "stick_accelerations", "stick_break_check",
]
