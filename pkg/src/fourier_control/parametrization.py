"""Bounded Fourier-series controls built from shape and span parameters.

A control with ``K`` harmonics is described by

* a direction on the unit sphere ``S^(2K-1)`` given in spherical angles,
  which fixes the *shape* of the signal (its affine normalization to [0, 1]),
* two numbers ``p, q`` in (0, 1] that place the *span* (infimum, supremum)
  inside the admissible band ``[m, M]``,
* the fundamental frequency ``omega``.

:func:`build_control` turns such a description into plain Fourier
coefficients ``a0, a_k, b_k``.  The constant term follows the classical
``a0 / 2`` convention: :func:`eval_control` computes
``a0/2 + sum_k a_k cos(k w t) + b_k sin(k w t)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateShapeError, DomainError

SPAN_SAMPLES = 1000
P_MIN = 1e-9
LAST_ANGLE_MAX = 2.0 * math.pi - 1e-12
_DEGENERACY_RTOL = 1e-12


@dataclass(frozen=True)
class SphericalDirection:
    """Spherical angles of a point on ``S^(2K-1)``."""

    angles: tuple[float, ...]

    def __post_init__(self):
        angles = tuple(float(a) for a in self.angles)
        object.__setattr__(self, "angles", angles)
        n = len(angles)
        if n < 1 or n % 2 == 0:
            raise DomainError(f"need 2K-1 angles for K >= 1, got {n}")
        for i, a in enumerate(angles[:-1]):
            if not 0.0 <= a <= math.pi:
                raise DomainError(f"phi_{i + 1} = {a!r} outside [0, pi]")
        if not 0.0 <= angles[-1] < 2.0 * math.pi:
            raise DomainError(f"phi_{n} = {angles[-1]!r} outside [0, 2*pi)")

    @property
    def K(self) -> int:
        return (len(self.angles) + 1) // 2


@dataclass(frozen=True)
class SpanParams:
    """Span placement inside the admissible band; both in (0, 1]."""

    p: float
    q: float

    def __post_init__(self):
        for name in ("p", "q"):
            v = float(getattr(self, name))
            if not P_MIN <= v <= 1.0:
                raise DomainError(f"{name} = {v!r} outside [{P_MIN:g}, 1]")
            object.__setattr__(self, name, v)


@dataclass(frozen=True)
class ControlBounds:
    m: float
    M: float

    def __post_init__(self):
        if not float(self.m) < float(self.M):
            raise DomainError(f"control bounds need m < M, got m={self.m!r}, M={self.M!r}")
        object.__setattr__(self, "m", float(self.m))
        object.__setattr__(self, "M", float(self.M))


@dataclass(frozen=True)
class Span:
    inf: float
    sup: float

    def __post_init__(self):
        if not self.inf < self.sup:
            raise DegenerateShapeError(f"span needs inf < sup, got ({self.inf!r}, {self.sup!r})")


@dataclass(frozen=True)
class ControlSpec:
    """Optimizer-facing description of one bounded control component."""

    direction: SphericalDirection
    span: SpanParams
    omega: float
    bounds: ControlBounds

    def __post_init__(self):
        omega = float(self.omega)
        if not (omega > 0.0 and math.isfinite(omega)):
            raise DomainError(f"omega must be positive and finite, got {self.omega!r}")
        object.__setattr__(self, "omega", omega)

    @property
    def K(self) -> int:
        return self.direction.K

    @classmethod
    def create(cls, phi: Sequence[float], p: float, q: float, omega: float,
               m: float, M: float) -> "ControlSpec":
        return cls(SphericalDirection(tuple(phi)), SpanParams(p, q), omega, ControlBounds(m, M))

    @classmethod
    def from_vector(cls, x: Sequence[float], K: int, bounds: ControlBounds,
                    omega: float | None = None) -> "ControlSpec":
        """Decode an optimizer vector ``[phi_1..phi_(2K-1), p, q (, omega)]``.

        Box optimizers cannot express open intervals, so ``p, q`` are clamped to
        ``[P_MIN, 1]``, the leading angles to ``[0, pi]`` and the last angle is
        wrapped modulo ``2 pi``.
        """
        x = np.asarray(x, dtype=float)
        n = 2 * K - 1
        expected = n + 2 + (omega is None)
        if x.shape != (expected,):
            raise DomainError(f"expected a vector of length {expected} for K={K}, got {x.shape}")
        phi = [min(max(a, 0.0), math.pi) for a in x[: n - 1]]
        last = math.fmod(x[n - 1], 2.0 * math.pi)
        if last < 0.0:
            last += 2.0 * math.pi
        if last >= 2.0 * math.pi:
            last = 0.0
        phi.append(last)
        p = min(max(x[n], P_MIN), 1.0)
        q = min(max(x[n + 1], P_MIN), 1.0)
        w = float(x[n + 2]) if omega is None else float(omega)
        return cls(SphericalDirection(tuple(phi)), SpanParams(p, q), w, bounds)

    def to_vector(self, include_omega: bool = True) -> np.ndarray:
        vals = list(self.direction.angles) + [self.span.p, self.span.q]
        if include_omega:
            vals.append(self.omega)
        return np.array(vals)

    def to_record(self) -> dict:
        """Flat numeric record ``{K, phi, p, q, omega, m, M}``."""
        return {
            "K": self.K,
            "phi": list(self.direction.angles),
            "p": self.span.p,
            "q": self.span.q,
            "omega": self.omega,
            "m": self.bounds.m,
            "M": self.bounds.M,
        }

    @classmethod
    def from_record(cls, record: dict) -> "ControlSpec":
        phi = list(record["phi"])
        K = int(record.get("K", (len(phi) + 1) // 2))
        if len(phi) != 2 * K - 1:
            raise DomainError(f"K={K} needs {2 * K - 1} angles, got {len(phi)}")
        return cls.create(phi, record["p"], record["q"], record["omega"], record["m"], record["M"])

    def negated(self) -> "ControlSpec":
        """Spec whose control is the pointwise negation of this one's.

        Only available for bands symmetric about zero (``m = -M``), where the
        negated span still fits the same bounds.
        """
        m, M = self.bounds.m, self.bounds.M
        if m != -M:
            raise DomainError("negation needs a band symmetric about zero")
        angles = self.direction.angles
        phi = [math.pi - a for a in angles[:-1]]
        last = math.fmod(angles[-1] + math.pi, 2.0 * math.pi)
        phi.append(last)
        span = span_from_params(self.span, self.bounds)
        new_sup, new_inf = -span.inf, -span.sup
        p = (new_sup - m) / (M - m)
        q = (new_sup - new_inf) / (new_sup - m)
        return ControlSpec.create(phi, min(p, 1.0), min(q, 1.0), self.omega, m, M)


@dataclass(frozen=True)
class FourierSeriesControl:
    """Truncated Fourier series ``a0/2 + sum a_k cos(k w t) + b_k sin(k w t)``."""

    a0: float
    a: tuple[float, ...]
    b: tuple[float, ...]
    omega: float

    def __post_init__(self):
        a = tuple(float(v) for v in self.a)
        b = tuple(float(v) for v in self.b)
        if len(a) != len(b) or not a:
            raise DomainError("need matching, non-empty cosine and sine coefficient lists")
        if not any(v != 0.0 for v in a + b):
            raise DegenerateShapeError("harmonic amplitude vector is zero (constant control)")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "a0", float(self.a0))
        object.__setattr__(self, "omega", float(self.omega))

    @property
    def K(self) -> int:
        return len(self.a)

    @property
    def harmonics(self) -> list[tuple[float, float]]:
        return list(zip(self.a, self.b))

    def amplitude_vector(self) -> np.ndarray:
        """``H = [a_1, b_1, ..., a_K, b_K]``."""
        return np.column_stack([self.a, self.b]).ravel()

    def negated(self) -> "FourierSeriesControl":
        return FourierSeriesControl(-self.a0, tuple(-v for v in self.a),
                                    tuple(-v for v in self.b), self.omega)

    def __call__(self, t):
        return eval_control(self, t)


def direction_to_cartesian(d: SphericalDirection) -> np.ndarray:
    """Unit vector of length ``2K`` from spherical angles.

    ``x_1 = cos(phi_1)``, ``x_i = sin(phi_1)...sin(phi_(i-1)) cos(phi_i)`` and
    the last component carries ``sin`` of every angle.
    """
    phi = np.asarray(d.angles, dtype=float)
    n = phi.size
    x = np.empty(n + 1)
    sin_prod = 1.0
    for i in range(n):
        x[i] = sin_prod * math.cos(phi[i])
        sin_prod *= math.sin(phi[i])
    x[n] = sin_prod
    return x


def harmonic_basis(omega: float, K: int, t) -> np.ndarray:
    """Rows ``[cos(w t), sin(w t), ..., cos(K w t), sin(K w t)]`` for each ``t``."""
    t = np.asarray(t, dtype=float)
    k = np.arange(1, K + 1)
    arg = np.multiply.outer(t, k * omega)
    out = np.empty(t.shape + (2 * K,))
    out[..., 0::2] = np.cos(arg)
    out[..., 1::2] = np.sin(arg)
    return out


def eval_shape_signal(h_unit, omega: float, K: int, t):
    """Evaluate the zero-mean signal ``H_unit . basis(t)``."""
    h_unit = np.asarray(h_unit, dtype=float)
    if h_unit.shape != (2 * K,):
        raise DomainError(f"amplitude vector must have length {2 * K}")
    return harmonic_basis(omega, K, t) @ h_unit


def span_grid(omega: float, n: int = SPAN_SAMPLES) -> np.ndarray:
    """``n`` evenly spaced points covering one period ``[0, 2 pi / omega)``."""
    if not omega > 0.0:
        raise DomainError(f"omega must be positive, got {omega!r}")
    return np.arange(n) * (2.0 * math.pi / omega / n)


def _span_of_samples(values: np.ndarray) -> Span:
    lo = float(np.min(values))
    hi = float(np.max(values))
    if hi - lo < _DEGENERACY_RTOL * max(1.0, abs(hi)):
        raise DegenerateShapeError(f"sampled signal is constant (min={lo!r}, max={hi!r})")
    return Span(lo, hi)


def estimate_span_numeric(signal: Callable, omega: float, n: int = SPAN_SAMPLES) -> Span:
    """Estimate (inf, sup) of a ``2 pi / omega``-periodic signal by sampling.

    ``signal`` must accept a numpy array of times.
    """
    t = span_grid(omega, n)
    values = np.broadcast_to(np.asarray(signal(t), dtype=float), t.shape)
    return _span_of_samples(values)


def normalize_shape(values, span: Span):
    """Affine map of ``values`` sending ``span.inf -> 0`` and ``span.sup -> 1``."""
    width = span.sup - span.inf
    if not width > 0.0:
        raise DegenerateShapeError("cannot normalize over an empty span")
    return (np.asarray(values, dtype=float) - span.inf) / width


def span_from_params(span: SpanParams, bounds: ControlBounds) -> Span:
    """Requested span from ``p, q``: ``sup = p(M-m)+m``, ``inf = (M-m)(1-q)p+m``."""
    width = bounds.M - bounds.m
    sup = span.p * width + bounds.m
    inf = width * (1.0 - span.q) * span.p + bounds.m
    return Span(inf, sup)


def _assemble(h_unit: np.ndarray, omega: float, span_params: SpanParams,
              bounds: ControlBounds) -> FourierSeriesControl:
    K = h_unit.size // 2
    samples = eval_shape_signal(h_unit, omega, K, span_grid(omega))
    sampled = _span_of_samples(samples)
    target = span_from_params(span_params, bounds)
    # f = shape * (sup - inf) + inf with shape = (s - s_min)/(s_max - s_min);
    # positive affine in s, so only a scale and an offset survive.
    scale = (target.sup - target.inf) / (sampled.sup - sampled.inf)
    coeffs = scale * h_unit
    a0 = 2.0 * (target.inf - scale * sampled.inf)
    return FourierSeriesControl(a0, tuple(coeffs[0::2]), tuple(coeffs[1::2]), omega)


def build_control(spec: ControlSpec) -> FourierSeriesControl:
    """Fourier coefficients of the control whose shape and span ``spec`` encodes."""
    h_unit = direction_to_cartesian(spec.direction)
    return _assemble(h_unit, spec.omega, spec.span, spec.bounds)


def build_control_from_harmonics(H, omega: float, span_params: SpanParams,
                                 bounds: ControlBounds) -> FourierSeriesControl:
    """Same as :func:`build_control` but starting from a raw amplitude vector.

    Only the direction of ``H`` matters; its length is normalized away.
    """
    H = np.asarray(H, dtype=float)
    if H.ndim != 1 or H.size == 0 or H.size % 2:
        raise DomainError("amplitude vector must have even, positive length")
    norm = float(np.linalg.norm(H))
    if norm == 0.0:
        raise DegenerateShapeError("amplitude vector is zero")
    return _assemble(H / norm, float(omega), span_params, bounds)


def eval_control(ctrl: FourierSeriesControl, t):
    """Value of the control at time(s) ``t``."""
    H = ctrl.amplitude_vector()
    out = 0.5 * ctrl.a0 + harmonic_basis(ctrl.omega, ctrl.K, t) @ H
    if np.ndim(out) == 0:
        return float(out)
    return out
