"""Differential Evolution over box bounds and the capsule progression objective."""

from __future__ import annotations

import logging
import math
import multiprocessing
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .capsule import CapsuleParams, CapsuleState, progression_cost
from .errors import DegenerateShapeError, DomainError, SimulationError
from .ode import IntegratorSettings
from .parametrization import LAST_ANGLE_MAX, P_MIN, ControlBounds, ControlSpec, build_control

log = logging.getLogger(__name__)

STRATEGIES = ("rand1bin", "best1bin")


@dataclass(frozen=True)
class BoundsVector:
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    names: tuple[str, ...] = ()

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != len(hi) or not lo:
            raise DomainError("bounds need matching, non-empty lo/hi")
        for i, (a, b) in enumerate(zip(lo, hi)):
            if not a < b:
                raise DomainError(f"coordinate {i}: need lo < hi, got ({a}, {b})")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if self.names and len(self.names) != len(lo):
            raise DomainError("one name per coordinate")

    @property
    def dim(self) -> int:
        return len(self.lo)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array(self.lo), np.array(self.hi)

    def contains(self, x) -> bool:
        lo, hi = self.arrays()
        x = np.asarray(x)
        return bool(np.all(x >= lo) and np.all(x <= hi))


@dataclass(frozen=True)
class DEConfig:
    """DE hyperparameters; ``population=None`` means ``popsize_factor * D``."""

    population: int | None = None
    popsize_factor: int = 15
    mutation: tuple[float, float] = (0.5, 1.0)
    crossover: float = 0.7
    max_generations: int = 1000
    tol: float = 0.01
    atol: float = 0.0
    seed: int = 0
    strategy: str = "rand1bin"
    workers: int = 1

    def __post_init__(self):
        lo, hi = self.mutation
        if not 0.0 < lo <= hi <= 2.0:
            raise DomainError(f"mutation range must lie in (0, 2], got {self.mutation}")
        if not 0.0 <= self.crossover <= 1.0:
            raise DomainError("crossover probability must be in [0, 1]")
        if self.population is not None and self.population < 4:
            raise DomainError("population must be >= 4")
        if self.popsize_factor < 1 or self.max_generations < 0 or self.workers < 1:
            raise DomainError("popsize_factor, workers >= 1 and max_generations >= 0 required")
        if self.strategy not in STRATEGIES:
            raise DomainError(f"unknown strategy {self.strategy!r}; choose from {STRATEGIES}")

    def population_size(self, dim: int) -> int:
        n = self.population if self.population is not None else self.popsize_factor * dim
        return max(n, 4)


@dataclass
class OptimizationResult:
    x: np.ndarray
    cost: float
    history: list[float]
    n_evaluations: int
    seed: int
    n_generations: int
    converged: bool
    n_nonfinite: int = 0


def reflect_into(x: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Mirror coordinates back into ``[lo, hi]`` (repeatedly for large overshoots)."""
    width = hi - lo
    y = np.mod(x - lo, 2.0 * width)
    y = np.where(y > width, 2.0 * width - y, y)
    return np.clip(lo + y, lo, hi)


def _latin_hypercube(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    u = rng.random((n, dim))
    out = np.empty((n, dim))
    for j in range(dim):
        out[:, j] = (rng.permutation(n) + u[:, j]) / n
    return out


def _evaluate(cost, pop, pool):
    values = pool.map(cost, list(pop)) if pool is not None else [cost(x) for x in pop]
    out = np.array(values, dtype=float)
    bad = ~np.isfinite(out)
    if bad.any():
        log.warning("%d non-finite cost value(s) replaced by +inf", int(bad.sum()))
        out[bad] = np.inf
    return out, int(bad.sum())


def optimize(cost: Callable[[np.ndarray], float], bounds: BoundsVector,
             config: DEConfig = DEConfig(),
             callback: Callable[[int, np.ndarray, float], None] | None = None) -> OptimizationResult:
    """Minimize ``cost`` over the box with Differential Evolution.

    Each generation builds all trial vectors first (mutation factor dithered
    once per generation, binomial crossover, reflection into the box), then
    evaluates them as one batch, so results do not depend on evaluation order
    and the run is reproducible from ``config.seed``.
    """
    rng = np.random.default_rng(config.seed)
    lo, hi = bounds.arrays()
    dim = bounds.dim
    n = config.population_size(dim)
    pop = lo + _latin_hypercube(rng, n, dim) * (hi - lo)

    pool = None
    if config.workers > 1:
        pool = multiprocessing.get_context("fork").Pool(config.workers)
    try:
        energies, n_bad = _evaluate(cost, pop, pool)
        n_evals = n
        best = int(np.argmin(energies))
        history = [float(energies[best])]
        converged = False
        gen = 0
        for gen in range(1, config.max_generations + 1):
            F = rng.uniform(*config.mutation)
            trials = np.empty_like(pop)
            for i in range(n):
                choices = rng.choice(n - 1, size=3, replace=False)
                r1, r2, r3 = (c + (c >= i) for c in choices)
                base = pop[best] if config.strategy == "best1bin" else pop[r1]
                mutant = base + F * (pop[r2] - pop[r3])
                cross = rng.random(dim) < config.crossover
                cross[rng.integers(dim)] = True
                trials[i] = np.where(cross, mutant, pop[i])
            trials = reflect_into(trials, lo, hi)
            trial_e, bad = _evaluate(cost, trials, pool)
            n_bad += bad
            n_evals += n
            improved = trial_e <= energies
            pop[improved] = trials[improved]
            energies[improved] = trial_e[improved]
            best = int(np.argmin(energies))
            history.append(float(energies[best]))
            if callback is not None:
                callback(gen, pop[best].copy(), float(energies[best]))
            if np.all(np.isfinite(energies)):
                spread = float(np.std(energies))
                if spread <= config.atol + config.tol * abs(float(np.mean(energies))):
                    converged = True
                    break
    finally:
        if pool is not None:
            pool.close()
            pool.join()
    return OptimizationResult(x=pop[best].copy(), cost=float(energies[best]), history=history,
                              n_evaluations=n_evals, seed=config.seed, n_generations=gen,
                              converged=converged, n_nonfinite=n_bad)


# --------------------------------------------------------------------------
# capsule objective
# --------------------------------------------------------------------------

def capsule_cost(x, K: int, bounds: ControlBounds = ControlBounds(-4.0, 4.0),
                 params: CapsuleParams = CapsuleParams(), tau0: float = 0.0,
                 tau_f: float = 100.0, omega: float | None = None,
                 initial: CapsuleState | None = None,
                 settings: IntegratorSettings = IntegratorSettings()) -> float:
    """``J = -|z(tau_f) - z(tau0)|`` of the control decoded from ``x``.

    ``x = [phi_1..phi_(2K-1), p, q]`` plus a trailing ``omega`` unless a fixed
    ``omega`` is given.  Runs that fail (contact loss, integration or event
    errors, degenerate shapes) cost 0, the same as not moving at all.
    """
    try:
        spec = ControlSpec.from_vector(x, K, bounds, omega)
        return progression_cost(build_control(spec), params, tau0, tau_f, initial, settings)
    except (SimulationError, DegenerateShapeError) as exc:
        log.debug("penalized candidate %s: %s", np.asarray(x).tolist(), exc)
        return 0.0


@dataclass
class CapsuleProblem:
    """Everything needed to turn a parameter vector into a progression cost."""

    K: int
    bounds: ControlBounds = field(default_factory=lambda: ControlBounds(-4.0, 4.0))
    params: CapsuleParams = field(default_factory=CapsuleParams)
    tau0: float = 0.0
    tau_f: float = 100.0
    omega_mode: str = "free"
    omega_upper: float = 10.0
    initial: CapsuleState | None = None
    settings: IntegratorSettings = field(default_factory=IntegratorSettings)

    def __post_init__(self):
        if self.K < 1:
            raise DomainError("K must be a positive integer")
        if self.omega_mode not in ("free", "fixed"):
            raise DomainError(f"omega_mode must be 'free' or 'fixed', got {self.omega_mode!r}")
        if self.omega_mode == "free" and not self.omega_upper > self.omega_min:
            raise DomainError("omega upper bound must exceed 2*pi/(tau_f - tau0)")

    @property
    def omega_min(self) -> float:
        return 2.0 * math.pi / (self.tau_f - self.tau0)

    @property
    def fixed_omega(self) -> float | None:
        return self.omega_min if self.omega_mode == "fixed" else None

    def bounds_vector(self) -> BoundsVector:
        n = 2 * self.K - 1
        lo = [0.0] * n + [P_MIN, P_MIN]
        hi = [math.pi] * (n - 1) + [LAST_ANGLE_MAX, 1.0, 1.0]
        names = [f"phi_{i + 1}" for i in range(n)] + ["p", "q"]
        if self.omega_mode == "free":
            lo.append(self.omega_min)
            hi.append(self.omega_upper)
            names.append("omega")
        return BoundsVector(tuple(lo), tuple(hi), tuple(names))

    def decode(self, x) -> ControlSpec:
        return ControlSpec.from_vector(x, self.K, self.bounds, self.fixed_omega)

    def __call__(self, x) -> float:
        return capsule_cost(x, self.K, self.bounds, self.params, self.tau0, self.tau_f,
                            self.fixed_omega, self.initial, self.settings)


def optimize_capsule(problem: CapsuleProblem, config: DEConfig = DEConfig(),
                     callback=None) -> OptimizationResult:
    return optimize(problem, problem.bounds_vector(), config, callback)

