"""Experiment configuration: a strict YAML schema with line-level diagnostics.

Every section is optional and falls back to the reference experiment
(mu=0.3, rho=2.5, nu=1.0, gamma=10, u in [-4, 4], tau in [0, 100], start at
rest, omega free up to 10).  Unknown keys are errors.  Example::

    plant: {mu: 0.3, rho: 2.5, nu: 1.0, gamma: 10.0}
    bounds: {m: -4.0, M: 4.0}
    time: {tau0: 0.0, tau_f: 100.0}
    initial_state: {theta: 0.0, theta_dot: 0.0, z: 0.0, z_dot: 0.0}
    k_list: [1, 2]
    omega: {mode: free, upper: 10.0}
    de: {popsize_factor: 15, mutation: [0.5, 1.0], crossover: 0.7,
         max_generations: 300, tol: 0.01, seed: 1, strategy: rand1bin}
    integrator: {abs_tol: 1.0e-9, rel_tol: 1.0e-12, event_time_tol: 1.0e-10}
    output: {dir: out, samples: 2000, control_points: 2000}
    control:
      spec: {K: 1, phi: [1.5707963267948966], p: 1.0, q: 1.0, omega: 1.0}
      # or  fourier: {a0: 0.0, omega: 1.0, a: [0.0], b: [4.0]}
      # or  fourier_csv: best_control_K1.csv
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import yaml

from .capsule import CapsuleParams, CapsuleState
from .errors import ConfigError, FourierControlError
from .ode import IntegratorSettings
from .optimizer import CapsuleProblem, DEConfig
from .parametrization import ControlBounds, ControlSpec, FourierSeriesControl


def _num(v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise TypeError("expected a number")
    return float(v)


def _opt_num(v):
    return None if v is None else _num(v)


def _int(v):
    if isinstance(v, bool) or not isinstance(v, int):
        raise TypeError("expected an integer")
    return v


def _opt_int(v):
    return None if v is None else _int(v)


def _str(v):
    if not isinstance(v, str):
        raise TypeError("expected a string")
    return v


def _num_list(v):
    if not isinstance(v, list):
        raise TypeError("expected a list of numbers")
    return [_num(x) for x in v]


def _int_list(v):
    if not isinstance(v, list) or not v:
        raise TypeError("expected a non-empty list of integers")
    return [_int(x) for x in v]


_SCHEMA: dict[str, Any] = {
    "plant": {"mu": _num, "rho": _num, "nu": _num, "gamma": _num},
    "bounds": {"m": _num, "M": _num},
    "time": {"tau0": _num, "tau_f": _num},
    "initial_state": {"theta": _num, "theta_dot": _num, "z": _num, "z_dot": _num},
    "k_list": _int_list,
    "omega": {"mode": _str, "upper": _num},
    "de": {"population": _opt_int, "popsize_factor": _int, "mutation": _num_list,
           "crossover": _num, "max_generations": _int, "tol": _num, "atol": _num,
           "seed": _int, "strategy": _str, "workers": _int},
    "integrator": {"abs_tol": _num, "rel_tol": _num, "h_init": _num, "h_min": _num,
                   "h_max": _opt_num, "event_time_tol": _num, "max_bisections": _int},
    "output": {"dir": _str, "samples": _int, "control_points": _int},
    "control": {
        "spec": {"K": _int, "phi": _num_list, "p": _num, "q": _num, "omega": _num,
                 "m": _num, "M": _num},
        "fourier": {"a0": _num, "omega": _num, "a": _num_list, "b": _num_list},
        "fourier_csv": _str,
    },
}


def _line(node) -> int:
    return node.start_mark.line + 1


def _convert(node, schema, path: str, source: str):
    """Walk a composed YAML node against ``schema``; returns plain Python data."""
    if isinstance(schema, dict):
        if not isinstance(node, yaml.MappingNode):
            raise ConfigError(f"{source}:{_line(node)}: '{path or '<root>'}' must be a mapping")
        out = {}
        for key_node, value_node in node.value:
            key = key_node.value
            where = f"{path}.{key}" if path else key
            if key not in schema:
                raise ConfigError(f"{source}:{_line(key_node)}: unknown key '{where}'")
            if key in out:
                raise ConfigError(f"{source}:{_line(key_node)}: duplicate key '{where}'")
            out[key] = _convert(value_node, schema[key], where, source)
        return out
    data = yaml.safe_load(yaml.serialize(node)) if node is not None else None
    try:
        return schema(data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}:{_line(node)}: '{path}': {exc} (got {data!r})") from None


@dataclass(frozen=True)
class ExperimentConfig:
    params: CapsuleParams = field(default_factory=CapsuleParams)
    bounds: ControlBounds = field(default_factory=lambda: ControlBounds(-4.0, 4.0))
    tau0: float = 0.0
    tau_f: float = 100.0
    initial: CapsuleState = field(default_factory=CapsuleState)
    k_list: tuple[int, ...] = (1,)
    omega_mode: str = "free"
    omega_upper: float = 10.0
    de: DEConfig = field(default_factory=DEConfig)
    integrator: IntegratorSettings = field(default_factory=IntegratorSettings)
    out_dir: str = "out"
    samples: int = 2000
    control_points: int = 2000
    control: ControlSpec | FourierSeriesControl | None = None
    control_source: dict | None = None

    def __post_init__(self):
        if not self.tau_f > self.tau0:
            raise ConfigError("time.tau_f must exceed time.tau0")
        if any(k < 1 for k in self.k_list):
            raise ConfigError("k_list entries must be positive integers")
        if self.samples < 2 or self.control_points < 1:
            raise ConfigError("output.samples must be >= 2 and output.control_points >= 1")

    def problem(self, K: int) -> CapsuleProblem:
        return CapsuleProblem(K=K, bounds=self.bounds, params=self.params, tau0=self.tau0,
                              tau_f=self.tau_f, omega_mode=self.omega_mode,
                              omega_upper=self.omega_upper, initial=self.initial,
                              settings=self.integrator)

    def to_dict(self) -> dict:
        """Resolved configuration in the same layout as the YAML schema."""
        return {
            "plant": asdict(self.params),
            "bounds": {"m": self.bounds.m, "M": self.bounds.M},
            "time": {"tau0": self.tau0, "tau_f": self.tau_f},
            "initial_state": {"theta": self.initial.theta, "theta_dot": self.initial.theta_dot,
                              "z": self.initial.z, "z_dot": self.initial.z_dot},
            "k_list": list(self.k_list),
            "omega": {"mode": self.omega_mode, "upper": self.omega_upper},
            "de": {**asdict(self.de), "mutation": list(self.de.mutation)},
            "integrator": asdict(self.integrator),
            "output": {"dir": self.out_dir, "samples": self.samples,
                       "control_points": self.control_points},
            "control": self.control_source,
        }

    def config_hash(self) -> str:
        """Digest of the resolved configuration, output directory excluded."""
        d = self.to_dict()
        d["output"] = {k: v for k, v in d["output"].items() if k != "dir"}
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def with_overrides(self, seed: int | None = None, out_dir: str | None = None,
                       k_list: list[int] | None = None) -> "ExperimentConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, de=replace(cfg.de, seed=seed))
        if out_dir is not None:
            cfg = replace(cfg, out_dir=out_dir)
        if k_list is not None:
            cfg = replace(cfg, k_list=tuple(k_list))
        return cfg


def _build(raw: dict, source: str, base_dir: Path) -> ExperimentConfig:
    kw: dict[str, Any] = {}
    try:
        if "plant" in raw:
            kw["params"] = CapsuleParams(**raw["plant"])
        bounds = ControlBounds(**{"m": -4.0, "M": 4.0, **raw.get("bounds", {})})
        kw["bounds"] = bounds
        t = raw.get("time", {})
        kw["tau0"] = t.get("tau0", 0.0)
        kw["tau_f"] = t.get("tau_f", 100.0)
        init = raw.get("initial_state", {})
        kw["initial"] = CapsuleState(tau=kw["tau0"], **init)
        if "k_list" in raw:
            kw["k_list"] = tuple(raw["k_list"])
        om = raw.get("omega", {})
        kw["omega_mode"] = om.get("mode", "free")
        kw["omega_upper"] = om.get("upper", 10.0)
        if kw["omega_mode"] not in ("free", "fixed"):
            raise ConfigError(f"{source}: omega.mode must be 'free' or 'fixed'")
        if "de" in raw:
            de = dict(raw["de"])
            if "mutation" in de:
                if len(de["mutation"]) != 2:
                    raise ConfigError(f"{source}: de.mutation must be [low, high]")
                de["mutation"] = tuple(de["mutation"])
            kw["de"] = DEConfig(**de)
        if "integrator" in raw:
            kw["integrator"] = IntegratorSettings(**raw["integrator"])
        out = raw.get("output", {})
        kw["out_dir"] = out.get("dir", "out")
        kw["samples"] = out.get("samples", 2000)
        kw["control_points"] = out.get("control_points", 2000)
        ctl = raw.get("control")
        if ctl:
            if len(ctl) != 1:
                raise ConfigError(f"{source}: control needs exactly one of spec, fourier, fourier_csv")
            kw["control_source"] = ctl
            kind, body = next(iter(ctl.items()))
            if kind == "spec":
                rec = {"m": bounds.m, "M": bounds.M, **body}
                if "phi" not in rec or not all(k in rec for k in ("p", "q", "omega")):
                    raise ConfigError(f"{source}: control.spec needs phi, p, q and omega")
                kw["control"] = ControlSpec.from_record(rec)
            elif kind == "fourier":
                missing = {"a0", "omega", "a", "b"} - set(body)
                if missing:
                    raise ConfigError(f"{source}: control.fourier misses {sorted(missing)}")
                kw["control"] = FourierSeriesControl(body["a0"], tuple(body["a"]),
                                                     tuple(body["b"]), body["omega"])
            else:
                from .io import read_fourier_csv

                path = Path(body)
                if not path.is_absolute():
                    path = base_dir / path
                kw["control"] = read_fourier_csv(path)
        return ExperimentConfig(**kw)
    except ConfigError as exc:
        if str(exc).startswith(source):
            raise
        raise ConfigError(f"{source}: {exc}") from None
    except (FourierControlError, ValueError, TypeError, OSError) as exc:
        raise ConfigError(f"{source}: {exc}") from None


def parse_config(text: str, source: str = "<config>", base_dir: Path | str = ".") -> ExperimentConfig:
    try:
        node = yaml.compose(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{source}: YAML syntax error: {exc}") from None
    raw = {} if node is None else _convert(node, _SCHEMA, "", source)
    return _build(raw, source, Path(base_dir))


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path), path.parent)

