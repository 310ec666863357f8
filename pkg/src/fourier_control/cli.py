"""Command-line front end: ``simulate``, ``optimize`` and ``export-control``.

Exit codes: 0 success, 1 configuration error, 2 runtime/simulation error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import io
from .capsule import simulate
from .config import ExperimentConfig, load_config
from .errors import ConfigError, DomainError, FourierControlError, SimulationError
from .optimizer import optimize_capsule
from .parametrization import ControlSpec, FourierSeriesControl, build_control, eval_control

log = logging.getLogger("fourier_control")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _resolve_control(cfg: ExperimentConfig) -> FourierSeriesControl:
    if cfg.control is None:
        raise ConfigError("config has no 'control' section")
    if isinstance(cfg.control, ControlSpec):
        return build_control(cfg.control)
    return cfg.control


def _fourier_record(ctrl: FourierSeriesControl) -> dict:
    return {"a0": ctrl.a0, "omega": ctrl.omega, "a": list(ctrl.a), "b": list(ctrl.b)}


def _echo(cfg: ExperimentConfig) -> dict:
    d = cfg.to_dict()
    d["output"] = {k: v for k, v in d["output"].items() if k != "dir"}
    return d


def cmd_simulate(cfg: ExperimentConfig) -> dict:
    """Simulate the configured control; writes trajectory, events and summary files."""
    ctrl = _resolve_control(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        traj = simulate(ctrl, cfg.params, cfg.tau0, cfg.tau_f, cfg.initial, cfg.integrator,
                        n_samples=cfg.samples)
    except SimulationError as exc:
        events = getattr(exc, "events", [])
        io.write_table(out / "events.csv", ["tau", "kind"],
                       [[e[0] for e in events], [e[1] for e in events]])
        for tau, kind in events[-5:]:
            log.error("event before failure: tau=%.12g %s", tau, kind)
        raise
    traj.write_csv(out / "trajectory.csv", out / "events.csv")
    summary = {
        "config_hash": cfg.config_hash(),
        "seed": cfg.de.seed,
        "J": traj.cost_J,
        "z_start": traj.z_start,
        "z_end": traj.z_end,
        "n_events": len(traj.events),
        "stick_slip_cycles": traj.stick_slip_cycles(),
        "control": _fourier_record(ctrl),
        "outputs": {"trajectory": "trajectory.csv", "events": "events.csv"},
    }
    io.write_json(summary, out / "summary.json")
    return summary


def cmd_optimize(cfg: ExperimentConfig, figures: bool = False) -> list[dict]:
    """DE run per harmonic count; writes manifests, controls, trajectories and figure data."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    chash = cfg.config_hash()
    manifests, trajectories, controls = [], {}, {}
    for K in cfg.k_list:
        problem = cfg.problem(K)
        bounds = problem.bounds_vector()
        log.info("optimizing K=%d (D=%d, population %d)", K, bounds.dim,
                 cfg.de.population_size(bounds.dim))
        result = optimize_capsule(problem, cfg.de)
        spec = problem.decode(result.x)
        ctrl = build_control(spec)
        traj = simulate(ctrl, cfg.params, cfg.tau0, cfg.tau_f, cfg.initial, cfg.integrator,
                        n_samples=cfg.samples)
        names = {
            "manifest": f"manifest_K{K}.json",
            "control": f"best_control_K{K}.csv",
            "samples": f"control_K{K}.csv",
            "trajectory": f"trajectory_K{K}.csv",
            "events": f"events_K{K}.csv",
        }
        io.write_fourier_csv(ctrl, out / names["control"])
        io.write_control_samples(ctrl, out / names["samples"], cfg.control_points)
        traj.write_csv(out / names["trajectory"], out / names["events"])
        manifest = {
            "config_hash": chash,
            "seed": cfg.de.seed,
            "K": K,
            "config": _echo(cfg),
            "bounds": {"names": list(bounds.names), "lo": list(bounds.lo), "hi": list(bounds.hi)},
            "best_vector": [float(v) for v in result.x],
            "best_spec": spec.to_record(),
            "best_fourier": _fourier_record(ctrl),
            "best_J": result.cost,
            "distance": abs(result.cost),
            "z_end": traj.z_end,
            "history": result.history,
            "n_evaluations": result.n_evaluations,
            "n_generations": result.n_generations,
            "converged": result.converged,
            "n_nonfinite": result.n_nonfinite,
            "stick_slip_cycles": traj.stick_slip_cycles(),
            "outputs": {k: v for k, v in names.items() if k != "manifest"},
        }
        io.write_json(manifest, out / names["manifest"])
        manifests.append(manifest)
        trajectories[K] = traj
        controls[K] = ctrl

    ks = list(cfg.k_list)
    io.write_table(out / "fig5.csv", ["K", "distance"], [ks, [m["distance"] for m in manifests]])
    grid = np.linspace(cfg.tau0, cfg.tau_f, cfg.samples)
    io.write_table(out / "fig6.csv", ["tau"] + [f"z_K{k}" for k in ks],
                   [grid] + [np.interp(grid, trajectories[k].tau, trajectories[k].z) for k in ks])
    longest = max(2.0 * math.pi / controls[k].omega for k in ks)
    tau7 = np.linspace(0.0, longest, cfg.control_points)
    io.write_table(out / "fig7.csv", ["tau"] + [f"u1_K{k}" for k in ks],
                   [tau7] + [np.atleast_1d(eval_control(controls[k], tau7)) for k in ks])
    if figures:
        from .plotting import render_figures

        render_figures(out, ks, manifests, trajectories, controls)
    return manifests


def cmd_export_control(cfg: ExperimentConfig | None, manifest_path=None,
                       points: int | None = None, out_dir: str | None = None) -> Path:
    """Write ``control_samples.csv`` (tau,u1 over one period) and the coefficient file."""
    if manifest_path is not None:
        manifest = io.read_json(manifest_path)
        try:
            spec = ControlSpec.from_record(manifest["best_spec"])
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"{manifest_path}: manifest lacks a valid best_spec ({exc})") from None
        except DomainError as exc:
            raise ConfigError(f"{manifest_path}: {exc}") from None
        ctrl = build_control(spec)
        default_dir = str(Path(manifest_path).parent)
    else:
        ctrl = _resolve_control(cfg)
        default_dir = cfg.out_dir
    n = points if points is not None else (cfg.control_points if cfg is not None else 2000)
    if n < 1:
        raise ConfigError("--points must be >= 1")
    out = Path(out_dir or default_dir)
    out.mkdir(parents=True, exist_ok=True)
    io.write_control_samples(ctrl, out / "control_samples.csv", n)
    io.write_fourier_csv(ctrl, out / "control_coefficients.csv")
    return out


def _k_list(text: str) -> list[int]:
    try:
        ks = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad K list {text!r}; use e.g. 1,2,3") from None
    if not ks or any(k < 1 for k in ks):
        raise argparse.ArgumentTypeError("K values must be positive integers")
    return ks


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fourier-control", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="YAML experiment config")
        p.add_argument("--seed", type=int, help="override de.seed")
        p.add_argument("--out-dir", help="override output.dir")
        p.add_argument("--k-list", type=_k_list, help="override k_list, e.g. 1,2,3")

    common(sub.add_parser("simulate", help="simulate one control"))
    p = sub.add_parser("optimize", help="DE optimization for each K in k_list")
    common(p)
    p.add_argument("--figures", action="store_true", help="also render PNG figures")
    p = sub.add_parser("export-control", help="sample a control over one period")
    common(p, config_required=False)
    p.add_argument("--manifest", help="take the best spec from an optimize manifest")
    p.add_argument("--points", type=int, help="number of samples (default 2000)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = None
        if args.config is not None:
            cfg = load_config(args.config).with_overrides(args.seed, args.out_dir, args.k_list)
        if args.command == "simulate":
            summary = cmd_simulate(cfg)
            print(f"J={summary['J']!r} z_end={summary['z_end']!r} events={summary['n_events']}")
        elif args.command == "optimize":
            for m in cmd_optimize(cfg, figures=args.figures):
                print(f"K={m['K']} distance={m['distance']!r} generations={m['n_generations']}")
        else:
            if cfg is None and args.manifest is None:
                raise ConfigError("export-control needs --config or --manifest")
            out = cmd_export_control(cfg, args.manifest, args.points, args.out_dir)
            print(f"wrote {out / 'control_samples.csv'}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DomainError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationError as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except FourierControlError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
