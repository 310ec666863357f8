"""Flat-file formats: Fourier coefficient CSV, control sample CSV, JSON records.

Numbers are written with 17 significant digits so doubles round-trip.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .parametrization import FourierSeriesControl, eval_control


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_fourier_csv(ctrl: FourierSeriesControl, path) -> None:
    """Coefficient file: ``# a0=`` and ``# omega=`` header lines, then ``k,a_k,b_k`` rows."""
    with Path(path).open("w", newline="") as fh:
        fh.write(f"# a0={fmt(ctrl.a0)}\n# omega={fmt(ctrl.omega)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "a_k", "b_k"])
        for k, (a, b) in enumerate(ctrl.harmonics, start=1):
            w.writerow([k, fmt(a), fmt(b)])


def read_fourier_csv(path) -> FourierSeriesControl:
    path = Path(path)
    header: dict[str, float] = {}
    rows = []
    with path.open() as fh:
        lines = fh.read().splitlines()
    body = []
    for n, line in enumerate(lines, start=1):
        if line.startswith("#"):
            key, sep, value = line[1:].strip().partition("=")
            if not sep or key.strip() not in ("a0", "omega"):
                raise ConfigError(f"{path}:{n}: expected '# a0=<v>' or '# omega=<v>'")
            try:
                header[key.strip()] = float(value)
            except ValueError:
                raise ConfigError(f"{path}:{n}: bad number {value!r}") from None
        elif line.strip():
            body.append((n, line))
    if set(header) != {"a0", "omega"}:
        raise ConfigError(f"{path}: missing a0/omega header lines")
    if not body or body[0][1].replace(" ", "") != "k,a_k,b_k":
        raise ConfigError(f"{path}: expected column header 'k,a_k,b_k'")
    for n, line in body[1:]:
        parts = line.split(",")
        try:
            k, a, b = int(parts[0]), float(parts[1]), float(parts[2])
        except (ValueError, IndexError):
            raise ConfigError(f"{path}:{n}: malformed coefficient row {line!r}") from None
        if k != len(rows) + 1:
            raise ConfigError(f"{path}:{n}: harmonic index {k} out of order")
        rows.append((a, b))
    if not rows:
        raise ConfigError(f"{path}: no harmonic rows")
    return FourierSeriesControl(header["a0"], tuple(r[0] for r in rows),
                                tuple(r[1] for r in rows), header["omega"])


def control_sample_grid(omega: float, n: int) -> np.ndarray:
    """``n`` points over one period ``[0, 2 pi / omega)``; ``n = 1`` gives ``[0]``."""
    return np.arange(n) * (2.0 * math.pi / omega / n)


def write_control_samples(ctrl: FourierSeriesControl, path, n: int = 2000) -> np.ndarray:
    tau = control_sample_grid(ctrl.omega, n)
    u = np.atleast_1d(eval_control(ctrl, tau))
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tau", "u1"])
        for t, v in zip(tau, u):
            w.writerow([fmt(t), fmt(v)])
    return u


def write_table(path, header: list[str], columns: list) -> None:
    cols = [np.asarray(c) for c in columns]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*cols):
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def write_json(data: dict, path) -> None:
    with Path(path).open("w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path) -> dict:
    try:
        with Path(path).open() as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
