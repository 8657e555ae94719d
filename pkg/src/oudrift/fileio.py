"""Model files, path CSVs and result tables.

Model files are JSON objects. Either give the matrices directly::

    {"F": [[0, 1], [-2, -3]], "A": [[0], [1]], "Y0": [0, 0]}

or a CAR(p) specification::

    {"car": {"alphas": [-3, -2], "sigma": 1.0}}

Matrices may be nested lists or flat row-major lists; a flat list is shaped
by ``"p"`` and ``"r"`` (or explicit ``"F_shape"`` / ``"A_shape"``), and a
flat F of square length needs neither. ``A`` defaults to the identity and ``Y0`` to
zero. ``"check_rank": false`` builds a model that fails the RANK condition.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from typing import Iterable, Optional, Tuple

import numpy as np

from .errors import ConfigError, DimensionError
from .model import OUModel, car_model

MODEL_KEYS = ("F", "A", "Y0", "F_shape", "A_shape", "p", "r", "car", "check_rank", "name")


def fmt(x: float) -> str:
    """17 significant digits, enough to round-trip a double."""
    return format(float(x), ".17g")


def _matrix(spec: dict, key: str, default=None, hint=None) -> Optional[np.ndarray]:
    if key not in spec:
        return default
    try:
        val = np.asarray(spec[key], dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be numeric") from None
    shape_key = f"{key}_shape"
    shape = tuple(int(n) for n in spec[shape_key]) if shape_key in spec else hint
    if val.ndim == 1 and shape is None and key == "F":
        n = math.isqrt(val.size)
        if n * n == val.size:
            shape = (n, n)
    if val.ndim == 1 and shape is not None:
        try:
            val = val.reshape(shape)
        except ValueError as exc:
            raise ConfigError(f"{key} does not match its declared shape: {exc}") from None
    if val.ndim != 2:
        raise ConfigError(f"{key} must be a matrix")
    return val


def model_from_dict(spec: dict) -> OUModel:
    """Build an :class:`OUModel` from a decoded model file."""
    if not isinstance(spec, dict):
        raise ConfigError("model specification must be an object")
    unknown = set(spec) - set(MODEL_KEYS)
    if unknown:
        raise ConfigError(f"unknown model keys: {sorted(unknown)}")
    Y0 = spec.get("Y0")
    if "car" in spec:
        car = spec["car"]
        if "F" in spec or "A" in spec:
            raise ConfigError("give either 'car' or explicit matrices, not both")
        try:
            return car_model(car["alphas"], float(car.get("sigma", 1.0)), Y0)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad CAR specification: {exc}") from None
    if "F" not in spec:
        raise ConfigError("model needs 'F' or 'car'")
    p = int(spec["p"]) if "p" in spec else None
    F = _matrix(spec, "F", hint=(p, p) if p else None)
    p = F.shape[0]
    r = int(spec["r"]) if "r" in spec else None
    a_hint = (p, r) if r else (p, -1)
    A = _matrix(spec, "A", np.eye(p), hint=a_hint)
    try:
        return OUModel(F, A, Y0, check_rank=bool(spec.get("check_rank", True)))
    except DimensionError as exc:
        raise ConfigError(str(exc)) from None


def model_to_dict(model: OUModel) -> dict:
    return {"F": model.F.tolist(), "A": model.A.tolist(), "Y0": model.Y0.tolist()}


def read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def load_model(path) -> OUModel:
    return model_from_dict(read_json(path))


def write_path_csv(target, times, path) -> None:
    """Write ``t,y1,...,yp`` rows at 17 significant digits."""
    path = np.asarray(path, dtype=float)
    if path.ndim == 1:
        path = path[:, None]
    times = np.asarray(times, dtype=float)
    if times.shape[0] != path.shape[0]:
        raise DimensionError("times and path lengths differ")
    header = ["t"] + [f"y{i + 1}" for i in range(path.shape[1])]
    lines = [",".join(header)]
    for t, row in zip(times, path):
        lines.append(",".join([fmt(t)] + [fmt(v) for v in row]))
    text = "\n".join(lines) + "\n"
    if hasattr(target, "write"):
        target.write(text)
    else:
        with open(target, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def read_path_csv(source, rtol: float = 1e-9) -> Tuple[np.ndarray, np.ndarray, float]:
    """Read a path CSV; returns ``(times, path, dt)``.

    The grid must be uniform: every step within ``rtol * max(1, t_end)`` of
    ``t[1] - t[0]``.
    """
    if hasattr(source, "read"):
        text = source.read()
    else:
        try:
            with open(source, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read {source}: {exc.strerror}") from None
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r]
    if not rows:
        raise ConfigError("empty path file")
    header = [h.strip() for h in rows[0]]
    p = len(header) - 1
    if p < 1 or header != ["t"] + [f"y{i + 1}" for i in range(p)]:
        raise ConfigError("path header must be t,y1,...,yp")
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise ConfigError(f"non-numeric path entry: {exc}") from None
    if data.ndim != 2 or data.shape[0] < 2 or data.shape[1] != p + 1:
        raise ConfigError("path needs at least two rows of p+1 columns")
    if not np.all(np.isfinite(data)):
        raise ConfigError("path contains non-finite values")
    t = data[:, 0]
    dt = float(t[1] - t[0])
    if not dt > 0:
        raise ConfigError("time column must be increasing")
    if np.max(np.abs(np.diff(t) - dt)) > rtol * max(1.0, abs(t[-1])):
        raise ConfigError("path grid is not uniform; resample before estimating")
    return t, data[:, 1:], dt


def write_records_csv(path, records: Iterable[tuple]) -> None:
    """Write ``T,seed,stat_name,value`` rows."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("T,seed,stat_name,value\n")
        for T, seed, name, value in records:
            fh.write(f"{fmt(T)},{int(seed)},{name},{fmt(value)}\n")


def write_table_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) if isinstance(v, float) else str(v) for v in row) + "\n")


def ensure_dir(path) -> str:
    os.makedirs(path, exist_ok=True)
    return str(path)
