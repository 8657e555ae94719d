"""Empirical checks of the estimator's asymptotic laws on simulated paths.

Almost-sure statements are tested as quantiles over replicates. Each check
returns a small result object with the per-replicate series and a
``records()`` method yielding ``(T, seed, stat_name, value)`` rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import linalg
from .errors import ConfigError, DomainError, SingularStatsError
from .model import OUModel, SpectrumReport, classify
from .simulate import BatchResult, replicate_seed, normalized_martingale_batch, simulate_batch
from .splitting import split_half_planes

UNSTABLE_HORIZON = 40.0
MAX_GROWTH_EXPONENT = 300.0
LEFT_CLASSES = ("stable", "imaginary", "zero", "left-mixed")


@dataclass(frozen=True)
class GrowthFit:
    """Least-squares fit of ``y = c e^{aT}`` (log-linear) or ``y = c T^a`` (log-log)."""

    xs: Tuple[float, ...]
    ys: Tuple[float, ...]
    model: str
    slope_a: float
    intercept_c: float
    r2: float


def fit_growth(xs, ys, model: str = "log-log") -> GrowthFit:
    """Fit a growth law by ordinary least squares on transformed coordinates."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ConfigError("xs and ys must be 1-d and of equal length")
    if xs.size < 4:
        raise ConfigError("a growth fit needs at least 4 points")
    if np.any(~(ys > 0)):
        raise DomainError("growth fits need strictly positive values")
    if model == "log-linear":
        u = xs
    elif model == "log-log":
        if np.any(xs <= 0):
            raise DomainError("log-log fits need positive abscissae")
        u = np.log(xs)
    else:
        raise ConfigError(f"unknown growth model {model!r}")
    v = np.log(ys)
    slope, icpt = np.polyfit(u, v, 1)
    resid = v - (slope * u + icpt)
    ss_tot = float(np.sum((v - v.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return GrowthFit(
        xs=tuple(xs.tolist()),
        ys=tuple(ys.tolist()),
        model=model,
        slope_a=float(slope),
        intercept_c=float(math.exp(icpt)),
        r2=min(max(r2, 0.0), 1.0),
    )


def check_unstable_horizon(report: SpectrumReport, T_max: float):
    """Refuse horizons where the raw unstable path would overflow.

    The cap is ``T <= 40 / lambda0`` together with ``Lambda0 T <= 300``.
    """
    if report.p0 == 0:
        return
    if T_max > UNSTABLE_HORIZON / report.lambda0:
        raise ConfigError(
            f"T={T_max:g} exceeds the unstable horizon cap 40/lambda0={UNSTABLE_HORIZON / report.lambda0:g}"
        )
    if report.Lambda0 * T_max > MAX_GROWTH_EXPONENT:
        raise ConfigError(f"T={T_max:g} exceeds the growth cap 300/Lambda0")


def _validate_grid(T_grid) -> Tuple[float, ...]:
    grid = tuple(float(T) for T in T_grid)
    if len(grid) < 2 or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError("T grid must be strictly increasing with at least 2 points")
    return grid


def _seed_of(seed: int, r: int) -> int:
    return replicate_seed(seed, r)


@dataclass(frozen=True, eq=False)
class Series:
    """Per-replicate statistics on a horizon grid.

    ``values[name]`` has shape ``(replicates, len(T_grid))``.
    """

    T_grid: Tuple[float, ...]
    seeds: Tuple[int, ...]
    values: Dict[str, np.ndarray]

    def median(self, name: str) -> np.ndarray:
        return np.median(self.values[name], axis=0)

    def records(self):
        for name in sorted(self.values):
            arr = self.values[name]
            for k, s in enumerate(self.seeds):
                for j, T in enumerate(self.T_grid):
                    yield (T, s, name, float(arr[k, j]))


def batch_series(batch: BatchResult, seed: int, model: Optional[OUModel] = None) -> Series:
    """Standard per-replicate statistics from a simulated batch.

    Always includes ``lambda_min_CT``, ``lambda_max_CT``, ``norm_Y_T``,
    ``info_quad`` (``Y_T' C_T^{-1} Y_T``) and ``T_lambda_max_inv``
    (``T lambda_max(C_T^{-1})``); with a model also ``error_fro``.
    """
    from .estimate import estimate_drift

    H, R = len(batch.horizons), len(batch.replicates)
    names = ["lambda_min_CT", "lambda_max_CT", "norm_Y_T", "info_quad", "T_lambda_max_inv"]
    if model is not None:
        names.append("error_fro")
    vals = {n: np.full((R, H), np.nan) for n in names}
    for j, T in enumerate(batch.horizons):
        for k in range(R):
            st = batch.stats[j][k]
            ev = linalg.sym_eig(st.C_T)[0]
            vals["lambda_min_CT"][k, j] = ev[0]
            vals["lambda_max_CT"][k, j] = ev[-1]
            vals["norm_Y_T"][k, j] = np.linalg.norm(st.Y_end)
            if ev[0] > 0:
                vals["info_quad"][k, j] = st.Y_end @ np.linalg.solve(st.C_T, st.Y_end)
                vals["T_lambda_max_inv"][k, j] = st.T / ev[0]
            if model is not None:
                try:
                    vals["error_fro"][k, j] = np.linalg.norm(estimate_drift(st) - model.F)
                except SingularStatsError:
                    pass
    seeds = tuple(_seed_of(seed, r) for r in batch.replicates)
    return Series(T_grid=batch.horizons, seeds=seeds, values=vals)


def _simulate(model, T_grid, dt, seed, replicates):
    return simulate_batch(model, dt, T_grid, seed, range(replicates))


# ---------------------------------------------------------------------------
# unstable drifts


@dataclass(frozen=True, eq=False)
class BConvergence:
    """Successive differences of ``D(T) = e^{-FT} C_T e^{-F'T}``.

    ``diffs`` has shape ``(replicates, len(T_grid) - 1)``.
    """

    T_grid: Tuple[float, ...]
    seeds: Tuple[int, ...]
    diffs: np.ndarray
    lambda_min_final: np.ndarray
    lambda_min_CT: np.ndarray

    @property
    def decreasing(self) -> np.ndarray:
        return np.all(np.diff(self.diffs, axis=1) < 0, axis=1)

    @property
    def fraction_decreasing(self) -> float:
        return float(np.mean(self.decreasing))

    def records(self):
        for k, s in enumerate(self.seeds):
            for j, T in enumerate(self.T_grid):
                yield (T, s, "lambda_min_CT", float(self.lambda_min_CT[k, j]))
                if j:
                    yield (T, s, "B_diff", float(self.diffs[k, j - 1]))
            yield (self.T_grid[-1], s, "lambda_min_B", float(self.lambda_min_final[k]))


def check_B_convergence(
    model: OUModel, T_grid: Sequence[float], dt: float = 0.01, seed: int = 0, replicates: int = 50
) -> BConvergence:
    """Convergence of the normalised information ``e^{-FT} C_T e^{-F'T}``."""
    report = classify(model.F)
    if report.kind != "right":
        raise DomainError(f"B-limit check needs an unstable drift, got class {report.kind!r}")
    grid = _validate_grid(T_grid)
    check_unstable_horizon(report, grid[-1])
    batch = _simulate(model, grid, dt, seed, replicates)
    R, H = replicates, len(grid)
    D = np.zeros((R, H, model.p, model.p))
    lmin = np.zeros((R, H))
    for j, T in enumerate(grid):
        E = linalg.matexp(model.F, -T)
        for k in range(R):
            C = batch.stats[j][k].C_T
            D[k, j] = E @ C @ E.T
            lmin[k, j] = linalg.lambda_min(C)
    diffs = np.linalg.norm(np.diff(D, axis=1), axis=(2, 3))
    lam_final = np.array([linalg.lambda_min(D[k, -1]) for k in range(R)])
    seeds = tuple(_seed_of(seed, r) for r in range(R))
    return BConvergence(grid, seeds, diffs, lam_final, lmin)


# ---------------------------------------------------------------------------
# left half-plane drifts


@dataclass(frozen=True, eq=False)
class LogIntegral:
    """Ratios ``int_{t0}^T Y' C_t^{-1} Y dt / log T``; shape ``(replicates, len(T_grid))``."""

    T_grid: Tuple[float, ...]
    seeds: Tuple[int, ...]
    ratios: np.ndarray

    def median(self) -> np.ndarray:
        return np.median(self.ratios, axis=0)

    def records(self):
        for k, s in enumerate(self.seeds):
            for j, T in enumerate(self.T_grid):
                yield (T, s, "log_integral_ratio", float(self.ratios[k, j]))


def check_lemma41_integral(
    model: OUModel,
    T_grid: Sequence[float],
    dt: float = 0.01,
    seed: int = 0,
    replicates: int = 20,
    t0: float = 1.0,
    refactor_every: int = 16,
) -> LogIntegral:
    """Discrete ``sum_k Y_k' C_{t_k}^{-1} Y_k dt`` from ``t0`` over ``log T``.

    ``C_{t_k} = sum_{j<k} Y_j Y_j' dt`` excludes the current point. Its
    inverse is carried by Sherman-Morrison updates and recomputed from
    scratch every ``refactor_every`` steps.
    """
    report = classify(model.F)
    if report.kind not in LEFT_CLASSES:
        raise DomainError(f"log-integral check needs a left half-plane drift, got {report.kind!r}")
    grid = _validate_grid(T_grid)
    if not 0 < t0 < grid[0]:
        raise ConfigError("t0 must lie in (0, T_grid[0])")
    if grid[0] <= 1.0:
        raise ConfigError("log T must be positive on the grid")
    if refactor_every < 1:
        raise ConfigError("refactor_every must be positive")
    batch = simulate_batch(model, dt, [grid[-1]], seed, range(replicates), store_path=True)
    Y = batch.paths  # (R, n+1, p)
    n0 = int(round(t0 / dt))
    stops = {int(round(T / dt)): j for j, T in enumerate(grid)}
    R, p = Y.shape[0], Y.shape[2]
    C = np.einsum("kti,ktj->kij", Y[:, :n0], Y[:, :n0]) * dt
    ev = np.linalg.eigvalsh(C)
    if np.any(ev[:, 0] <= 1e-12 * np.maximum(ev[:, -1], 1e-300)):
        raise SingularStatsError("C_t0 is singular; increase t0", float(ev[:, 0].min()))
    Cinv = np.linalg.inv(C)
    total = np.zeros(R)
    ratios = np.zeros((R, len(grid)))
    for k in range(n0, Y.shape[1] - 1):
        if k in stops:
            ratios[:, stops[k]] = total / math.log(k * dt)
        y = Y[:, k]
        v = np.einsum("kij,kj->ki", Cinv, y)
        q = np.einsum("ki,ki->k", y, v)
        total += q * dt
        C += np.einsum("ki,kj->kij", y, y) * dt
        if (k - n0 + 1) % refactor_every == 0:
            Cinv = np.linalg.inv(C)
        else:
            Cinv -= np.einsum("ki,kj->kij", v, v) * (dt / (1.0 + dt * q))[:, None, None]
    n = Y.shape[1] - 1
    ratios[:, stops[n]] = total / math.log(n * dt)
    seeds = tuple(_seed_of(seed, r) for r in range(R))
    return LogIntegral(grid, seeds, ratios)


def state_growth_target(report: SpectrumReport) -> float:
    """Log-log exponent of ``||Y_T||``: ``max(rho, gamma) - 1/2``."""
    return max(report.rho, report.gamma) - 0.5


def check_state_growth(
    model: OUModel,
    T_grid: Sequence[float],
    dt: float = 0.01,
    seed: int = 0,
    replicates: int = 50,
    series: Optional[Series] = None,
) -> GrowthFit:
    """Log-log fit of the max over replicates of ``||Y_T||``."""
    report = classify(model.F)
    if report.kind not in ("imaginary", "zero"):
        raise DomainError(f"state growth check needs an imaginary or zero drift, got {report.kind!r}")
    if series is None:
        series = batch_series(_simulate(model, _validate_grid(T_grid), dt, seed, replicates), seed)
    ys = np.max(series.values["norm_Y_T"], axis=0)
    return fit_growth(series.T_grid, ys, "log-log")


@dataclass(frozen=True)
class CTGrowth:
    """Log-log fits of median ``lambda_min(C_T)`` and ``lambda_max(C_T)``.

    ``min_ratio`` is the smallest median ``lambda_min(C_T)/T`` on the grid;
    ``min_ratio_all`` the smallest over every replicate and horizon.
    """

    min_fit: GrowthFit
    max_fit: GrowthFit
    min_ratio: float
    min_ratio_all: float


def check_CT_growth(
    model: OUModel,
    T_grid: Sequence[float],
    dt: float = 0.01,
    seed: int = 0,
    replicates: int = 50,
    series: Optional[Series] = None,
) -> CTGrowth:
    """Growth of the extreme eigenvalues of ``C_T``."""
    if series is None:
        grid = _validate_grid(T_grid)
        if len(grid) < 4:
            raise ConfigError("C_T growth needs at least 4 horizons")
        series = batch_series(_simulate(model, grid, dt, seed, replicates), seed)
    T = np.asarray(series.T_grid)
    lmin = series.values["lambda_min_CT"]
    lmax = series.values["lambda_max_CT"]
    return CTGrowth(
        min_fit=fit_growth(T, np.median(lmin, axis=0), "log-log"),
        max_fit=fit_growth(T, np.median(lmax, axis=0), "log-log"),
        min_ratio=float(np.min(np.median(lmin, axis=0) / T)),
        min_ratio_all=float(np.min(lmin / T)),
    )


@dataclass(frozen=True)
class InformationDecay:
    """Median ``Y_T' C_T^{-1} Y_T`` and ``T lambda_max(C_T^{-1})`` on the grid."""

    T_grid: Tuple[float, ...]
    info_quad: Tuple[float, ...]
    T_lambda_max_inv: Tuple[float, ...]

    @property
    def quad_ratio(self) -> float:
        """Final over initial median of ``Y_T' C_T^{-1} Y_T``."""
        return self.info_quad[-1] / self.info_quad[0]

    @property
    def spread(self) -> float:
        """Max over min of median ``T lambda_max(C_T^{-1})``."""
        return max(self.T_lambda_max_inv) / min(self.T_lambda_max_inv)


def check_information_decay(
    model: OUModel,
    T_grid: Sequence[float],
    dt: float = 0.01,
    seed: int = 0,
    replicates: int = 50,
    series: Optional[Series] = None,
) -> InformationDecay:
    """Decay of ``Y_T' C_T^{-1} Y_T`` and boundedness of ``T lambda_max(C_T^{-1})``."""
    if series is None:
        series = batch_series(_simulate(model, _validate_grid(T_grid), dt, seed, replicates), seed)
    return InformationDecay(
        T_grid=series.T_grid,
        info_quad=tuple(series.median("info_quad").tolist()),
        T_lambda_max_inv=tuple(series.median("T_lambda_max_inv").tolist()),
    )


# ---------------------------------------------------------------------------
# martingale terms


@dataclass(frozen=True, eq=False)
class MartingaleDecay:
    """Norms of the normalised martingales; arrays are ``(replicates, len(T_grid))``."""

    T_grid: Tuple[float, ...]
    seeds: Tuple[int, ...]
    N0: np.ndarray
    N1: np.ndarray

    def median(self, which: str) -> np.ndarray:
        return np.median(getattr(self, which), axis=0)

    def fit(self, which: str = "N0") -> GrowthFit:
        return fit_growth(self.T_grid, self.median(which), "log-log")

    def records(self):
        for k, s in enumerate(self.seeds):
            for j, T in enumerate(self.T_grid):
                yield (T, s, "norm_N0", float(self.N0[k, j]))
                yield (T, s, "norm_N1", float(self.N1[k, j]))


def check_martingale_decay(
    model: OUModel, T_grid: Sequence[float], dt: float = 0.01, seed: int = 0, replicates: int = 100
) -> MartingaleDecay:
    """Frobenius norms of the normalised martingales on a horizon grid."""
    grid = _validate_grid(T_grid)
    report = classify(model.F)
    check_unstable_horizon(report, grid[-1])
    split = split_half_planes(model.F)
    out = normalized_martingale_batch(model, split, dt, grid, seed, range(replicates))
    N0 = np.stack([np.linalg.norm(n0, axis=(1, 2)) for n0, _ in out], axis=1)
    N1 = np.stack([np.linalg.norm(n1, axis=(1, 2)) for _, n1 in out], axis=1)
    seeds = tuple(_seed_of(seed, r) for r in range(replicates))
    return MartingaleDecay(grid, seeds, N0, N1)
