"""Exact simulation of OU paths and accumulation of sufficient statistics.

Paths are sampled from the exact Gaussian transition law
``Y_{k+1} = e^{F dt} Y_k + xi_k``, ``xi_k ~ N(0, Q(dt))``. The estimator's
integrals are discretised on the same grid: left-point Ito sums for
``S_T = int dY Y'``, left Riemann sums for ``C_T = int Y Y' dt``, and
``QV = sum dY dY'``.

Reproducibility contract: replicate ``r`` of a run with base seed ``s`` draws
from ``numpy.random.default_rng(replicate_seed(s, r))``, a 64-bit seed
derived from ``SeedSequence([s, r])``; distinct ``(s, r)`` pairs give
non-overlapping streams. The recursion is evaluated with
elementwise operations in a fixed order and the sums are taken over blocks
aligned to absolute step indices, so the statistics of a replicate are
bit-identical whether it is simulated alone, in a batch, up to a single
horizon or with intermediate stops, or recomputed from a CSV dump of its path.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from . import linalg
from .errors import ConfigError, KernelError, SingularStatsError
from .model import OUModel
from .splitting import SpectralSplit

BLOCK = 4096
MAX_STORED_STEPS = 10**8
SEED_MOD = 2**64


def step_count(T: float, dt: float) -> int:
    """Number of grid steps in ``[0, T]``; T must be a multiple of dt."""
    if not (dt > 0 and math.isfinite(dt)):
        raise ConfigError(f"dt must be positive and finite, got {dt!r}")
    if not (T > 0 and math.isfinite(T)):
        raise ConfigError(f"T must be positive and finite, got {T!r}")
    n = int(round(T / dt))
    if n < 1 or abs(n * dt - T) > 1e-9 * max(1.0, T):
        raise ConfigError(f"T={T!r} is not an integer multiple of dt={dt!r}")
    return n


@dataclass(frozen=True)
class SimConfig:
    """Grid step, horizon, base seed and whether to keep the path."""

    dt: float
    T: float
    seed: int = 0
    store_path: bool = False

    def __post_init__(self):
        n = step_count(self.T, self.dt)
        if self.store_path and n > MAX_STORED_STEPS:
            raise ConfigError(f"refusing to store {n} steps (cap {MAX_STORED_STEPS})")
        if not 0 <= int(self.seed) < SEED_MOD:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    @property
    def n_steps(self) -> int:
        return step_count(self.T, self.dt)


@dataclass(frozen=True, eq=False)
class SufficientStats:
    """Discretised ``C_T``, ``S_T`` and quadratic variation of one path."""

    C_T: np.ndarray
    S_T: np.ndarray
    QV: np.ndarray
    Y_end: np.ndarray
    T: float
    dt: float
    n_steps: int

    def __post_init__(self):
        for name in ("C_T", "S_T", "QV", "Y_end"):
            getattr(self, name).setflags(write=False)

    @property
    def p(self) -> int:
        return self.C_T.shape[0]


def replicate_seed(seed: int, replicate: int) -> int:
    """64-bit seed of the stream used by ``replicate`` under base ``seed``."""
    ss = np.random.SeedSequence([int(seed) % SEED_MOD, int(replicate)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    return np.random.default_rng(replicate_seed(seed, replicate))


@functools.lru_cache(maxsize=64)
def _factors(F_bytes: bytes, AAt_bytes: bytes, p: int, dt: float):
    F = np.frombuffer(F_bytes).reshape(p, p)
    AAt = np.frombuffer(AAt_bytes).reshape(p, p)
    E, Q = linalg.transition_moments(F, AAt, dt)
    return E, noise_factor(Q)


def noise_factor(Q: np.ndarray) -> np.ndarray:
    """Square root L with ``L L' = Q``.

    Cholesky when Q is positive definite; otherwise a symmetric eigen square
    root with eigenvalues down to ``-1e-12 * max(1, ||Q||)`` clipped to 0.
    """
    try:
        return np.linalg.cholesky(Q)
    except np.linalg.LinAlgError:
        pass
    vals, vecs = linalg.sym_eig(Q)
    floor = -1e-12 * max(1.0, abs(vals[-1]))
    if vals[0] < floor:
        raise KernelError(f"transition covariance is indefinite (eigenvalue {vals[0]:.3g})")
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def transition_factors(model: OUModel, dt: float):
    """Cached ``(e^{F dt}, L)`` with ``L L' = Q(dt)``."""
    F = np.ascontiguousarray(model.F)
    AAt = np.ascontiguousarray(model.AAt)
    return _factors(F.tobytes(), AAt.tobytes(), model.p, float(dt))


def transition_sample(model: OUModel, y, dt: float, rng: np.random.Generator) -> np.ndarray:
    """One exact transition ``Y_{t+dt} | Y_t = y``."""
    if not dt > 0:
        raise ConfigError("dt must be positive")
    E, L = transition_factors(model, dt)
    z = rng.standard_normal(model.p)
    return E @ np.asarray(y, dtype=float) + L @ z


# ---------------------------------------------------------------------------
# block-aligned accumulation


class _Accumulator:
    """Running sums of ``Y Y'``, ``dY Y'`` and ``dY dY'`` for R paths.

    Sums are pairwise within blocks of :data:`BLOCK` steps and sequential
    across blocks.
    """

    def __init__(self, R: int, p: int):
        self.p = p
        self.total = np.zeros((3, R, p, p))

    def _block_sums(self, Yb: np.ndarray, upto: int) -> np.ndarray:
        p = self.p
        out = np.zeros_like(self.total)
        if upto == 0:
            return out
        Yk = Yb[:, :, :upto]
        dY = Yb[:, :, 1 : upto + 1] - Yk
        for i in range(p):
            for j in range(p):
                if j >= i:
                    out[0, :, i, j] = (Yk[:, i, :] * Yk[:, j, :]).sum(axis=-1)
                    out[0, :, j, i] = out[0, :, i, j]
                    out[2, :, i, j] = (dY[:, i, :] * dY[:, j, :]).sum(axis=-1)
                    out[2, :, j, i] = out[2, :, i, j]
                out[1, :, i, j] = (dY[:, i, :] * Yk[:, j, :]).sum(axis=-1)
        return out

    def snapshot(self, Yb: np.ndarray, upto: int) -> np.ndarray:
        return self.total + self._block_sums(Yb, upto)

    def close_block(self, Yb: np.ndarray):
        self.total = self.total + self._block_sums(Yb, Yb.shape[2] - 1)


def _make_stats(raw: np.ndarray, y_end: np.ndarray, n: int, dt: float) -> SufficientStats:
    return SufficientStats(
        C_T=raw[0] * dt,
        S_T=raw[1].copy(),
        QV=raw[2].copy(),
        Y_end=np.array(y_end, dtype=float),
        T=n * dt,
        dt=dt,
        n_steps=n,
    )


def _stops_in_block(stops: Sequence[int], start: int, end: int):
    return [s for s in stops if start < s <= end]


@dataclass(frozen=True, eq=False)
class BatchResult:
    """Statistics of several replicates at several horizons.

    ``stats[h][k]`` belongs to ``horizons[h]`` and ``replicates[k]``;
    ``paths`` has shape ``(R, n + 1, p)`` when requested.
    """

    horizons: tuple
    replicates: tuple
    stats: List[List[SufficientStats]]
    paths: Optional[np.ndarray] = None


def simulate_batch(
    model: OUModel,
    dt: float,
    horizons: Sequence[float],
    seed: int = 0,
    replicates: Sequence[int] = (0,),
    store_path: bool = False,
) -> BatchResult:
    """Simulate replicates on one grid and snapshot statistics at each horizon."""
    horizons = tuple(float(T) for T in horizons)
    if not horizons:
        raise ConfigError("at least one horizon is required")
    stops = [step_count(T, dt) for T in horizons]
    if any(b <= a for a, b in zip(stops, stops[1:])):
        raise ConfigError("horizons must be strictly increasing")
    n_max = stops[-1]
    if store_path and n_max > MAX_STORED_STEPS:
        raise ConfigError(f"refusing to store {n_max} steps (cap {MAX_STORED_STEPS})")
    replicates = tuple(int(r) for r in replicates)
    R, p = len(replicates), model.p
    E, L = transition_factors(model, dt)
    rngs = [replicate_rng(seed, r) for r in replicates]

    acc = _Accumulator(R, p)
    y = [np.full(R, model.Y0[i]) for i in range(p)]
    snaps = {}
    path_blocks = []
    start = 0
    while start < n_max:
        nb = min(BLOCK, n_max - start)
        z = np.stack([g.standard_normal((nb, p)).T for g in rngs])  # (R, p, nb)
        noise = np.zeros((R, p, nb))
        for i in range(p):
            acc_i = L[i, 0] * z[:, 0, :]
            for j in range(1, p):
                acc_i = acc_i + L[i, j] * z[:, j, :]
            noise[:, i, :] = acc_i
        Yb = np.empty((R, p, nb + 1))
        for i in range(p):
            Yb[:, i, 0] = y[i]
        for k in range(nb):
            new = []
            for i in range(p):
                v = E[i, 0] * y[0]
                for j in range(1, p):
                    v = v + E[i, j] * y[j]
                new.append(v + noise[:, i, k])
            y = new
            for i in range(p):
                Yb[:, i, k + 1] = y[i]
        for s in _stops_in_block(stops, start, start + nb):
            off = s - start
            snaps[s] = (acc.snapshot(Yb, off), Yb[:, :, off].copy())
        acc.close_block(Yb)
        if store_path:
            path_blocks.append(Yb[:, :, :-1] if start + nb < n_max else Yb)
        start += nb

    stats = []
    for s in stops:
        raw, yend = snaps[s]
        stats.append([_make_stats(raw[:, k], yend[k], s, dt) for k in range(R)])
    paths = None
    if store_path:
        paths = np.concatenate(path_blocks, axis=2).transpose(0, 2, 1).copy()
    return BatchResult(horizons=horizons, replicates=replicates, stats=stats, paths=paths)


def simulate_stats(model: OUModel, cfg: SimConfig, replicate: int = 0) -> SufficientStats:
    """Sufficient statistics of one exactly simulated path on ``[0, cfg.T]``."""
    res = simulate_batch(model, cfg.dt, [cfg.T], cfg.seed, [replicate])
    return res.stats[0][0]


def simulate_path(model: OUModel, cfg: SimConfig, replicate: int = 0):
    """Return ``(times, path, stats)`` for one replicate; path is ``(n+1, p)``."""
    res = simulate_batch(model, cfg.dt, [cfg.T], cfg.seed, [replicate], store_path=True)
    n = res.stats[0][0].n_steps
    times = np.arange(n + 1) * cfg.dt
    return times, res.paths[0], res.stats[0][0]


def stats_from_path(path, dt: float) -> SufficientStats:
    """Sufficient statistics of a path sampled on a uniform grid of step dt."""
    path = np.asarray(path, dtype=float)
    if path.ndim == 1:
        path = path[:, None]
    n = path.shape[0] - 1
    if n < 1:
        raise ConfigError("a path needs at least two grid points")
    p = path.shape[1]
    acc = _Accumulator(1, p)
    raw = None
    for start in range(0, n, BLOCK):
        nb = min(BLOCK, n - start)
        Yb = np.ascontiguousarray(path[start : start + nb + 1].T)[None]
        if start + nb == n:
            raw = acc.snapshot(Yb, nb)
        acc.close_block(Yb)
    return _make_stats(raw[:, 0], path[-1], n, float(dt))


# ---------------------------------------------------------------------------
# Euler-Maruyama with explicit Brownian increments


def _normalized_martingales(model, split, dt, horizons, seed, replicates):
    stops = [step_count(T, dt) for T in horizons]
    n_max = stops[-1]
    R, p, r = len(replicates), model.p, model.r
    F, A = model.F, model.A
    rngs = [replicate_rng(seed, k) for k in replicates]
    Y = np.tile(model.Y0, (R, 1))
    MW = np.zeros((R, r, p))
    C = np.zeros((R, p, p))
    out = {}
    sq = math.sqrt(dt)
    start = 0
    while start < n_max:
        nb = min(BLOCK, n_max - start)
        dW = np.stack([g.standard_normal((nb, r)) for g in rngs], axis=1) * sq  # (nb, R, r)
        for k in range(nb):
            MW += dW[k][:, :, None] * Y[:, None, :]
            C += Y[:, :, None] * Y[:, None, :] * dt
            Y = Y + Y @ F.T * dt + dW[k] @ A.T
            if start + k + 1 in stops:
                out[start + k + 1] = (MW.copy(), C.copy())
        start += nb

    results = []
    for T, s in zip(horizons, stops):
        MWs, Cs = out[s]
        N0 = np.zeros((R, p, split.p0))
        N1 = np.zeros((R, p, split.p1))
        if split.p0:
            decay = linalg.matexp(split.G0.T, -T)
            N0 = np.einsum("ab,kbc,dc,de->kae", A, MWs, split.M0, decay) / math.sqrt(T)
        if split.p1:
            for k in range(R):
                C1 = split.M1 @ Cs[k] @ split.M1.T
                lmin = linalg.lambda_min(C1)
                if lmin <= 1e-12 * max(1.0, linalg.lambda_max(C1)):
                    if not np.any(A):
                        continue
                    raise SingularStatsError("C_1T is singular", lmin)
                N1[k] = A @ MWs[k] @ split.M1.T @ linalg.sym_inv_sqrt(C1) / math.sqrt(T)
        results.append((N0, N1))
    return results


def simulate_normalized_martingale(
    model: OUModel, split: SpectralSplit, cfg: SimConfig, replicate: int = 0
):
    """Normalised martingale terms of the estimator error at ``cfg.T``.

    Returns ``(N0, N1)`` with
    ``N0 = T^{-1/2} A (sum dW U0') e^{-G0' T}`` and
    ``N1 = T^{-1/2} A (sum dW U1') C_1T^{-1/2}``, where ``U_i = M_i Y`` and
    ``C_1T = sum U1 U1' dt``. Uses Euler-Maruyama so that the Brownian
    increments are available.
    """
    (N0, N1), = _normalized_martingales(model, split, cfg.dt, [cfg.T], cfg.seed, [replicate])
    return N0[0], N1[0]


def normalized_martingale_batch(
    model: OUModel,
    split: SpectralSplit,
    dt: float,
    horizons: Sequence[float],
    seed: int = 0,
    replicates: Sequence[int] = (0,),
):
    """Like :func:`simulate_normalized_martingale` for many horizons/replicates.

    Returns a list over horizons of ``(N0, N1)`` arrays with a leading
    replicate axis.
    """
    return _normalized_martingales(
        model, split, dt, [float(T) for T in horizons], seed, tuple(replicates)
    )
