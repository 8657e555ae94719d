"""Least-squares drift estimator, quadratic-variation diffusion estimator and
the efficiency statistic ``Tr[(F_hat - F) E(C_T) (F_hat - F)']``."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.linalg

from . import linalg
from .errors import ConfigError, DimensionError, ExpOverflowError, SingularStatsError
from .model import OUModel
from .simulate import SufficientStats
from .splitting import SpectralSplit

SINGULAR_RTOL = 1e-12


class IllConditionedWarning(RuntimeWarning):
    """C_T was not numerically positive definite; an eigen solve was used."""


@dataclass(frozen=True, eq=False)
class EstimationResult:
    """Estimates from one path, with truth-dependent fields when F is known."""

    F_hat: np.ndarray
    AAt_hat: np.ndarray
    lambda_min_CT: float
    lambda_max_CT: float
    T: float
    error_fro: Optional[float] = None
    efficiency_stat: Optional[float] = None


def estimate_drift(stats: SufficientStats, rtol: float = SINGULAR_RTOL) -> np.ndarray:
    """``F_hat = S_T C_T^{-1}``.

    Solved through a Cholesky factorisation of ``C_T``. If the factorisation
    fails while ``C_T`` is still above the singularity threshold, a symmetric
    eigen solve is used and :class:`IllConditionedWarning` is emitted.

    Raises
    ------
    SingularStatsError
        If ``lambda_min(C_T) <= rtol * lambda_max(C_T)``; the RANK condition
        fails or T is too small.
    """
    C, S = stats.C_T, stats.S_T
    vals, vecs = linalg.sym_eig(C)
    lmin, lmax = float(vals[0]), float(vals[-1])
    if not lmax > 0 or lmin <= rtol * lmax:
        raise SingularStatsError(
            f"C_T is numerically singular (lambda_min={lmin:.3g}, lambda_max={lmax:.3g})", lmin
        )
    try:
        factor = scipy.linalg.cho_factor(C, lower=True)
        # F_hat C = S  <=>  C F_hat' = S'
        return scipy.linalg.cho_solve(factor, S.T).T
    except np.linalg.LinAlgError:
        warnings.warn("C_T Cholesky failed; using eigen solve", IllConditionedWarning)
        return S @ (vecs / vals) @ vecs.T


def estimate_diffusion(stats: SufficientStats) -> np.ndarray:
    """Quadratic-variation estimate ``QV / T`` of ``AA'``."""
    if not stats.T > 0:
        raise ConfigError("T must be positive")
    Q = stats.QV / stats.T
    return 0.5 * (Q + Q.T)


def efficiency_statistic(F_hat, F_true, ECT) -> float:
    """``Tr[(F_hat - F) ECT (F_hat - F)']``."""
    F_hat = np.asarray(F_hat, dtype=float)
    F_true = np.asarray(F_true, dtype=float)
    ECT = np.asarray(ECT, dtype=float)
    if F_hat.shape != F_true.shape or ECT.shape != (F_hat.shape[1], F_hat.shape[1]):
        raise DimensionError("F_hat, F_true and ECT have incompatible shapes")
    D = F_hat - F_true
    return max(float(np.trace(D @ ECT @ D.T)), 0.0)


def _simpson_CT(model: OUModel, T: float, n: int) -> np.ndarray:
    h = T / n
    E, Qh = linalg.transition_moments(model.F, model.AAt, h)
    m = model.Y0.copy()
    Q = np.zeros((model.p, model.p))
    acc = np.zeros_like(Q)
    for k in range(n + 1):
        w = 1.0 if k in (0, n) else (4.0 if k % 2 else 2.0)
        acc += w * (np.outer(m, m) + Q)
        m = E @ m
        Q = Qh + E @ Q @ E.T
    out = acc * h / 3.0
    if not np.all(np.isfinite(out)):
        raise ExpOverflowError("E(C_T) overflows; reduce T")
    return 0.5 * (out + out.T)


def expected_CT(model: OUModel, T: float, n_quad: Optional[int] = None, rtol: float = 1e-6) -> np.ndarray:
    """``E(C_T) = int_0^T (e^{Ft} Y0 Y0' e^{F't} + Q(t)) dt`` by composite Simpson.

    The integrand is advanced on the panel grid with the exact recursions
    ``m(t+h) = e^{Fh} m(t)`` and ``Q(t+h) = Q(h) + e^{Fh} Q(t) e^{F'h}``.
    With ``n_quad=None`` the panel count starts at 64 and doubles until two
    successive values agree to ``rtol``.
    """
    if not T > 0:
        raise ConfigError("T must be positive")
    if n_quad is not None:
        if n_quad < 2 or n_quad % 2:
            raise ConfigError("n_quad must be even and at least 2")
        return _simpson_CT(model, float(T), int(n_quad))
    n = 64
    prev = _simpson_CT(model, float(T), n)
    while n < 2**18:
        n *= 2
        cur = _simpson_CT(model, float(T), n)
        if np.linalg.norm(cur - prev) <= rtol * np.linalg.norm(cur):
            return cur
        prev = cur
    return cur


def estimate(stats: SufficientStats, model: Optional[OUModel] = None, ECT=None) -> EstimationResult:
    """Drift and diffusion estimates, plus errors when the true model is given."""
    F_hat = estimate_drift(stats)
    vals = linalg.sym_eig(stats.C_T)[0]
    err = eff = None
    if model is not None:
        err = float(np.linalg.norm(F_hat - model.F))
        if ECT is not None:
            eff = efficiency_statistic(F_hat, model.F, ECT)
    return EstimationResult(
        F_hat=F_hat,
        AAt_hat=estimate_diffusion(stats),
        lambda_min_CT=float(vals[0]),
        lambda_max_CT=float(vals[-1]),
        T=stats.T,
        error_fro=err,
        efficiency_stat=eff,
    )


def normalized_block_errors(
    F_hat, F_true, split: SpectralSplit, C_T, T: float
) -> Tuple[float, float]:
    """Norms of the two column blocks of ``T^{-1/2} (F_hat - F) M^{-1} D_T^{-1}``.

    ``M = [M0; M1]`` and ``D_T^{-1} = diag(e^{G0 T}, C_1T^{1/2})`` with
    ``C_1T = M1 C_T M1'``. In these coordinates the error equals the
    normalised martingale ``T^{-1/2} A int dW U' D_T'`` times the inverse of
    ``D_T (M C_T M') D_T'``, so both blocks tend to zero.
    """
    D = np.asarray(F_hat, dtype=float) - np.asarray(F_true, dtype=float)
    W = np.linalg.solve(split.M.T, D.T).T  # D M^{-1}
    p0 = split.p0
    out0 = out1 = 0.0
    if p0:
        B0 = W[:, :p0] @ linalg.matexp(split.G0, T)
        out0 = float(np.linalg.norm(B0)) / math.sqrt(T)
    if split.p1:
        C1 = split.M1 @ np.asarray(C_T) @ split.M1.T
        B1 = W[:, p0:] @ linalg.sym_sqrt(C1)
        out1 = float(np.linalg.norm(B1)) / math.sqrt(T)
    return out0, out1
