"""Ornstein-Uhlenbeck models ``dY = F Y dt + A dW`` and their assumption checks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from . import linalg
from .errors import DimensionError, DomainError, RankConditionError
from .linalg import ComplexSpectrum, SpectralRegion

RANK_TOL = 1e-8

SPECTRUM_CLASSES = ("right", "stable", "imaginary", "zero", "left-mixed", "mixed")


def controllability_matrix(F, A) -> np.ndarray:
    """``[A | FA | ... | F^{p-1} A]``, shape ``p x (p r)``."""
    F = linalg.as_matrix(F, "F", square=True)
    A = linalg.as_matrix(A, "A")
    p = F.shape[0]
    if A.shape[0] != p:
        raise DimensionError(f"A has {A.shape[0]} rows, expected {p}")
    blocks = [A]
    for _ in range(p - 1):
        blocks.append(F @ blocks[-1])
    return np.hstack(blocks)


def check_rank_condition(F, A, tol: float = RANK_TOL) -> Tuple[bool, int]:
    """Numerical rank of the controllability matrix and whether it equals p.

    F and A are rescaled to unit norm first; the column space of the
    controllability matrix does not change, but the SVD threshold becomes
    meaningful for badly scaled drifts.
    """
    F = linalg.as_matrix(F, "F", square=True)
    A = linalg.as_matrix(A, "A")
    p = F.shape[0]
    a_norm = np.linalg.norm(A, 2)
    if a_norm == 0.0:
        if A.shape[0] != p:
            raise DimensionError(f"A has {A.shape[0]} rows, expected {p}")
        return False, 0
    f_norm = np.linalg.norm(F, 2)
    Fs = F / f_norm if f_norm > 0 else F
    K = controllability_matrix(Fs, A / a_norm)
    rank = linalg.numerical_rank(K, tol)
    return rank == p, rank


def check_condition_b(spectrum: ComplexSpectrum, tol: Optional[float] = None) -> bool:
    """True iff the eigenvalues with positive real part are pairwise distinct.

    ``tol`` is the separation below which two eigenvalues count as equal; it
    defaults to the spectrum's cluster radius, because a repeated eigenvalue
    is only resolved to about ``sqrt(eps)`` by floating point.
    """
    sep = spectrum.cluster_radius if tol is None else float(tol)
    vals = spectrum.values[spectrum.real > spectrum.tol_class]
    for i in range(vals.size):
        for j in range(i + 1, vals.size):
            if abs(vals[i] - vals[j]) <= sep:
                return False
    return True


def check_condition_b_prime(F, tol: float = RANK_TOL) -> bool:
    """True iff ``I, F, ..., F^{p-1}`` are linearly independent.

    Equivalently the minimal polynomial of F has degree p.
    """
    F = linalg.as_matrix(F, "F", square=True)
    p = F.shape[0]
    norm = np.linalg.norm(F, 2)
    Fs = F / norm if norm > 0 else F
    rows = [np.eye(p).ravel()]
    P = np.eye(p)
    for _ in range(p - 1):
        P = P @ Fs
        rows.append(P.ravel())
    return linalg.numerical_rank(np.vstack(rows), tol) == p


@dataclass(frozen=True, eq=False)
class SpectrumReport:
    """Spectral summary of a drift matrix.

    ``p0``/``p1`` count eigenvalues right of / on-or-left of the imaginary
    axis. ``rho`` is the largest Jordan index of a purely imaginary
    eigenvalue (half the size of the largest imaginary real-canonical
    block); ``gamma`` the nilpotency index of the zero-eigenvalue part.
    Both are 0 when the corresponding part is absent.
    """

    spectrum: ComplexSpectrum
    lambda0: Optional[float]
    Lambda0: float
    p0: int
    p1: int
    n_negative: int
    n_imaginary: int
    n_zero: int
    rho: int
    gamma: int
    kind: str

    @property
    def p(self) -> int:
        return self.p0 + self.p1


def _nilpotency_index(N: np.ndarray, scale: float) -> int:
    n = N.shape[0]
    P = np.eye(n, dtype=N.dtype)
    for k in range(1, n + 1):
        P = P @ N
        if np.linalg.norm(P, 2) <= 1e-8 * (1.0 + scale) ** k:
            return k
    return n


def _jordan_index(B: np.ndarray, mu: complex, mult: int, scale: float) -> int:
    """Smallest k with nullity((B - mu I)^k) == mult."""
    n = B.shape[0]
    shifted = B.astype(complex) - mu * np.eye(n)
    P = np.eye(n, dtype=complex)
    for k in range(1, mult + 1):
        P = P @ shifted
        s = np.linalg.svd(P, compute_uv=False)
        nullity = int(np.sum(s <= 1e-8 * (1.0 + scale) ** k))
        if nullity >= mult:
            return k
    return mult


def classify(F, tol: Optional[float] = None) -> SpectrumReport:
    """Classify the spectrum of F into right / negative / imaginary / zero parts.

    Eigenvalues with ``|Re| <= tol`` go to the left group.
    """
    F = linalg.as_matrix(F, "F", square=True)
    spec = linalg.eigenvalues(F, tol)
    tol = spec.tol_class
    lam = spec.clustered()
    re, im = lam.real, lam.imag
    right = re > tol
    negative = re < -tol
    zero = (np.abs(re) <= tol) & (np.abs(im) <= tol)
    imaginary = (np.abs(re) <= tol) & (np.abs(im) > tol)
    p0 = int(right.sum())
    p1 = F.shape[0] - p0
    n_neg, n_imag, n_zero = int(negative.sum()), int(imaginary.sum()), int(zero.sum())
    scale = float(np.linalg.norm(F, 2))

    gamma = 0
    if n_zero:
        _, T, k = linalg.ordered_schur(F, SpectralRegion("zero", tol))
        gamma = _nilpotency_index(T[:k, :k], scale)

    rho = 0
    if n_imag:
        _, T, k = linalg.ordered_schur(F, SpectralRegion("imaginary", tol))
        B = T[:k, :k]
        sub = linalg.cluster_means(linalg.schur_eigenvalues(B), spec.cluster_radius)
        for mu in np.unique(sub[sub.imag > 0]):
            mult = int(np.sum(np.abs(sub - mu) <= spec.cluster_radius))
            rho = max(rho, _jordan_index(B, mu, mult, scale))

    if p1 == 0:
        kind = "right"
    elif p0 > 0:
        kind = "mixed"
    elif n_neg == p1:
        kind = "stable"
    elif n_imag == p1:
        kind = "imaginary"
    elif n_zero == p1:
        kind = "zero"
    else:
        kind = "left-mixed"

    return SpectrumReport(
        spectrum=spec,
        lambda0=float(re[right].min()) if p0 else None,
        Lambda0=float(re.max()),
        p0=p0,
        p1=p1,
        n_negative=n_neg,
        n_imaginary=n_imag,
        n_zero=n_zero,
        rho=rho,
        gamma=gamma,
        kind=kind,
    )


@dataclass(frozen=True, eq=False)
class OUModel:
    """Linear SDE ``dY_t = F Y_t dt + A dW_t`` started at ``Y0``.

    The controllability RANK condition is checked at construction; pass
    ``check_rank=False`` to build degenerate models on purpose.
    """

    F: np.ndarray
    A: np.ndarray
    Y0: np.ndarray = None
    check_rank: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        F = linalg.as_matrix(self.F, "F", square=True)
        A = linalg.as_matrix(self.A, "A")
        p = F.shape[0]
        if A.shape[0] != p:
            raise DimensionError(f"A has {A.shape[0]} rows, expected {p}")
        Y0 = np.zeros(p) if self.Y0 is None else np.array(self.Y0, dtype=float).reshape(-1)
        if Y0.shape != (p,):
            raise DimensionError(f"Y0 must have length {p}")
        if not np.all(np.isfinite(Y0)):
            raise DimensionError("Y0 has non-finite entries")
        for arr in (F, A, Y0):
            arr.setflags(write=False)
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "Y0", Y0)
        if self.check_rank:
            holds, rank = check_rank_condition(F, A)
            if not holds:
                raise RankConditionError(
                    f"RANK condition fails: controllability rank {rank} < {p}", rank
                )

    @property
    def p(self) -> int:
        return self.F.shape[0]

    @property
    def r(self) -> int:
        return self.A.shape[1]

    @property
    def AAt(self) -> np.ndarray:
        return self.A @ self.A.T


def car_model(alphas: Sequence[float], sigma: float, Y0=None) -> OUModel:
    """State-space form of a CAR(p) process.

    ``alphas = (a_1, ..., a_p)`` are the coefficients of
    ``dX^{(p-1)} = (a_p X + a_{p-1} X' + ... + a_1 X^{(p-1)}) dt + sigma dW``.
    The drift is the companion matrix with last row ``(a_p, ..., a_1)`` and
    the noise enters the last coordinate only.
    """
    alphas = np.asarray(alphas, dtype=float).reshape(-1)
    p = alphas.size
    if p < 1:
        raise DimensionError("CAR order must be at least 1")
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    F = np.zeros((p, p))
    F[:-1, 1:] = np.eye(p - 1)
    F[-1, :] = alphas[::-1]
    A = np.zeros((p, 1))
    A[-1, 0] = sigma
    return OUModel(F, A, Y0)


def stationary_covariance(model: OUModel) -> np.ndarray:
    """Covariance of the invariant law of a stable model."""
    report = classify(model.F)
    if report.kind != "stable":
        raise DomainError(f"stationary law requires a stable drift, got class {report.kind!r}")
    return linalg.lyapunov_stationary(model.F, model.AAt, report.spectrum.tol_class)


def _inverse_diffusion(AAt: np.ndarray) -> np.ndarray:
    if linalg.numerical_rank(AAt, RANK_TOL) < AAt.shape[0]:
        raise DomainError(
            "AA' is singular: the likelihood does not exist; use estimate_drift, "
            "which needs no likelihood"
        )
    return np.linalg.inv(AAt)


def drift_log_likelihood(F, AAt, S_T, C_T) -> float:
    """``Tr[F' (AA')^{-1} S_T] - 1/2 Tr[(AA')^{-1} F C_T F']``."""
    F = np.asarray(F, dtype=float)
    W = _inverse_diffusion(np.asarray(AAt, dtype=float))
    return float(np.trace(F.T @ W @ S_T) - 0.5 * np.trace(W @ F @ C_T @ F.T))


def drift_log_likelihood_grad(F, AAt, S_T, C_T) -> np.ndarray:
    """Gradient ``(AA')^{-1} (S_T - F C_T)`` of :func:`drift_log_likelihood`."""
    W = _inverse_diffusion(np.asarray(AAt, dtype=float))
    return W @ (S_T - np.asarray(F, dtype=float) @ C_T)


def log_likelihood(model: OUModel, stats) -> float:
    """Log-likelihood of ``model.F`` given sufficient statistics.

    ``stats`` needs ``S_T`` (``int dY Y'``) and ``C_T`` (``int Y Y' dt``).
    """
    return drift_log_likelihood(model.F, model.AAt, stats.S_T, stats.C_T)
