"""Dense linear algebra kernel.

Matrix exponentials, spectra, ordered real Schur forms, Lyapunov solutions and
transition covariances of linear SDEs. Matrices are plain 2-D ``float64``
numpy arrays; every public function validates its inputs with
:func:`as_matrix`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack

from .errors import (
    AmbiguousSpectrumError,
    DimensionError,
    DomainError,
    ExpOverflowError,
    KernelError,
    NonFiniteError,
)

MAX_DIM = 64
KRONECKER_MAX_DIM = 16
# Largest ||Mt||_1 accepted by matexp; keeps ||e^{Mt}|| below ~1e150.
EXP_NORM_LIMIT = 500.0 * math.log(2.0)
# Relative radius used to merge numerically split (defective) eigenvalues.
CLUSTER_RTOL = 1e-4


def as_matrix(x, name: str = "matrix", square: bool = False) -> np.ndarray:
    """Return `x` as a finite 2-D float array, raising on bad input."""
    arr = np.array(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if square and arr.shape[0] != arr.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name} has non-finite entries")
    return arr


def default_tol(M: np.ndarray) -> float:
    """Classification tolerance ``1e-9 * (1 + ||M||_2)``."""
    return 1e-9 * (1.0 + np.linalg.norm(M, 2))


def matexp(M, t: float = 1.0) -> np.ndarray:
    """Matrix exponential ``e^{Mt}`` by scaling and squaring (Pade).

    Raises
    ------
    ExpOverflowError
        If ``||Mt||_1`` exceeds ``500 log 2``; the result could overflow.
    """
    M = as_matrix(M, "M", square=True)
    if not math.isfinite(t):
        raise DomainError("t must be finite")
    Mt = M * t
    norm = np.linalg.norm(Mt, 1)
    if norm > EXP_NORM_LIMIT:
        raise ExpOverflowError(
            f"||Mt||_1 = {norm:.6g} exceeds the overflow guard {EXP_NORM_LIMIT:.6g}"
        )
    out = sla.expm(Mt)
    if not np.all(np.isfinite(out)):
        raise ExpOverflowError("matrix exponential overflowed")
    return out


# ---------------------------------------------------------------------------
# spectra


def cluster_labels(values: np.ndarray, radius: float) -> np.ndarray:
    """Single-linkage cluster labels for points in the complex plane."""
    values = np.asarray(values, dtype=complex)
    n = values.size
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if abs(values[i] - values[j]) <= radius:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)
    roots = [find(i) for i in range(n)]
    relabel = {r: k for k, r in enumerate(dict.fromkeys(roots))}
    return np.array([relabel[r] for r in roots], dtype=int)


def cluster_means(values: np.ndarray, radius: float) -> np.ndarray:
    """Replace each eigenvalue by the mean of its cluster.

    The mean of a cluster of perturbed eigenvalues is far better conditioned
    than the individual members, which for a Jordan block of size k scatter
    like ``eps^(1/k)``.
    """
    values = np.asarray(values, dtype=complex)
    labels = cluster_labels(values, radius)
    out = np.empty_like(values)
    for lab in np.unique(labels):
        idx = labels == lab
        out[idx] = values[idx].mean()
    return out


@dataclass(frozen=True, eq=False)
class ComplexSpectrum:
    """Eigenvalues of a real square matrix, with multiplicity.

    Attributes
    ----------
    values : ndarray of complex
        Eigenvalues sorted by (real part, imaginary part).
    tol_class : float
        Tolerance used to classify eigenvalues into half planes.
    cluster_radius : float
        Radius used to merge eigenvalues belonging to one defective cluster.
    """

    values: np.ndarray
    tol_class: float
    cluster_radius: float

    def __len__(self):
        return self.values.size

    @property
    def real(self) -> np.ndarray:
        return self.values.real

    @property
    def imag(self) -> np.ndarray:
        return self.values.imag

    def clustered(self) -> np.ndarray:
        """Eigenvalues with each defective cluster replaced by its mean."""
        return cluster_means(self.values, self.cluster_radius)

    def pairs(self):
        """List of ``(re, im)`` tuples."""
        return [(float(v.real), float(v.imag)) for v in self.values]


def _sorted_spectrum(values: np.ndarray) -> np.ndarray:
    order = np.lexsort((values.imag, values.real))
    return values[order]


def eigenvalues(M, tol_class: Optional[float] = None) -> ComplexSpectrum:
    """All eigenvalues of a square matrix (LAPACK Hessenberg QR)."""
    M = as_matrix(M, "M", square=True)
    if M.shape[0] > MAX_DIM:
        raise DimensionError(f"dimension {M.shape[0]} exceeds the cap of {MAX_DIM}")
    try:
        vals = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise KernelError(f"eigenvalue iteration did not converge: {exc}") from exc
    vals = _sorted_spectrum(np.asarray(vals, dtype=complex))
    tol = default_tol(M) if tol_class is None else float(tol_class)
    radius = CLUSTER_RTOL * (1.0 + np.linalg.norm(M, 2))
    return ComplexSpectrum(values=vals, tol_class=tol, cluster_radius=radius)


# ---------------------------------------------------------------------------
# spectral regions and ordered Schur


@dataclass(frozen=True)
class SpectralRegion:
    """Predicate selecting one part of the spectrum.

    ``kind`` is one of ``right`` (Re > tol), ``left`` (Re <= tol),
    ``negative`` (Re < -tol), ``imaginary`` (|Re| <= tol, |Im| > tol) or
    ``zero`` (|Re| <= tol, |Im| <= tol). Eigenvalues on the imaginary axis
    therefore belong to the left group.

    An eigenvalue is *ambiguous* when a coordinate that decides membership
    falls in the guard band ``(tol, 2 tol]``.
    """

    kind: str
    tol: float

    def __post_init__(self):
        if self.kind not in ("right", "left", "negative", "imaginary", "zero"):
            raise ValueError(f"unknown spectral region {self.kind!r}")

    def __call__(self, re: float, im: float) -> bool:
        tol = self.tol
        if self.kind == "right":
            return re > tol
        if self.kind == "left":
            return re <= tol
        if self.kind == "negative":
            return re < -tol
        if self.kind == "imaginary":
            return abs(re) <= tol and abs(im) > tol
        return abs(re) <= tol and abs(im) <= tol

    def is_ambiguous(self, re: float, im: float) -> bool:
        tol = self.tol
        if tol < abs(re) <= 2 * tol:
            return True
        if self.kind in ("imaginary", "zero") and abs(re) <= tol:
            return tol < abs(im) <= 2 * tol
        return False


def schur_eigenvalues(T: np.ndarray) -> np.ndarray:
    """Eigenvalues read off the diagonal blocks of a quasi-triangular T."""
    n = T.shape[0]
    out = np.empty(n, dtype=complex)
    i = 0
    while i < n:
        if i + 1 < n and T[i + 1, i] != 0.0:
            out[i : i + 2] = np.linalg.eigvals(T[i : i + 2, i : i + 2])
            i += 2
        else:
            out[i] = T[i, i]
            i += 1
    return out


def ordered_schur(
    M,
    select: Callable[[float, float], bool],
    tol_class: Optional[float] = None,
) -> Tuple[np.ndarray, np.ndarray, int]:
    """Real Schur form ``M = Q T Q'`` with selected eigenvalues leading.

    Parameters
    ----------
    M : array_like
        Square real matrix.
    select : callable
        ``select(re, im) -> bool``. Evaluated on cluster means, so every
        member of a defective cluster lands on the same side. If the
        callable has an ``is_ambiguous`` method (see :class:`SpectralRegion`)
        it is used as a guard.
    tol_class : float, optional
        Only used to build the cluster radius scale; kept for symmetry
        with :func:`eigenvalues`.

    Returns
    -------
    Q : ndarray
        Orthogonal Schur vectors.
    T : ndarray
        Quasi-upper-triangular Schur factor.
    k : int
        Number of selected eigenvalues; ``T[:k, :k]`` carries exactly them.
    """
    M = as_matrix(M, "M", square=True)
    n = M.shape[0]
    if n > MAX_DIM:
        raise DimensionError(f"dimension {n} exceeds the cap of {MAX_DIM}")
    try:
        T, Q = sla.schur(M, output="real")
    except np.linalg.LinAlgError as exc:
        raise KernelError(f"Schur iteration did not converge: {exc}") from exc
    raw = schur_eigenvalues(T)
    radius = CLUSTER_RTOL * (1.0 + np.linalg.norm(M, 2))
    means = cluster_means(raw, radius)
    guard = getattr(select, "is_ambiguous", None)
    mask = np.zeros(n, dtype=bool)
    for i, lam in enumerate(means):
        re, im = float(lam.real), float(lam.imag)
        if guard is not None and guard(re, im):
            raise AmbiguousSpectrumError(
                f"eigenvalue {raw[i]:.6g} is within the classification guard band"
            )
        mask[i] = bool(select(re, im))
    # both halves of a 2x2 block must move together
    i = 0
    while i < n:
        if i + 1 < n and T[i + 1, i] != 0.0:
            both = mask[i] or mask[i + 1]
            mask[i] = mask[i + 1] = both
            i += 2
        else:
            i += 1
    k = int(mask.sum())
    if k in (0, n):
        return Q, T, k
    ts, qs, _, _, m, _, _, info = lapack.dtrsen(mask.astype(np.int32), T, Q, job="N")
    if info != 0:
        raise KernelError(f"Schur reordering failed (dtrsen info={info})")
    if m != k:
        raise KernelError(f"Schur reordering selected {m} eigenvalues, expected {k}")
    return qs, ts, k


# ---------------------------------------------------------------------------
# covariances


def lyapunov_stationary(F, AAt, tol_class: Optional[float] = None) -> np.ndarray:
    """Solve ``F S + S F' + AA' = 0`` for a stable drift F.

    The solution equals ``int_0^inf e^{Fu} AA' e^{F'u} du``, the stationary
    covariance of ``dY = FY dt + A dW``.
    """
    F = as_matrix(F, "F", square=True)
    AAt = as_matrix(AAt, "AAt", square=True)
    p = F.shape[0]
    if AAt.shape != (p, p):
        raise DimensionError("AAt must match the shape of F")
    spec = eigenvalues(F, tol_class)
    if np.max(spec.real) >= -spec.tol_class:
        raise DomainError("drift is not stable: some eigenvalue has Re >= -tol")
    AAt = 0.5 * (AAt + AAt.T)
    if p <= KRONECKER_MAX_DIM:
        eye = np.eye(p)
        K = np.kron(eye, F) + np.kron(F, eye)
        # column-major vec so that vec(F S + S F') = K vec(S)
        vec = np.linalg.solve(K, -AAt.reshape(-1, order="F"))
        S = vec.reshape(p, p, order="F")
    else:
        S = sla.solve_continuous_lyapunov(F, -AAt)
    return 0.5 * (S + S.T)


def transition_moments(F, AAt, dt: float) -> Tuple[np.ndarray, np.ndarray]:
    """Return ``(e^{F dt}, Q(dt))`` for the linear SDE ``dY = FY dt + A dW``.

    ``Q(dt) = int_0^dt e^{Fs} AA' e^{F's} ds`` comes from exponentiating the
    block matrix ``[[-F, AA'], [0, F']]``: ``Q = E22' E12``. Long steps are
    split into ``2^k`` short ones and recombined with the semigroup identity
    ``Q(2h) = Q(h) + e^{Fh} Q(h) e^{F'h}``, since a single block exponential
    loses all accuracy once ``e^{-F dt}`` is large.
    """
    F = as_matrix(F, "F", square=True)
    AAt = as_matrix(AAt, "AAt", square=True)
    p = F.shape[0]
    if AAt.shape != (p, p):
        raise DimensionError("AAt must match the shape of F")
    if not (dt > 0 and math.isfinite(dt)):
        raise DomainError("dt must be positive and finite")
    scale = np.linalg.norm(F, 1) + np.linalg.norm(AAt, 1)
    k = 0
    if scale * dt > 0.5:
        k = int(math.ceil(math.log2(scale * dt / 0.5)))
    h = dt / 2.0**k
    block = np.zeros((2 * p, 2 * p))
    block[:p, :p] = -F
    block[:p, p:] = AAt
    block[p:, p:] = F.T
    big = matexp(block, h)
    E = big[p:, p:].T
    Q = E @ big[:p, p:]
    Q = 0.5 * (Q + Q.T)
    with np.errstate(over="raise", invalid="raise"):
        try:
            for _ in range(k):
                Q = Q + E @ Q @ E.T
                Q = 0.5 * (Q + Q.T)
                E = E @ E
        except FloatingPointError as exc:
            raise ExpOverflowError("transition covariance overflowed") from exc
    if not (np.all(np.isfinite(Q)) and np.all(np.isfinite(E))):
        raise ExpOverflowError("transition covariance overflowed")
    return E, Q


def noise_covariance(F, AAt, dt: float) -> np.ndarray:
    """Transition covariance ``Q(dt) = int_0^dt e^{Fs} AA' e^{F's} ds``."""
    return transition_moments(F, AAt, dt)[1]


def sym_eig(M) -> Tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues and orthonormal eigenvectors of symmetric M."""
    M = as_matrix(M, "M", square=True)
    M = 0.5 * (M + M.T)
    vals, vecs = np.linalg.eigh(M)
    return vals, vecs


def lambda_min(M) -> float:
    return float(sym_eig(M)[0][0])


def lambda_max(M) -> float:
    return float(sym_eig(M)[0][-1])


def sym_inv_sqrt(M) -> np.ndarray:
    """``M^{-1/2}`` for symmetric positive definite M."""
    vals, vecs = sym_eig(M)
    if vals[0] <= 0:
        raise DomainError("matrix is not positive definite")
    return (vecs / np.sqrt(vals)) @ vecs.T


def sym_sqrt(M) -> np.ndarray:
    """``M^{1/2}`` for symmetric positive semidefinite M (negatives clipped)."""
    vals, vecs = sym_eig(M)
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def numerical_rank(M, tol: float = 1e-8) -> int:
    """Rank via singular values above ``tol * sigma_max``."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))
