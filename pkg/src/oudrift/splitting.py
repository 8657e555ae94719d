"""Spectral splitting ``M_i F = G_i M_i`` by ordered real Schur forms.

Rows of ``M_i`` form an orthonormal basis of a left-invariant subspace of F
(an invariant subspace of F'), so ``U_i = M_i Y`` follows the reduced OU
dynamics ``dU_i = G_i U_i dt + M_i A dW``. Rows of ``M0`` and ``M1`` are each
orthonormal but are not orthogonal to one another in general;
:attr:`SpectralSplit.cross_norm` reports ``||M0 M1'||``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from . import linalg
from .errors import DimensionError, DomainError
from .linalg import SpectralRegion
from .model import check_rank_condition


def _left_invariant_basis(F: np.ndarray, region: SpectralRegion):
    Q, _, k = linalg.ordered_schur(F.T, region)
    M = Q[:, :k].T.copy()
    G = M @ F @ M.T
    residual = float(np.linalg.norm(M @ F - G @ M)) if k else 0.0
    return M, G, residual


@dataclass(frozen=True, eq=False)
class SpectralSplit:
    """Right/left half-plane split of a drift matrix F.

    ``M0`` is ``p0 x p`` and ``G0`` carries the eigenvalues with Re > tol;
    ``M1`` is ``p1 x p`` and ``G1`` the rest.
    """

    M0: np.ndarray
    M1: np.ndarray
    G0: np.ndarray
    G1: np.ndarray
    residual0: float
    residual1: float
    tol: float

    @property
    def p0(self) -> int:
        return self.M0.shape[0]

    @property
    def p1(self) -> int:
        return self.M1.shape[0]

    @property
    def M(self) -> np.ndarray:
        """Stacked ``[M0; M1]`` (square and nonsingular)."""
        return np.vstack([self.M0, self.M1])

    @property
    def cross_norm(self) -> float:
        if self.p0 == 0 or self.p1 == 0:
            return 0.0
        return float(np.linalg.norm(self.M0 @ self.M1.T))


def split_half_planes(F, tol: Optional[float] = None) -> SpectralSplit:
    """Split F into right (Re > tol) and left (Re <= tol) spectral parts.

    Raises
    ------
    AmbiguousSpectrumError
        If some eigenvalue has ``tol < |Re| <= 2 tol``.
    """
    F = linalg.as_matrix(F, "F", square=True)
    tol = linalg.default_tol(F) if tol is None else float(tol)
    M0, G0, r0 = _left_invariant_basis(F, SpectralRegion("right", tol))
    M1, G1, r1 = _left_invariant_basis(F, SpectralRegion("left", tol))
    if M0.shape[0] + M1.shape[0] != F.shape[0]:
        raise DimensionError("spectral split does not cover the whole spectrum")
    return SpectralSplit(M0=M0, M1=M1, G0=G0, G1=G1, residual0=r0, residual1=r1, tol=tol)


@dataclass(frozen=True, eq=False)
class SubBlock:
    """One part ``M G1 = G M`` of the left block (coordinates of ``U_1``)."""

    M: np.ndarray
    G: np.ndarray
    residual: float

    @property
    def size(self) -> int:
        return self.M.shape[0]


def split_left_block(G1, tol: Optional[float] = None) -> Dict[str, SubBlock]:
    """Split a left-half-plane block into negative, imaginary and zero parts.

    Returns a dict keyed ``"negative"``, ``"imaginary"``, ``"zero"``; empty
    parts have zero rows.
    """
    G1 = linalg.as_matrix(G1, "G1", square=True)
    tol = linalg.default_tol(G1) if tol is None else float(tol)
    spec = linalg.eigenvalues(G1, tol)
    if np.any(linalg.cluster_means(spec.values, spec.cluster_radius).real > tol):
        raise DomainError("G1 has eigenvalues in the right half plane")
    parts = {}
    for kind in ("negative", "imaginary", "zero"):
        M, G, res = _left_invariant_basis(G1, SpectralRegion(kind, tol))
        parts[kind] = SubBlock(M=M, G=G, residual=res)
    if sum(part.size for part in parts.values()) != G1.shape[0]:
        raise DimensionError("left-block split does not cover the whole spectrum")
    return parts


def check_subblock_rank(split: SpectralSplit, A, tol: float = 1e-8) -> Tuple[bool, bool]:
    """Controllability of each reduced system ``(G_i, M_i A)``.

    An empty block is vacuously controllable.
    """
    A = linalg.as_matrix(A, "A")
    out = []
    for M, G in ((split.M0, split.G0), (split.M1, split.G1)):
        if M.shape[0] == 0:
            out.append(True)
            continue
        holds, _ = check_rank_condition(G, M @ A, tol)
        out.append(holds)
    return out[0], out[1]
