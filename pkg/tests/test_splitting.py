import numpy as np
import pytest
from hypothesis import given, strategies as st

from oudrift import linalg
from oudrift.errors import AmbiguousSpectrumError, DomainError
from oudrift.model import check_rank_condition
from oudrift.splitting import check_subblock_rank, split_half_planes, split_left_block

from conftest import EXAMPLE_5X5


def _assert_valid(split, F):
    tol = 1e-8 * max(1.0, np.linalg.norm(F, 2))
    for M, G, res in ((split.M0, split.G0, split.residual0), (split.M1, split.G1, split.residual1)):
        if M.shape[0] == 0:
            continue
        assert np.linalg.norm(M @ F - G @ M) <= tol
        assert res <= tol
        assert np.allclose(M @ M.T, np.eye(M.shape[0]), atol=1e-10)
    assert np.linalg.matrix_rank(split.M) == F.shape[0]


def test_split_diag():
    F = np.diag([1.0, -1.0])
    sp = split_half_planes(F)
    assert np.allclose(np.abs(sp.M0), [[1, 0]]) and np.allclose(sp.G0, [[1]])
    assert np.allclose(np.abs(sp.M1), [[0, 1]]) and np.allclose(sp.G1, [[-1]])
    _assert_valid(sp, F)


def test_split_stable_is_trivial():
    F = np.array([[-1.0, 3.0], [0.0, -2.0]])
    sp = split_half_planes(F)
    assert sp.p0 == 0 and sp.p1 == 2
    assert np.allclose(np.sort(np.linalg.eigvals(sp.G1)), [-2, -1])
    assert sp.residual1 <= 1e-14 * np.linalg.norm(F)
    assert sp.cross_norm == 0.0


def test_split_example():
    sp = split_half_planes(EXAMPLE_5X5)
    assert (sp.p0, sp.p1) == (3, 2)
    assert np.allclose(np.linalg.eigvals(sp.G0), 2.0, atol=1e-4)
    assert np.allclose(np.sort_complex(np.linalg.eigvals(sp.G1)), [-1j, 1j], atol=1e-7)
    _assert_valid(sp, EXAMPLE_5X5)
    # the two row blocks are not orthogonal to each other in general
    assert sp.cross_norm > 0.1


def test_split_guard_band():
    with pytest.raises(AmbiguousSpectrumError):
        split_half_planes(np.diag([1.5e-3, -1.0]), tol=1e-3)


@given(st.integers(0, 10_000))
def test_split_preserves_spectrum(seed):
    rng = np.random.default_rng(seed)
    p = int(rng.integers(2, 7))
    F = rng.standard_normal((p, p))
    if np.any(np.abs(np.linalg.eigvals(F).real) <= 1e-3):
        return
    sp = split_half_planes(F)
    _assert_valid(sp, F)
    both = np.concatenate([np.linalg.eigvals(sp.G0), np.linalg.eigvals(sp.G1)])
    assert np.allclose(np.sort_complex(both), np.sort_complex(np.linalg.eigvals(F)), atol=1e-7)
    assert np.all(np.linalg.eigvals(sp.G0).real > 0)
    assert np.all(np.linalg.eigvals(sp.G1).real <= 0)


def test_left_block_examples():
    a = split_left_block(np.diag([-1.0, 0.0]))
    assert (a["negative"].size, a["imaginary"].size, a["zero"].size) == (1, 0, 1)
    assert np.allclose(a["negative"].G, [[-1]])
    b = split_left_block([[0.0, -1.0], [1.0, 0.0]])
    assert (b["negative"].size, b["imaginary"].size, b["zero"].size) == (0, 2, 0)


def test_left_block_mixed_sizes():
    G = np.zeros((5, 5))
    G[0, 0] = -2.0
    G[1:3, 1:3] = [[0.0, -4.0], [1.0, 0.0]]
    G[3:5, 3:5] = [[0.0, 1.0], [0.0, 0.0]]
    # characteristic polynomial (t + 2)(t^2 + 4) t^2
    expected = np.polymul(np.polymul([1, 2], [1, 0, 4]), [1, 0, 0])
    assert np.allclose(np.poly(G), expected)
    parts = split_left_block(G)
    assert [parts[k].size for k in ("negative", "imaginary", "zero")] == [1, 2, 2]
    for part in parts.values():
        assert part.residual <= 1e-8 * np.linalg.norm(G, 2)
    assert np.allclose(np.sort_complex(np.linalg.eigvals(parts["imaginary"].G)), [-2j, 2j])


def test_left_block_rejects_right_eigenvalues():
    with pytest.raises(DomainError):
        split_left_block(np.diag([1.0, -1.0]))


def test_subblock_rank_identity():
    sp = split_half_planes(EXAMPLE_5X5)
    assert check_subblock_rank(sp, np.eye(5)) == (True, True)


def test_subblock_rank_detects_failure():
    F = np.diag([1.0, 2.0, -1.0])
    A = np.array([[1.0], [0.0], [1.0]])  # misses the eigenvalue-2 direction
    assert not check_rank_condition(F, A)[0]
    sp = split_half_planes(F)
    r0, r1 = check_subblock_rank(sp, A)
    assert not r0 and r1
    s = np.linalg.svd(np.hstack([sp.M0 @ A, sp.G0 @ sp.M0 @ A]), compute_uv=False)
    assert s[-1] <= 1e-12


def test_subblock_rank_degenerate_split():
    F = np.diag([-1.0, -2.0])
    sp = split_half_planes(F)
    assert check_subblock_rank(sp, np.eye(2)) == (True, True)
    assert check_subblock_rank(sp, np.array([[1.0], [0.0]])) == (True, False)


@given(st.integers(0, 10_000))
def test_global_rank_implies_block_rank(seed):
    rng = np.random.default_rng(seed)
    p = int(rng.integers(2, 6))
    F = rng.standard_normal((p, p))
    A = rng.standard_normal((p, int(rng.integers(1, 3))))
    if np.any(np.abs(np.linalg.eigvals(F).real) <= 1e-3) or not check_rank_condition(F, A)[0]:
        return
    assert check_subblock_rank(split_half_planes(F), A) == (True, True)
