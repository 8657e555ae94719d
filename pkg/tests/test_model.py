import numpy as np
import pytest
from hypothesis import given, strategies as st

from oudrift import linalg
from oudrift.errors import DimensionError, DomainError, RankConditionError
from oudrift.model import (
    OUModel,
    car_model,
    check_condition_b,
    check_condition_b_prime,
    check_rank_condition,
    classify,
    controllability_matrix,
    drift_log_likelihood,
    drift_log_likelihood_grad,
    log_likelihood,
    stationary_covariance,
)
from oudrift.simulate import SufficientStats

from conftest import EXAMPLE_5X5


def _random_orthogonal(rng, p):
    Q, R = np.linalg.qr(rng.standard_normal((p, p)))
    return Q * np.sign(np.diag(R))


# --- RANK and structural conditions ----------------------------------------


def test_rank_car2():
    m = car_model([-3.0, -2.0], 0.7)
    assert check_rank_condition(m.F, m.A) == (True, 2)


def test_rank_identity_noise(rng):
    F = rng.standard_normal((5, 5))
    assert check_rank_condition(F, np.eye(5)) == (True, 5)


def test_rank_zero_noise():
    assert check_rank_condition(np.eye(3), np.zeros((3, 2))) == (False, 0)


def test_rank_fails_for_invariant_subspace():
    F = np.diag([1.0, -1.0, 2.0])
    A = np.array([[1.0], [1.0], [0.0]])  # never reaches the third axis
    holds, rank = check_rank_condition(F, A)
    assert not holds and rank == 2
    assert np.linalg.matrix_rank(controllability_matrix(F, A)) == 2


def test_rank_invariant_under_right_multiplication(rng):
    F = rng.standard_normal((4, 4))
    A = rng.standard_normal((4, 2))
    B = rng.standard_normal((2, 2)) + 3 * np.eye(2)
    assert check_rank_condition(F, A) == check_rank_condition(F, A @ B)


def test_condition_b_examples():
    M = np.array([[2, 0, 0], [0, 0, -1], [0, 1, 0]], dtype=float)
    assert check_condition_b(linalg.eigenvalues(M))
    assert not check_condition_b(linalg.eigenvalues(EXAMPLE_5X5))
    assert check_condition_b(linalg.eigenvalues(np.diag([1.0, 2.0, -1.0])))
    # repeated negative eigenvalues do not matter
    assert check_condition_b(linalg.eigenvalues(np.diag([1.0, -1.0, -1.0])))


def test_condition_b_prime_examples():
    assert check_condition_b_prime(car_model([0.5, -1.0, 2.0], 1.0).F)
    assert not check_condition_b_prime(np.eye(2))
    assert not check_condition_b_prime(EXAMPLE_5X5)
    # minimal polynomial of the example is (t-2)^2 (t^2+1): degree 4
    N = (EXAMPLE_5X5 - 2 * np.eye(5)) @ (EXAMPLE_5X5 - 2 * np.eye(5)) @ (EXAMPLE_5X5 @ EXAMPLE_5X5 + np.eye(5))
    assert np.allclose(N, 0, atol=1e-9)
    N3 = (EXAMPLE_5X5 - 2 * np.eye(5)) @ (EXAMPLE_5X5 @ EXAMPLE_5X5 + np.eye(5))
    assert not np.allclose(N3, 0, atol=1e-6)


@given(st.integers(1, 5), st.integers(0, 10_000))
def test_car_models_pass_a_and_b_prime(p, seed):
    alphas = np.random.default_rng(seed).uniform(-3, 3, p)
    m = car_model(alphas, 1.0)
    assert check_rank_condition(m.F, m.A)[0]
    assert check_condition_b_prime(m.F)


# --- classification ---------------------------------------------------------


def test_classify_mixed_diag():
    r = classify(np.diag([1.0, -1.0]))
    assert (r.p0, r.p1, r.kind) == (1, 1, "mixed")
    assert r.lambda0 == pytest.approx(1.0) and r.Lambda0 == pytest.approx(1.0)


def test_classify_example():
    r = classify(EXAMPLE_5X5)
    assert (r.p0, r.p1, r.kind, r.n_imaginary, r.rho) == (3, 2, "mixed", 2, 1)
    assert r.lambda0 == pytest.approx(2.0, abs=1e-7)


def test_classify_nilpotent_and_rotation():
    r = classify([[0.0, 1.0], [0.0, 0.0]])
    assert r.kind == "zero" and r.gamma == 2 and r.rho == 0
    r = classify([[0.0, -1.0], [1.0, 0.0]])
    assert r.kind == "imaginary" and r.rho == 1 and r.gamma == 0
    r = classify(np.zeros((3, 3)))
    assert r.kind == "zero" and r.gamma == 1


def test_classify_other_kinds():
    assert classify(np.diag([1.0, 2.0])).kind == "right"
    assert classify(np.diag([-1.0, -2.0])).kind == "stable"
    assert classify(np.diag([-1.0, 0.0])).kind == "left-mixed"
    r = classify(np.diag([3.0, 1.0, -2.0]))
    assert r.lambda0 == pytest.approx(1.0) and r.Lambda0 == pytest.approx(3.0)


def test_classify_defective_imaginary_rho2(rng):
    R = np.array([[0.0, -1.0], [1.0, 0.0]])
    J = np.block([[R, np.eye(2)], [np.zeros((2, 2)), R]])
    Q = _random_orthogonal(rng, 4)
    assert classify(Q @ J @ Q.T).rho == 2


def test_classify_gamma_on_schur_block():
    F = np.zeros((4, 4))
    F[0, 0] = 1.5
    F[1, 2] = 1.0
    F[2, 3] = 1.0
    r = classify(F)
    assert (r.p0, r.n_zero, r.gamma, r.kind) == (1, 3, 3, "mixed")


@given(st.integers(0, 10_000))
def test_classify_orthogonal_invariance(seed):
    rng = np.random.default_rng(seed)
    p = int(rng.integers(2, 6))
    F = rng.standard_normal((p, p))
    tol = linalg.default_tol(F)
    if np.any(np.abs(np.linalg.eigvals(F).real) <= 1e-3):
        return
    Q = _random_orthogonal(rng, p)
    a, b = classify(F), classify(Q @ F @ Q.T)
    assert (a.p0, a.p1, a.gamma, a.kind) == (b.p0, b.p1, b.gamma, b.kind)
    assert a.Lambda0 == pytest.approx(b.Lambda0, abs=1e-8)
    if a.p0:
        assert a.lambda0 == pytest.approx(b.lambda0, abs=1e-8)


# --- models -----------------------------------------------------------------


def test_model_validation():
    with pytest.raises(DimensionError):
        OUModel(np.eye(2), np.eye(3))
    with pytest.raises(DimensionError):
        OUModel(np.eye(2), np.eye(2), [1.0, 2.0, 3.0])
    with pytest.raises(RankConditionError) as info:
        OUModel(np.eye(2), np.zeros((2, 1)))
    assert info.value.rank == 0
    m = OUModel(np.eye(2), np.zeros((2, 1)), check_rank=False)
    assert m.p == 2 and m.r == 1
    with pytest.raises(ValueError):
        m.F[0, 0] = 3.0


def test_car_model_layout():
    m = car_model([-1.0], 1.0)
    assert m.F.tolist() == [[-1.0]] and m.A.tolist() == [[1.0]]
    m = car_model([-3.0, -2.0], 0.5)
    assert m.F.tolist() == [[0.0, 1.0], [-2.0, -3.0]]
    assert m.A.tolist() == [[0.0], [0.5]]
    with pytest.raises(DomainError):
        car_model([-1.0], 0.0)


def test_stationary_covariance():
    assert np.allclose(stationary_covariance(OUModel(-0.5 * np.eye(2), np.eye(2))), np.eye(2))
    assert np.allclose(stationary_covariance(OUModel(np.diag([-1.0, -2.0]), np.eye(2))), np.diag([0.5, 0.25]))
    # x'' = -3 x' - 2 x + W': Var(x) = 1/(2*3*2), Var(x') = 1/(2*3)
    S = stationary_covariance(car_model([-3.0, -2.0], 1.0))
    assert np.allclose(S, np.diag([1 / 12, 1 / 6]), atol=1e-13)
    with pytest.raises(DomainError):
        stationary_covariance(OUModel(np.zeros((1, 1)), np.eye(1)))


# --- likelihood -------------------------------------------------------------


def _stats(C, S):
    p = C.shape[0]
    return SufficientStats(C, S, np.zeros((p, p)), np.zeros(p), 1.0, 1.0, 1)


def test_likelihood_zero_drift(rng):
    C = np.eye(2) * 3
    S = rng.standard_normal((2, 2))
    assert drift_log_likelihood(np.zeros((2, 2)), np.eye(2), S, C) == 0.0


def test_likelihood_maximiser_is_exact(rng):
    B = rng.standard_normal((3, 3))
    C = B @ B.T + np.eye(3)
    F0 = rng.standard_normal((3, 3))
    W = rng.standard_normal((3, 3))
    AAt = W @ W.T + np.eye(3)
    S = F0 @ C
    assert np.allclose(drift_log_likelihood_grad(F0, AAt, S, C), 0, atol=1e-12)
    base = drift_log_likelihood(F0, AAt, S, C)
    for _ in range(20):
        D = rng.standard_normal((3, 3))
        assert drift_log_likelihood(F0 + 1e-3 * D, AAt, S, C) < base


def test_likelihood_gradient_finite_differences(rng):
    B = rng.standard_normal((3, 3))
    C = B @ B.T + np.eye(3)
    S = rng.standard_normal((3, 3))
    AAt = np.diag([1.0, 2.0, 0.5])
    F = rng.standard_normal((3, 3))
    G = drift_log_likelihood_grad(F, AAt, S, C)
    h = 1e-5
    fd = np.zeros_like(F)
    for i in range(3):
        for j in range(3):
            E = np.zeros_like(F)
            E[i, j] = h
            fd[i, j] = (
                drift_log_likelihood(F + E, AAt, S, C) - drift_log_likelihood(F - E, AAt, S, C)
            ) / (2 * h)
    assert np.linalg.norm(fd - G) <= 1e-6 * np.linalg.norm(G)


def test_likelihood_singular_diffusion():
    m = car_model([-3.0, -2.0], 1.0)
    with pytest.raises(DomainError, match="estimate_drift"):
        log_likelihood(m, _stats(np.eye(2), np.eye(2)))
