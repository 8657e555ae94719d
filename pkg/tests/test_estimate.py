import math

import numpy as np
import pytest
import scipy.integrate
from hypothesis import given, strategies as st

from oudrift import linalg
from oudrift.errors import ConfigError, DimensionError, SingularStatsError
from oudrift.estimate import (
    efficiency_statistic,
    estimate,
    estimate_diffusion,
    estimate_drift,
    expected_CT,
    normalized_block_errors,
)
from oudrift.model import OUModel, car_model
from oudrift.simulate import SimConfig, SufficientStats, simulate_batch, simulate_path, simulate_stats, stats_from_path
from oudrift.splitting import split_half_planes


def _stats(C, S, QV=None, T=1.0):
    p = C.shape[0]
    QV = np.zeros((p, p)) if QV is None else QV
    return SufficientStats(C, S, QV, np.zeros(p), T, T, 1)


def _spd(rng, p):
    B = rng.standard_normal((p, p))
    return B @ B.T + 0.5 * np.eye(p)


# --- algebra ----------------------------------------------------------------


@given(st.integers(0, 10_000))
def test_exact_recovery(seed):
    rng = np.random.default_rng(seed)
    p = int(rng.integers(1, 6))
    C = _spd(rng, p)
    F = rng.standard_normal((p, p))
    F_hat = estimate_drift(_stats(C, F @ C))
    assert np.allclose(F_hat, F, atol=1e-9 * np.linalg.cond(C))


def test_residual_is_orthogonal_to_regressors(rng):
    st_ = simulate_stats(car_model([-3.0, -2.0], 1.0), SimConfig(0.01, 20.0, seed=1))
    F_hat = estimate_drift(st_)
    resid = st_.S_T - F_hat @ st_.C_T
    assert np.linalg.norm(resid) <= 1e-12 * np.linalg.norm(st_.S_T)


def test_equivariance_under_change_of_basis(rng):
    m = OUModel([[-1.0, 0.5], [0.0, -2.0]], np.eye(2), [1.0, -1.0])
    _, path, st_ = simulate_path(m, SimConfig(0.01, 15.0, seed=3, store_path=True))
    P = np.array([[2.0, 1.0], [-0.5, 1.5]])
    moved = stats_from_path(path @ P.T, 0.01)
    lhs = estimate_drift(moved)
    rhs = P @ estimate_drift(st_) @ np.linalg.inv(P)
    assert np.allclose(lhs, rhs, rtol=1e-9, atol=1e-11)
    assert np.allclose(estimate_diffusion(moved), P @ estimate_diffusion(st_) @ P.T, rtol=1e-10)


def test_singular_CT_is_reported():
    C = np.diag([1.0, 0.0])
    with pytest.raises(SingularStatsError) as info:
        estimate_drift(_stats(C, np.eye(2)))
    assert info.value.lambda_min == 0.0
    # degenerate noise direction gives singular C_T from a real simulation
    m = OUModel(np.diag([-1.0, -1.0]), np.array([[1.0], [0.0]]), check_rank=False)
    with pytest.raises(SingularStatsError):
        estimate_drift(simulate_stats(m, SimConfig(0.01, 5.0)))


def test_estimate_diffusion_symmetrises_and_validates():
    QV = np.array([[2.0, 1.0], [1.0 + 1e-15, 4.0]])
    out = estimate_diffusion(_stats(np.eye(2), np.eye(2), QV, T=2.0))
    assert np.array_equal(out, out.T) and out[1, 1] == 2.0


def test_efficiency_statistic():
    ECT = np.diag([2.0, 3.0])
    F = np.eye(2)
    assert efficiency_statistic(F, F, ECT) == 0.0
    D = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert efficiency_statistic(F + D, F, ECT) == pytest.approx(5.0)
    with pytest.raises(DimensionError):
        efficiency_statistic(F, F, np.eye(3))


def test_estimate_bundle():
    m = car_model([-3.0, -2.0], 1.0)
    st_ = simulate_stats(m, SimConfig(0.01, 10.0, seed=4))
    ECT = expected_CT(m, 10.0)
    res = estimate(st_, m, ECT)
    assert res.error_fro == pytest.approx(np.linalg.norm(res.F_hat - m.F))
    assert res.efficiency_stat == pytest.approx(efficiency_statistic(res.F_hat, m.F, ECT))
    assert res.lambda_min_CT <= res.lambda_max_CT
    assert estimate(st_).error_fro is None


# --- statistical behaviour --------------------------------------------------


def test_stable_scalar_median_error():
    m = OUModel([[-1.0]], [[1.0]])
    b = simulate_batch(m, 0.01, [100.0], seed=0, replicates=range(200))
    err = np.median([abs(estimate_drift(s)[0, 0] + 1.0) for s in b.stats[0]])
    assert err <= 0.15


def test_unstable_scalar_median_error():
    m = OUModel([[0.5]], [[1.0]])
    b = simulate_batch(m, 1e-3, [30.0], seed=0, replicates=range(50))
    err = np.median([abs(estimate_drift(s)[0, 0] - 0.5) for s in b.stats[0]])
    assert err <= 1e-3


def test_diffusion_identity():
    m = OUModel([[-1.0, 0.5], [0.0, -2.0]], np.eye(2))
    st_ = simulate_stats(m, SimConfig(1e-3, 10.0, seed=5))
    assert np.linalg.norm(estimate_diffusion(st_) - np.eye(2)) <= 0.05


def test_diffusion_car_degenerate():
    st_ = simulate_stats(car_model([-3.0, -2.0], 0.5), SimConfig(1e-3, 10.0, seed=6))
    Q = estimate_diffusion(st_)
    assert abs(Q[0, 0]) <= 0.02 and abs(Q[0, 1]) <= 0.02
    assert Q[1, 1] == pytest.approx(0.25, abs=0.02)


# --- expected C_T -----------------------------------------------------------


def test_expected_CT_brownian():
    m = OUModel(np.zeros((2, 2)), np.eye(2))
    assert np.allclose(expected_CT(m, 7.0), 24.5 * np.eye(2), rtol=1e-12)


@pytest.mark.parametrize("T,y0", [(1.0, 0.0), (5.0, 2.0), (30.0, -1.0)])
def test_expected_CT_scalar(T, y0):
    m = OUModel([[-1.0]], [[1.0]], [y0])
    exact = T / 2 - (1 - math.exp(-2 * T)) / 4 + y0**2 * (1 - math.exp(-2 * T)) / 2
    assert expected_CT(m, T)[0, 0] == pytest.approx(exact, rel=1e-7)


def test_expected_CT_against_quadrature():
    F = np.array([[0.3, 1.0], [-1.0, -0.4]])
    Y0 = np.array([1.0, 0.5])
    m = OUModel(F, np.eye(2), Y0)

    def integrand(t, i, j):
        E = linalg.matexp(F, t)
        mean = E @ Y0
        Q = linalg.noise_covariance(F, np.eye(2), t) if t > 0 else np.zeros((2, 2))
        return (np.outer(mean, mean) + Q)[i, j]

    quad = np.array([[scipy.integrate.quad(integrand, 0, 6.0, args=(i, j))[0] for j in range(2)] for i in range(2)])
    assert np.allclose(expected_CT(m, 6.0), quad, rtol=1e-6)


def test_expected_CT_validation():
    m = OUModel([[-1.0]], [[1.0]])
    with pytest.raises(ConfigError):
        expected_CT(m, 0.0)
    with pytest.raises(ConfigError):
        expected_CT(m, 1.0, n_quad=3)


def test_expected_CT_matches_monte_carlo():
    m = OUModel([[-1.0, 0.5], [0.0, -2.0]], np.eye(2), [1.0, 1.0])
    b = simulate_batch(m, 0.001, [3.0], seed=7, replicates=range(500))
    Cs = np.stack([s.C_T for s in b.stats[0]])
    se = Cs.std(axis=0, ddof=1) / math.sqrt(Cs.shape[0])
    # Riemann bias at dt=1e-3 is far below 3 standard errors
    assert np.all(np.abs(Cs.mean(axis=0) - expected_CT(m, 3.0)) <= 3 * se + 5e-3)


# --- normalised errors ------------------------------------------------------


def test_block_errors_stable_reduce_to_sqrt_CT(rng):
    F = np.array([[-1.0, 0.5], [0.0, -2.0]])
    sp = split_half_planes(F)
    C = _spd(rng, 2)
    F_hat = F + 0.1 * rng.standard_normal((2, 2))
    e0, e1 = normalized_block_errors(F_hat, F, sp, C, 4.0)
    assert e0 == 0.0
    assert e1 == pytest.approx(np.linalg.norm((F_hat - F) @ linalg.sym_sqrt(C)) / 2.0, rel=1e-10)


def test_block_errors_unstable_decay():
    # at fixed dt the estimator targets (e^{F dt} - I)/dt, whose bias would be
    # amplified by e^{G0 T}; measure against that target
    m = OUModel(np.diag([0.5, -1.0]), np.eye(2))
    dt = 0.005
    target = (linalg.matexp(m.F, dt) - np.eye(2)) / dt
    sp = split_half_planes(m.F)
    out = []
    for T in (5.0, 20.0):
        b = simulate_batch(m, dt, [T], seed=8, replicates=range(40))
        errs = [normalized_block_errors(estimate_drift(s), target, sp, s.C_T, T) for s in b.stats[0]]
        out.append(np.median(errs, axis=0))
    assert out[1][0] < out[0][0] and out[1][1] < out[0][1]
