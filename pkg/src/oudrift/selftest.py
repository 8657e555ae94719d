"""Fast oracle suite run by ``oudrift selftest``.

Each check compares a library result against a closed form or a published
value; none of them needs Monte Carlo.
"""

from __future__ import annotations

import math
from typing import Callable, List, Tuple

import numpy as np

from . import linalg
from .errors import DomainError, RankConditionError
from .estimate import efficiency_statistic, estimate_diffusion, estimate_drift, expected_CT
from .linalg import SpectralRegion
from .model import (
    OUModel,
    car_model,
    check_condition_b,
    check_condition_b_prime,
    check_rank_condition,
    classify,
    drift_log_likelihood,
    stationary_covariance,
)
from .simulate import SimConfig, SufficientStats, simulate_stats
from .splitting import check_subblock_rank, split_half_planes, split_left_block

EXAMPLE_5X5 = np.array(
    [
        [2, -1, 0, 1, 0],
        [0, -8, 6, 14, 1],
        [0, 10, -4, -14, -1],
        [0, -10, 6, 16, 1],
        [0, -5, 3, 7, 0],
    ],
    dtype=float,
)

ROT = np.array([[0.0, -1.0], [1.0, 0.0]])
NIL = np.array([[0.0, 1.0], [0.0, 0.0]])


def _close(a, b, tol):
    return bool(np.allclose(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex), rtol=0, atol=tol))


def _sorted_eigs(M):
    v = np.linalg.eigvals(M)
    return v[np.lexsort((v.imag, v.real))]


def _stats(C, S, QV=None, T=1.0):
    p = C.shape[0]
    return SufficientStats(
        C_T=np.array(C, dtype=float),
        S_T=np.array(S, dtype=float),
        QV=np.zeros((p, p)) if QV is None else np.array(QV, dtype=float),
        Y_end=np.zeros(p),
        T=T,
        dt=T,
        n_steps=1,
    )


def _raises(exc, fn, *args, **kwargs):
    try:
        fn(*args, **kwargs)
    except exc:
        return True
    return False


def _checks() -> List[Tuple[str, Callable[[], bool]]]:
    out = []

    def check(name):
        def deco(fn):
            out.append((name, fn))
            return fn

        return deco

    @check("matexp of zero is identity")
    def _():
        return _close(linalg.matexp(np.zeros((2, 2)), 5.0), np.eye(2), 1e-15)

    @check("matexp rotation closed form at pi/2")
    def _():
        return _close(linalg.matexp(ROT, math.pi / 2), ROT, 1e-12)

    @check("matexp nilpotent series terminates")
    def _():
        return _close(linalg.matexp(NIL, 3.0), [[1, 3], [0, 1]], 1e-12)

    @check("eigenvalues of triangular matrix")
    def _():
        return _close(linalg.eigenvalues([[2, 0], [0, -1]]).values, [-1, 2], 1e-12)

    @check("eigenvalues of the 5x5 example are 2, 2, 2, -i, i")
    def _():
        vals = linalg.eigenvalues(EXAMPLE_5X5).clustered()
        return _close(vals, [-1j, 1j, 2, 2, 2], 1e-7)

    @check("eigenvalues of rotation are -i, i")
    def _():
        return _close(linalg.eigenvalues(ROT).values, [-1j, 1j], 1e-12)

    @check("ordered Schur selects one eigenvalue of diag(1,-1)")
    def _():
        Q, T, k = linalg.ordered_schur(np.diag([1.0, -1.0]), SpectralRegion("right", 1e-9))
        return k == 1 and _close(T[0, 0], 1.0, 1e-12)

    @check("ordered Schur selects three eigenvalues of the 5x5 example")
    def _():
        Q, T, k = linalg.ordered_schur(EXAMPLE_5X5, SpectralRegion("right", linalg.default_tol(EXAMPLE_5X5)))
        return k == 3 and _close(Q @ T @ Q.T, EXAMPLE_5X5, 1e-9 * np.linalg.norm(EXAMPLE_5X5, 2))

    @check("ordered Schur empty selection")
    def _():
        _, _, k = linalg.ordered_schur(np.diag([-1.0, -2.0]), SpectralRegion("right", 1e-9))
        return k == 0

    @check("Lyapunov solution for -0.5 I")
    def _():
        return _close(linalg.lyapunov_stationary(-0.5 * np.eye(2), np.eye(2)), np.eye(2), 1e-12)

    @check("Lyapunov solution for diag(-1,-2)")
    def _():
        return _close(linalg.lyapunov_stationary(np.diag([-1.0, -2.0]), np.eye(2)), np.diag([0.5, 0.25]), 1e-12)

    @check("transition covariance of Brownian motion")
    def _():
        return _close(linalg.noise_covariance(np.zeros((2, 2)), np.eye(2), 0.25), 0.25 * np.eye(2), 1e-14)

    @check("transition covariance of scalar OU")
    def _():
        return _close(linalg.noise_covariance([[-1.0]], [[1.0]], 1.0), [[(1 - math.exp(-2)) / 2]], 1e-12)

    @check("transition covariance of rotation")
    def _():
        return _close(linalg.noise_covariance(ROT, np.eye(2), 3.7), 3.7 * np.eye(2), 1e-10)

    @check("symmetric eigenvalues ascending")
    def _():
        vals, _ = linalg.sym_eig(np.diag([3.0, 1.0]))
        return _close(vals, [1, 3], 1e-15) and _close(linalg.sym_eig(np.eye(3))[0], [1, 1, 1], 1e-15)

    @check("RANK holds for CAR(2)")
    def _():
        m = car_model([-3, -2], 1.0)
        return check_rank_condition(m.F, m.A) == (True, 2)

    @check("RANK holds for nonsingular A")
    def _():
        F = np.random.default_rng(1).standard_normal((4, 4))
        return check_rank_condition(F, np.eye(4))[0]

    @check("RANK fails for A = 0")
    def _():
        return check_rank_condition(np.eye(2), np.zeros((2, 1))) == (False, 0)

    @check("condition (b) false on the 5x5 example")
    def _():
        return not check_condition_b(linalg.eigenvalues(EXAMPLE_5X5))

    @check("condition (b) true on {2, i, -i} and {1, 2, -1}")
    def _():
        a = np.array([[2, 0, 0], [0, 0, -1], [0, 1, 0]], dtype=float)
        return check_condition_b(linalg.eigenvalues(a)) and check_condition_b(
            linalg.eigenvalues(np.diag([1.0, 2.0, -1.0]))
        )

    @check("condition (b') true for companion matrices, false for I and the 5x5 example")
    def _():
        comp = car_model([0.3, -1.2, 0.5, 2.0], 1.0).F
        return (
            check_condition_b_prime(comp)
            and not check_condition_b_prime(np.eye(2))
            and not check_condition_b_prime(EXAMPLE_5X5)
        )

    @check("classify diag(1,-1) as mixed")
    def _():
        r = classify(np.diag([1.0, -1.0]))
        return (r.p0, r.p1, r.kind) == (1, 1, "mixed") and _close([r.lambda0, r.Lambda0], [1, 1], 1e-12)

    @check("classify the 5x5 example as mixed with p0=3, p1=2")
    def _():
        r = classify(EXAMPLE_5X5)
        return (r.p0, r.p1, r.kind) == (3, 2, "mixed")

    @check("classify nilpotent with gamma=2")
    def _():
        r = classify(NIL)
        return r.kind == "zero" and r.gamma == 2

    @check("CAR(1) is scalar OU, CAR(2) companion layout")
    def _():
        m1 = car_model([-1.0], 1.0)
        m2 = car_model([-3.0, -2.0], 0.5)
        return (
            _close(m1.F, [[-1]], 0)
            and _close(m1.A, [[1]], 0)
            and _close(m2.F, [[0, 1], [-2, -3]], 0)
            and _close(m2.A, [[0], [0.5]], 0)
        )

    @check("CAR(p) passes RANK and (b') for p = 1..5")
    def _():
        rng = np.random.default_rng(2)
        for p in range(1, 6):
            m = car_model(rng.uniform(-2, 2, p), 1.0)
            if not (check_rank_condition(m.F, m.A)[0] and check_condition_b_prime(m.F)):
                return False
        return True

    @check("stationary covariance of simple stable models")
    def _():
        a = stationary_covariance(OUModel(-0.5 * np.eye(2), np.eye(2)))
        b = stationary_covariance(OUModel(np.diag([-1.0, -2.0]), np.eye(2)))
        return _close(a, np.eye(2), 1e-12) and _close(b, np.diag([0.5, 0.25]), 1e-12)

    @check("stationary covariance refuses unstable drift")
    def _():
        return _raises(DomainError, stationary_covariance, OUModel(np.eye(2), np.eye(2)))

    @check("log-likelihood of F=0 is 0; maximiser of exact stats")
    def _():
        C = np.array([[2.0, 0.3], [0.3, 1.0]])
        F0 = np.array([[-1.0, 0.2], [0.4, -0.7]])
        S = F0 @ C
        zero = drift_log_likelihood(np.zeros((2, 2)), np.eye(2), S, C) == 0.0
        base = drift_log_likelihood(F0, np.eye(2), S, C)
        pert = drift_log_likelihood(F0 + 1e-3, np.eye(2), S, C)
        return zero and base > pert

    @check("spectral split of diag(1,-1)")
    def _():
        sp = split_half_planes(np.diag([1.0, -1.0]))
        return _close(np.abs(sp.M0), [[1, 0]], 1e-12) and _close(sp.G1, [[-1]], 1e-12)

    @check("spectral split of the 5x5 example")
    def _():
        sp = split_half_planes(EXAMPLE_5X5)
        return (
            sp.p0 == 3
            and sp.p1 == 2
            and _close(np.sort_complex(np.linalg.eigvals(sp.G1)), [-1j, 1j], 1e-7)
            and np.allclose(np.linalg.eigvals(sp.G0), 2, atol=1e-6)
        )

    @check("stable drift gives an empty right block")
    def _():
        sp = split_half_planes(np.array([[-1.0, 2.0], [0.0, -3.0]]))
        return sp.p0 == 0 and _close(sp.M1 @ sp.M1.T, np.eye(2), 1e-12)

    @check("left-block split of diag(-1, 0) and of a rotation")
    def _():
        a = split_left_block(np.diag([-1.0, 0.0]))
        b = split_left_block(ROT)
        return (
            (a["negative"].size, a["imaginary"].size, a["zero"].size) == (1, 0, 1)
            and (b["negative"].size, b["imaginary"].size, b["zero"].size) == (0, 2, 0)
        )

    @check("sub-block RANK with A = I")
    def _():
        sp = split_half_planes(EXAMPLE_5X5)
        return check_subblock_rank(sp, np.eye(5)) == (True, True)

    @check("RANK failure is rejected at model construction")
    def _():
        return _raises(RankConditionError, OUModel, np.eye(2), np.zeros((2, 1)))

    @check("constant path: C_T = c c' T and S_T = 0")
    def _():
        c = np.array([1.0, -2.0])
        m = OUModel(np.zeros((2, 2)), np.zeros((2, 1)), c, check_rank=False)
        st = simulate_stats(m, SimConfig(dt=0.5, T=4.0))
        return _close(st.C_T, np.outer(c, c) * 4.0, 1e-12) and _close(st.S_T, 0, 0)

    @check("same seed gives identical statistics")
    def _():
        m = car_model([-3.0, -2.0], 1.0)
        a = simulate_stats(m, SimConfig(dt=0.01, T=5.0, seed=11))
        b = simulate_stats(m, SimConfig(dt=0.01, T=5.0, seed=11))
        return all(np.array_equal(getattr(a, k), getattr(b, k)) for k in ("C_T", "S_T", "QV", "Y_end"))

    @check("drift estimate recovers F0 from S = F0 C")
    def _():
        C = np.array([[3.0, 0.5, 0.1], [0.5, 2.0, -0.3], [0.1, -0.3, 1.5]])
        F0 = np.arange(9.0).reshape(3, 3) / 7 - 0.5
        return _close(estimate_drift(_stats(C, F0 @ C)), F0, 1e-12)

    @check("diffusion estimate with A = 0 is 0")
    def _():
        m = OUModel(np.zeros((1, 1)), np.zeros((1, 1)), [1.0], check_rank=False)
        return _close(estimate_diffusion(simulate_stats(m, SimConfig(dt=0.1, T=1.0))), 0, 0)

    @check("E(C_T) closed forms")
    def _():
        T = 3.0
        a = expected_CT(OUModel(np.zeros((2, 2)), np.eye(2)), T)
        b = expected_CT(OUModel([[-1.0]], [[1.0]]), T)
        return _close(a, T * T / 2 * np.eye(2), 1e-9) and _close(
            b, [[T / 2 - (1 - math.exp(-2 * T)) / 4]], 1e-6
        )

    @check("efficiency statistic: zero at truth, squared Frobenius with identity weight")
    def _():
        F = np.array([[1.0, 2.0], [3.0, 4.0]])
        D = np.array([[0.1, -0.2], [0.3, 0.0]])
        return efficiency_statistic(F, F, np.eye(2)) == 0.0 and _close(
            efficiency_statistic(F + D, F, np.eye(2)), np.sum(D**2), 1e-14
        )

    return out


def run(verbose: bool = True, stream=None) -> bool:
    """Run every check; print one line each when ``verbose``; return overall pass."""
    import sys

    stream = stream or sys.stdout
    ok_all = True
    for name, fn in _checks():
        try:
            ok = bool(fn())
        except Exception as exc:  # report, never abort the suite
            ok = False
            name = f"{name} ({type(exc).__name__}: {exc})"
        ok_all &= ok
        if verbose:
            print(f"{'PASS' if ok else 'FAIL'}  {name}", file=stream)
    return ok_all
