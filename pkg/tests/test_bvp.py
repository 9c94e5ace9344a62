import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from magrod.bvp import (
    BvpSolution,
    BvpSystem,
    ConvergenceError,
    Discretization,
    WellPosednessError,
    _gauss_tableau,
    fd_jac,
    make_mesh,
    solve_newton,
)


class Eigen(BvpSystem):
    """u'' = -c u, u(0) = u(1) = 0, int u^2 = 1/2; lowest c is pi^2."""

    n, par_names, nbc, nint = 2, ("c",), 2, 1

    def rhs(self, s, U, p):
        return np.stack([U[:, 1], -p[0] * U[:, 0]], axis=1)

    def bc(self, ua, ub, p):
        return np.array([ua[0], ub[0]])

    def integrands(self, s, U, p):
        return (U[:, 0] ** 2 - 0.5)[:, None]


class Forced(BvpSystem):
    """u'' = -exp(s), u(0) = 0, u(1) = 0; exact u = 1 - e^s + (e - 1) s."""

    n, par_names, nbc = 2, ("a",), 2

    def rhs(self, s, U, p):
        return np.stack([U[:, 1], -p[0] * np.exp(s)], axis=1)

    def bc(self, ua, ub, p):
        return np.array([ua[0], ub[0]])


def _exact_forced(s):
    return 1.0 - np.exp(s) + (math.e - 1.0) * s


def _solve_forced(N, k):
    sys_ = Forced()
    g = BvpSolution.from_function(sys_, make_mesh(N, k), lambda s: np.zeros((len(np.atleast_1d(s)), 2)), {"a": 1.0})
    return solve_newton(sys_, g, tol=1e-13)


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_gauss_tableau_integrates_polynomials(k):
    kk = max(k, 2)
    c, b, A = _gauss_tableau(kk)
    assert np.allclose(c, np.sort(c)) and np.all((c > 0) & (c < 1))
    # weights exact up to degree 2k-1, stage rows exact up to degree k-1
    for q in range(2 * kk):
        assert b @ c**q == pytest.approx(1.0 / (q + 1), abs=1e-13)
    for q in range(kk):
        assert np.allclose(A @ c**q, c ** (q + 1) / (q + 1), atol=1e-13)


def test_eigenvalue_problem_converges_to_pi_squared():
    sys_ = Eigen()
    g = BvpSolution.from_function(sys_, make_mesh(16, 4), lambda s: np.stack([1.1 * np.sin(3 * s), 3.3 * np.cos(3 * s)], -1), {"c": 9.0})
    sol = solve_newton(sys_, g, free=["c"], tol=1e-12)
    assert sol.params["c"] == pytest.approx(math.pi**2, rel=1e-8)
    assert sol.converged and sol.history[-1] < 1e-12


@pytest.mark.parametrize("k", [2, 3])
def test_nodal_superconvergence_order(k):
    errs = []
    for N in (4, 8, 16):
        sol = _solve_forced(N, k)
        errs.append(np.abs(sol.y[:, 0] - _exact_forced(sol.mesh.nodes)).max())
    rates = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    # Gauss collocation with k stages: O(h^{2k}) at the mesh nodes
    assert min(rates) > 2 * k - 0.3


def test_dense_output_between_nodes():
    sol = _solve_forced(16, 4)
    s = np.linspace(0, 1, 57)
    assert np.abs(sol(s)[:, 0] - _exact_forced(s)).max() < 1e-8
    # integration uses the Gauss weights: int u = e^... closed form
    _, Y, _ = sol.quadrature()
    exact = 1.0 - (math.e - 1.0) + (math.e - 1.0) / 2.0
    assert sol.integrate(Y[:, 0]) == pytest.approx(exact, abs=1e-12)


def test_well_posedness_is_checked():
    sys_ = Eigen()
    g = BvpSolution.from_function(sys_, make_mesh(6, 3), lambda s: np.zeros((len(np.atleast_1d(s)), 2)), {"c": 1.0})
    with pytest.raises(WellPosednessError):
        Discretization(sys_, g, free=())


def test_newton_reports_divergence():
    sys_ = Eigen()
    g = BvpSolution.from_function(sys_, make_mesh(6, 3), lambda s: np.stack([np.sin(3 * s), 3 * np.cos(3 * s)], -1), {"c": 9.0})
    with pytest.raises(ConvergenceError) as info:
        solve_newton(sys_, g, free=["c"], tol=1e-30, max_iter=3)
    assert len(info.value.history) >= 2


@pytest.mark.parametrize("bad", [dict(intervals=3), dict(degree=1), dict(degree=8), dict(intervals=4.5)])
def test_mesh_validation(bad):
    with pytest.raises(ValueError):
        make_mesh(**bad)


@given(st.integers(0, 1000))
@settings(max_examples=15, deadline=None)
def test_fd_jacobian_matches_analytic(seed):
    rng = np.random.default_rng(seed)
    m, n = 5, 3
    s = rng.uniform(0, 1, m)
    U = rng.normal(size=(m, n))
    p = rng.normal(size=2)

    def f(s_, U_, p_):
        return np.stack([U_[:, 0] * U_[:, 1] + p_[0], np.sin(U_[:, 2]) * p_[1], U_[:, 0] ** 2 * s_], axis=1)

    fu, fp = fd_jac(f, s, U, p, [0, 1])
    J = np.zeros((m, n, n))
    J[:, 0, 0], J[:, 0, 1] = U[:, 1], U[:, 0]
    J[:, 1, 2] = np.cos(U[:, 2]) * p[1]
    J[:, 2, 0] = 2 * U[:, 0] * s
    Jp = np.zeros((m, n, 2))
    Jp[:, 0, 0] = 1.0
    Jp[:, 1, 1] = np.sin(U[:, 2])
    assert np.allclose(fu, J, atol=1e-7)
    assert np.allclose(fp, Jp, atol=1e-7)


def test_smallest_singular_detects_kernel():
    # at c = pi^2 with c fixed and no normalisation, the BVP u'' = -c u has
    # the kernel sin(pi s); replace the integral by a second copy of the bc
    class Homog(Eigen):
        nint = 0

        def bc(self, ua, ub, p):
            return np.array([ua[0], ub[0]])

    sys_ = Homog()
    g = BvpSolution.from_function(sys_, make_mesh(16, 4), lambda s: np.zeros((len(np.atleast_1d(s)), 2)), {"c": math.pi**2})
    sig, V = Discretization(sys_, g, ()).smallest_singular(k=2)
    assert sig[0] < 1e-6 * sig[1]
    y = V[:, 0].reshape(17, 2)[:, 0]
    shape = np.sin(math.pi * g.mesh.nodes)
    assert abs(np.dot(y, shape)) / (np.linalg.norm(y) * np.linalg.norm(shape)) > 1 - 1e-8
