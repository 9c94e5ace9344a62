import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from lin_reference import reference_rhs

from magrod.bvp import fd_jac, make_mesh
from magrod.linearized import (
    PERTURBATION_SWAP_SIGNS,
    CompositeSystem,
    DegenerateDampingError,
    eigen_norm_density,
    lin_matrices,
    linearized_bc,
    linearized_rhs,
    swap_ends_perturbation,
)
from magrod.model import RodParams
from magrod.stationary import _FastParams, trivial_solution


def _random_setup(seed):
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    base = np.empty(18)
    base[:9] = rng.normal(size=9)
    base[9:18] = Q.ravel()
    p = RodParams(
        P=rng.uniform(1e-3, 0.1),
        R=rng.uniform(0.2, 1.0),
        B=rng.normal(),
        Gamma=rng.uniform(0.5, 1.0),
        gamma=rng.uniform(0, 0.1),
        omega=rng.normal(),
        f=rng.uniform(1, 10),
    )
    lin = rng.normal(size=12) + 1j * rng.normal(size=12)
    lam = complex(rng.normal(), rng.normal())
    return base, p, lin, lam


@given(st.integers(0, 100_000))
@settings(max_examples=60, deadline=None)
def test_matrix_form_matches_vector_form(seed):
    base, p, lin, lam = _random_setup(seed)
    got = linearized_rhs(None, lin, base, lam, p)
    ref = reference_rhs(lin, base, lam, p)
    assert np.allclose(got, ref, rtol=1e-10, atol=1e-10 * (1 + np.abs(ref).max()))


@given(st.integers(0, 100_000))
@settings(max_examples=20, deadline=None)
def test_linear_in_the_perturbation(seed):
    base, p, lin, lam = _random_setup(seed)
    other = np.roll(lin, 3) * 0.7j
    mats = lin_matrices(base, _FastParams([p.B, p.omega, p.T, p.P, p.R, p.Gamma, p.f, p.gamma]))
    a = linearized_rhs(None, lin + 2.0 * other, base, lam, None, mats)
    b = linearized_rhs(None, lin, base, lam, None, mats) + 2.0 * linearized_rhs(None, other, base, lam, None, mats)
    assert np.allclose(a, b)


def test_damping_pole_is_rejected():
    base, p, lin, _ = _random_setup(1)
    p = p.with_(gamma=0.5)
    with pytest.raises(DegenerateDampingError):
        linearized_rhs(None, lin, base, -1.0 / 0.5 + 0j, p)


def test_swap_signs_and_translation():
    assert PERTURBATION_SWAP_SIGNS.shape == (12,)
    v = np.random.default_rng(3).normal(size=(9, 12))
    img = swap_ends_perturbation(v)
    # the image keeps xt_z(1) = 0 when the original has it
    v[-1, 2] = 0.0
    img = swap_ends_perturbation(v)
    assert img[-1, 2] == pytest.approx(0.0, abs=1e-15)
    v2 = v.copy()
    v2[0, 2] = 0.0
    assert np.allclose(swap_ends_perturbation(swap_ends_perturbation(v2)), v2)


def test_bc_selects_the_welded_conditions():
    lin0 = np.arange(12.0)
    lin1 = np.arange(12.0) + 100
    r = linearized_bc(lin0, lin1)
    assert list(r) == [0, 1, 8, 3, 4, 5, 100, 101, 102, 103, 104, 105]


def test_norm_density():
    lin = np.zeros(12)
    lin[:3] = [1, 2, 2]
    lin[3:6] = [0, 0, 1]
    lin[6:] = 50.0
    assert eigen_norm_density(lin) == 10.0


@pytest.mark.parametrize("mode", ["imag_only", "full"])
def test_composite_exact_jacobian_agrees_with_differences(mode):
    sys_ = CompositeSystem(mode)
    rng = np.random.default_rng(5)
    m = 4
    U = rng.normal(size=(m, sys_.n)) * 0.3
    for k in range(m):
        Q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        U[k, 9:18] = Q.ravel()
    params = dict(B=0.4, omega=0.7, T=0.0, P=0.01, R=0.6, Gamma=0.8, f=5.0, gamma=0.02, lam_r=0.1, lam_i=0.9)
    p = np.array([params[n] for n in sys_.par_names])
    s = np.linspace(0.1, 0.9, m)
    fu, fp = sys_.jac(s, U, p, [sys_.pindex("lam_i"), sys_.pindex("B")])
    gu, gp = fd_jac(sys_.rhs, s, U, p, [sys_.pindex("lam_i"), sys_.pindex("B")])
    assert np.allclose(fu, gu, atol=1e-6)
    assert np.allclose(fp, gp, atol=1e-6)


def test_symmetric_end_condition_variant():
    plain = CompositeSystem("imag_only")
    sym = CompositeSystem("imag_only", symmetric_ends=True)
    ua = np.zeros(plain.n)
    ub = np.zeros(plain.n)
    ub[18 + 8] = 0.25
    p = np.zeros(len(plain.par_names))
    p[plain.par_names.index("R")] = 0.5
    p[plain.par_names.index("P")] = 0.01
    p[plain.par_names.index("Gamma")] = 0.8
    p[plain.par_names.index("f")] = 1.0
    assert plain.bc(ua, ub, p)[18 + 2] == 0.0
    assert sym.bc(ua, ub, p)[18 + 2] == 0.25


def test_trivial_base_has_zero_perturbation_solution():
    from magrod.bvp import Discretization
    from magrod.eigen import _stack

    p = RodParams(P=0.01, R=0.6, Gamma=0.8, f=2.0)
    base = trivial_solution(p, make_mesh(8, 4))
    z = np.zeros((9, 12))
    zk = np.zeros((8, 4, 12))
    comp = _stack(base, [(z, zk)], 0.0, 0.0)
    d = Discretization(CompositeSystem("imag_only", normalize=False), comp, ())
    assert d.residual_norm < 1e-13
