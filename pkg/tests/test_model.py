import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from magrod.model import (
    DimensionalParams,
    ParameterError,
    RodParams,
    directors,
    nondimensionalize,
    orthonormality_defect,
    set_dimensional,
    set_preset,
    trivial_state,
)
from magrod.stationary import rotate_about_axis


def test_tether_table_nondimensionalises_to_preset():
    # I_k = EI_k / E, P = I1 / (A L^2), R = EI2 / EI1
    E, A, L = 1.32e11, 2.879e-11, 100.0
    p = nondimensionalize(set_dimensional(), 500.5639)
    assert p.P == pytest.approx((38.0 / E) / (A * L**2), rel=1e-12)
    assert p.P == pytest.approx(1e-3, rel=2e-3)
    assert p.R == pytest.approx(21.0 / 38.0, rel=1e-12)
    assert p.R == pytest.approx(0.5526, abs=1e-4)
    assert p.Gamma == pytest.approx(0.76923, rel=1e-12)


def test_magnetic_load_group():
    d = DimensionalParams(L=2.0, A=1.0, E=10.0, EI1=4.0, EI2=2.0, G=3.0, B0=0.5, I_current=3.0)
    p = nondimensionalize(d, f=2.0)
    assert p.B == pytest.approx(0.5 * 3.0 * 8.0 / (2.0 * 4.0))


@pytest.mark.parametrize(
    "changes",
    [{"R": 1.5}, {"R": 0.0}, {"P": -1.0}, {"Gamma": 0.0}, {"f": 0.0}, {"gamma": -0.1}, {"B": math.nan}],
)
def test_rodparams_rejects_out_of_domain(changes):
    base = dict(P=0.001, R=0.5)
    base.update(changes)
    with pytest.raises(ParameterError):
        RodParams(**base)


def test_dimensional_rejects_soft_stiff_axis():
    with pytest.raises(ParameterError):
        DimensionalParams(L=1, A=1, E=1, EI1=1.0, EI2=2.0, G=1)


def test_rescale_f_round_trip():
    p = set_preset().with_(B=0.4, omega=1.3, gamma=0.02, T=0.1)
    q = p.rescale_f(1.0)
    # loads scale with f, rates with 1/sqrt(f)
    assert q.B == pytest.approx(0.4 * 500.5639)
    assert q.omega == pytest.approx(1.3 * math.sqrt(500.5639))
    back = q.rescale_f(p.f)
    for name in ("B", "omega", "gamma", "T"):
        assert getattr(back, name) == pytest.approx(getattr(p, name), rel=1e-14)


def test_trivial_state_is_straight_and_aligned():
    s = np.linspace(0, 1, 7)
    st_ = trivial_state(s, T=0.3)
    assert np.allclose(st_[:, 2], s)
    assert np.allclose(st_[:, :2], 0)
    assert np.allclose(directors(st_), np.eye(3))
    assert orthonormality_defect(st_) == 0.0


angles = st.floats(-math.pi, math.pi, allow_nan=False)


@given(angles, angles, angles)
@settings(max_examples=30, deadline=None)
def test_orthonormality_defect_vanishes_on_rotations(a, b, c):
    ca, sa, cb, sb, cc, sc = math.cos(a), math.sin(a), math.cos(b), math.sin(b), math.cos(c), math.sin(c)
    Rz = np.array([[ca, -sa, 0], [sa, ca, 0], [0, 0, 1]])
    Ry = np.array([[cb, 0, sb], [0, 1, 0], [-sb, 0, cb]])
    Rx = np.array([[1, 0, 0], [0, cc, -sc], [0, sc, cc]])
    Q = Rz @ Ry @ Rx
    st_ = np.zeros(18)
    st_[9:18] = Q.T.ravel()
    assert orthonormality_defect(st_) < 1e-14
    st_[9] += 1e-3
    assert orthonormality_defect(st_) > 1e-4


@given(angles)
@settings(max_examples=20, deadline=None)
def test_rotation_preserves_orthonormality(phi):
    st_ = trivial_state(np.linspace(0, 1, 5))
    rot = rotate_about_axis(st_, phi)
    assert orthonormality_defect(rot) < 1e-14
    assert np.allclose(rot[:, 2], st_[:, 2])


def test_rescale_f_matches_nondimensionalisation():
    d = DimensionalParams(L=3.0, A=0.2, E=5.0, EI1=2.0, EI2=1.0, G=2.0, rho=1.5, B0=0.7, I_current=2.0, gamma_v=0.1)
    a = nondimensionalize(d, 1.0).with_(omega=0.9)
    b = nondimensionalize(d, 7.0)
    c = a.rescale_f(7.0)
    assert c.B == pytest.approx(b.B, rel=1e-14)
    assert c.gamma == pytest.approx(b.gamma, rel=1e-14)
    # same physical whirl rate: omega * omega_c is invariant
    assert c.omega * math.sqrt(7.0) == pytest.approx(0.9, rel=1e-14)
