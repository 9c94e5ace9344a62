import numpy as np
import pytest

from magrod.bvp import Discretization
from magrod.codim2 import KINDS, SeedError, hopf_seed, pitchfork_seed, trace_codim2
from magrod.continuation import StepControl, continue_branch, switch_branch
from magrod.linearized import CompositeSystem, copy_norms, swap_ends_perturbation
from magrod.model import set_preset
from magrod.stationary import StationarySystem, swap_ends, trivial_solution


@pytest.fixture(scope="module")
def secondary_bp():
    sys_ = StationarySystem()
    trunk = continue_branch(sys_, trivial_solution(set_preset()), "B", (0, 1), step=StepControl(0.05, 1e-6, 0.2))
    start = switch_branch(trunk, trunk.events_of("BP")[0], 1.0, which_null=0)
    b1 = continue_branch(sys_, start, "B", (0, 2.2), step=StepControl(0.02, 1e-6, 0.1))
    (ev,) = b1.events_of("BP")
    return ev


def test_secondary_bp_location(secondary_bp):
    assert secondary_bp.value == pytest.approx(1.942, rel=0.02)
    assert secondary_bp.data["nullity"] == 1


def test_pitchfork_seed_structure(secondary_bp):
    seed = pitchfork_seed(secondary_bp.solution)
    assert seed.params["lam_r"] == 0.0 and seed.params["lam_i"] == 0.0
    assert copy_norms(seed)[0] == pytest.approx(1.0, abs=1e-9)
    sys_ = CompositeSystem("imag_only", symmetric_ends=True)
    assert Discretization(sys_, seed, ("B",)).residual_norm < 1e-9
    # equilibrium symmetric under the end swap, null vector antisymmetric
    base = seed.copy()
    base.y, base.K = seed.y[:, :18], seed.K[:, :, :18]
    assert np.abs(swap_ends(base).y - base.y).max() < 1e-8
    v = seed.y[:, 18:]
    assert np.abs(swap_ends_perturbation(v) + v).max() < 1e-8


def test_pitchfork_curve_is_damping_free(secondary_bp):
    a = trace_codim2("secondary_pitchfork", secondary_bp.solution, box=((0, 4), (0, 0.4)), gamma=0.01)
    b = trace_codim2("secondary_pitchfork", secondary_bp.solution, box=((0, 4), (0, 0.4)), gamma=0.2)
    assert not a.closed and a.exits
    assert np.array_equal(a.column(0), b.column(0)) and np.array_equal(a.column(1), b.column(1))
    # B grows with the whirl rate along the curve
    w, B = a.column(1), a.column(0)
    up = w > 0
    assert np.all(np.diff(B[up][np.argsort(w[up])]) > 0)


def test_seed_validation(secondary_bp):
    with pytest.raises(ValueError):
        trace_codim2("hopf_lambda3", secondary_bp.solution)
    with pytest.raises(SeedError):
        hopf_seed(secondary_bp.solution)
    with pytest.raises(SeedError):
        trace_codim2("secondary_pitchfork", secondary_bp.solution, box=((2.5, 4), (0, 1)))
    assert set(KINDS) == {"hopf_lambda1", "hopf_lambda2", "secondary_pitchfork"}
