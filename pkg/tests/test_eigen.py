import numpy as np
import pytest

from magrod.bvp import make_mesh
from magrod.continuation import StepControl
from magrod.eigen import eigen_init, scan_singular, track_eigenvalues
from magrod.model import set_preset
from magrod.oracles import fd_eigen_oracle, unperturbed_spectrum
from magrod.stationary import trivial_solution


@pytest.fixture(scope="module")
def straight_pairs():
    return eigen_init(trivial_solution(set_preset()), 2)


def test_scan_finds_oracle_frequencies():
    p = set_preset()
    ref = unperturbed_spectrum(p, 2)
    roots = scan_singular(trivial_solution(p), "imag", mu_max=1.2 * ref[-1].value)
    mus = [mu for mu, _ in roots]
    for m in ref:
        assert min(abs(mu - m.value) for mu in mus) < 1e-6 * m.value


def test_init_gives_normalised_imaginary_pairs(straight_pairs):
    ref = unperturbed_spectrum(set_preset(), 2)
    for pair, m in zip(straight_pairs, ref):
        assert pair.lambda_r == pytest.approx(0.0, abs=1e-9)
        assert pair.lambda_i == pytest.approx(m.value, rel=1e-6)
        assert pair.diagnostics["step3_shift"] < 1e-8
        assert pair.solution.y.shape[1] == 18 + 24


def test_loaded_rod_frequency_drops_like_difference_oracle(straight_pairs):
    p = set_preset().with_(B=0.3)
    paths = track_eigenvalues(straight_pairs[:1], "B", (0.0, 0.3), step=StepControl(0.05, 1e-6, 0.1))
    (path,) = paths
    assert path.branch.reason == "reached bound"
    lam_end = path.samples[-1][2]
    oracle = fd_eigen_oracle(p, grid=512, n=1)[0]
    assert lam_end == pytest.approx(oracle.lambda_i, rel=1e-4)
    assert lam_end < straight_pairs[0].lambda_i
    assert np.allclose(path.column(1), 0.0, atol=1e-9)


def test_whirl_or_damping_rejected_for_initialisation():
    with pytest.raises(ValueError):
        eigen_init(trivial_solution(set_preset().with_(omega=0.1)), 1)
    with pytest.raises(ValueError):
        scan_singular(trivial_solution(set_preset().with_(gamma=0.01)))


def test_scan_survives_exact_singularity_on_coarse_mesh():
    # on this mesh the root search lands on an exactly singular factorisation
    p = set_preset()
    exact = unperturbed_spectrum(p, 1)[0].value
    mus = [mu for mu, _ in scan_singular(trivial_solution(p, make_mesh(8, 2)), "imag", mu_max=1.2 * exact)]
    assert min(abs(mu - exact) for mu in mus) < 5e-4
