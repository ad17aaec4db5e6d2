import numpy as np
import pytest
from hypothesis import given, strategies as st

from flexdemand import synthetic as syn
from flexdemand.trajectory import hankel


def test_random_system_is_deterministic():
    a = syn.random_stable_lti(4, 5, 4, 0.9, seed=7)
    b = syn.random_stable_lti(4, 5, 4, 0.9, seed=7)
    for name in "ABCDK":
        assert np.array_equal(getattr(a, name), getattr(b, name))


@given(st.integers(1, 8), st.integers(0, 10_000))
def test_spectral_radius_bound(n, seed):
    s = syn.random_stable_lti(n, 2, 2, 0.5, seed=seed)
    assert s.spectral_radius <= 0.5 + 1e-12


def test_scalar_system():
    s = syn.random_stable_lti(1, 1, 1, 0.3, seed=1)
    assert abs(s.A[0, 0]) <= 0.3


def test_invalid_arguments():
    with pytest.raises(ValueError):
        syn.random_stable_lti(2, 1, 1, 1.0)
    with pytest.raises(ValueError):
        syn.random_stable_lti(0, 1, 1, 0.5)


def test_predictor_form_power_decays():
    # truncation of the initial-state term over a 24-step past window
    worst = 0.0
    for seed in range(40):
        s = syn.random_stable_lti(6, 5, 4, 0.9, seed=seed)
        At, _ = s.predictor_form()
        worst = max(worst, np.linalg.norm(np.linalg.matrix_power(At, 24), 2))
    assert worst < 0.1


def test_zero_input_zero_output():
    s = syn.random_stable_lti(3, 2, 2, seed=0)
    assert np.array_equal(syn.simulate(s, np.zeros((50, 2))), np.zeros((50, 2)))


def test_impulse_response_is_markov_parameters():
    s = syn.random_stable_lti(3, 2, 2, seed=4, feedthrough=True)
    for j in range(2):
        u = np.zeros((12, 2))
        u[0, j] = 1.0
        y = syn.simulate(s, u)
        assert np.allclose(y[0], s.D[:, j], atol=1e-14)
        for k in range(1, 12):
            ref = s.C @ np.linalg.matrix_power(s.A, k - 1) @ s.B[:, j]
            assert np.allclose(y[k], ref, atol=1e-13)
    mk = s.markov_parameters(4)
    assert np.allclose(mk[0], s.D) and np.allclose(mk[2], s.C @ s.A @ s.B)


@given(st.integers(0, 1000))
def test_superposition(seed):
    rng = np.random.default_rng(seed)
    s = syn.random_stable_lti(3, 2, 2, seed=seed)
    u1, u2 = rng.standard_normal((2, 40, 2))
    y = syn.simulate(s, u1) + syn.simulate(s, u2)
    assert np.allclose(y, syn.simulate(s, u1 + u2), atol=1e-12)


def test_noise_is_seeded():
    s = syn.random_stable_lti(2, 1, 1, seed=0)
    u = syn.prbs(100, 1, seed=0)
    a = syn.simulate(s, u, 0.1, seed=3)
    assert np.array_equal(a, syn.simulate(s, u, 0.1, seed=3))
    assert not np.array_equal(a, syn.simulate(s, u, 0.1, seed=4))


def test_output_noise_mode_leaves_state_clean():
    s = syn.random_stable_lti(2, 1, 1, seed=0)
    u = syn.prbs(200, 1, seed=0)
    y, x, e = syn.simulate(s, u, 0.3, seed=1, noise="output", return_states=True)
    clean = syn.simulate(s, u)
    assert np.allclose(y - e, clean, atol=1e-12)


def test_prbs_values_and_determinism():
    u = syn.prbs(500, 3, seed=2)
    assert u.shape == (500, 3)
    assert set(np.unique(u)) <= {-1.0, 1.0}
    assert np.array_equal(u, syn.prbs(500, 3, seed=2))


@pytest.mark.parametrize("m", [1, 5])
def test_prbs_hankel_full_row_rank(m):
    u = syn.prbs(4000, m, seed=0)
    H = hankel(u, 0, 24, 4000 - 24 + 1)
    assert np.linalg.matrix_rank(H) == 24 * m


def test_data_equation_noise_free():
    s = syn.random_stable_lti(5, 3, 2, seed=11, feedthrough=True)
    u = syn.prbs(900, 3, seed=1)
    y, x, e = syn.simulate(s, u, return_states=True)
    assert syn.data_equation_residual(s, u, y, x, e, 24, 30) < 1e-9


def test_data_equation_with_innovation_noise():
    # the exact data equation holds with the noise term included
    s = syn.random_stable_lti(4, 2, 2, seed=5)
    u = syn.prbs(700, 2, seed=2)
    y, x, e = syn.simulate(s, u, 0.5, seed=9, return_states=True)
    assert syn.data_equation_residual(s, u, y, x, e, 10, 20) < 1e-9


def test_rc_house_time_constants():
    s = syn.rc_house()
    assert (s.m, s.p, s.n) == (5, 4, 4)
    lam = np.linalg.eigvals(s.A)
    assert np.all(np.abs(lam.imag) < 1e-12)
    tau_h = -(300.0 / 3600.0) / np.log(np.abs(lam.real))
    assert tau_h.min() >= 2.0 - 1e-9 and tau_h.max() <= 20.0 + 1e-9


def test_rc_house_steady_state_follows_outdoor():
    s = syn.rc_house()
    u = np.zeros((4000, 5))
    u[:, 4] = -7.0
    y = syn.simulate(s, u)
    assert np.allclose(y[-1], -7.0, atol=1e-3)


def test_energy_records_generator():
    recs, sigma = syn.energy_records(50, 0.1, [0.2, 0.3], [0.4, 0.5], seed=1)
    assert len(recs) == 50 and sigma.shape == (50,)
    assert all(r.on_count.sum() >= 1 for r in recs)
    exact, _ = syn.energy_records(5, 0.1, [0.2, 0.3], [0.4, 0.5], seed=1)
    r = exact[0]
    assert np.isclose(r.energy, 0.1 * r.t_out + r.on_count @ [0.2, 0.3] + r.feature_sum @ [0.4, 0.5])
