import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from pamlab.errors import InvalidArgument, PamOverflowError
from pamlab.evolve import log_u_origin_batch, solve_ode, solve_spectral
from pamlab.lattice import BoxSpec, hamiltonian
from pamlab.potential import sample_field, sample_values
from pamlab.spectral import principal_eigenpair
from pamlab.tails import Weibull

W2 = Weibull(2.0)
SPIKE = np.array([0.0, 5.0, 0.0])


def test_zero_potential_stays_one():
    box = BoxSpec(2, 2)
    H = hamiltonian(box, "free", 1.0, np.zeros(box.n_sites))
    for sol in solve_ode(H, np.ones(box.n_sites), [0.0, 1.0, 7.5]):
        np.testing.assert_allclose(sol.u, 1.0, rtol=1e-10)
    eig = principal_eigenpair(H, want_full=True)
    np.testing.assert_allclose(solve_spectral(eig, np.ones(box.n_sites), 3.0).u, 1.0, rtol=1e-10)


@pytest.mark.parametrize("c", [0.5, 3.0])
def test_constant_potential_grows_exponentially(c):
    box = BoxSpec(1, 3)
    H = hamiltonian(box, "free", 0.7, np.full(box.n_sites, c))
    sol = solve_ode(H, np.ones(box.n_sites), [2.0])[0]
    np.testing.assert_allclose(sol.u, math.exp(2 * c), rtol=1e-10)


def test_spike_matches_matrix_exponential():
    H = hamiltonian(BoxSpec(1, 1), "zero", 1.0, SPIKE)
    ref = expm(H.toarray()) @ np.ones(3)
    sol = solve_ode(H, np.ones(3), [1.0])[0]
    assert np.max(np.abs(sol.u - ref) / ref) <= 1e-9
    eig = principal_eigenpair(H, want_full=True)
    two = solve_spectral(eig, np.ones(3), 2.0)
    assert np.max(np.abs(solve_ode(H, np.ones(3), [2.0])[0].u - two.u) / two.u) <= 1e-8


def test_spectral_at_time_zero():
    box = BoxSpec(2, 2)
    u0 = np.random.default_rng(1).random(box.n_sites)
    eig = principal_eigenpair(hamiltonian(box, "zero", 0.5, sample_field(box, W2, 1)), want_full=True)
    np.testing.assert_allclose(solve_spectral(eig, u0, 0.0).u, u0, atol=1e-10)


def test_spectral_needs_full_basis():
    H = hamiltonian(BoxSpec(1, 1), "zero", 1.0, SPIKE)
    with pytest.raises(InvalidArgument):
        solve_spectral(principal_eigenpair(H), np.ones(3), 1.0)


def test_bad_times():
    H = hamiltonian(BoxSpec(1, 1), "zero", 1.0, SPIKE)
    with pytest.raises(InvalidArgument):
        solve_ode(H, np.ones(3), [1.0, 0.5])
    with pytest.raises(InvalidArgument):
        solve_ode(H, np.ones(3), [-1.0])


def test_overflow_and_log_domain():
    box = BoxSpec(1, 2)
    H = hamiltonian(box, "free", 1.0, np.full(box.n_sites, 100.0))
    with pytest.raises(PamOverflowError):
        solve_ode(H, np.ones(box.n_sites), [10.0])
    sol = solve_ode(H, np.ones(box.n_sites), [10.0], log_domain=True)[0]
    np.testing.assert_allclose(sol.log_values, 1000.0, rtol=1e-12)
    with pytest.raises(PamOverflowError):
        sol.u


@given(seed=st.integers(0, 10**6), bc=st.sampled_from(["free", "zero"]), t=st.floats(0.1, 5))
@settings(max_examples=25, deadline=None)
def test_ode_matches_spectral(seed, bc, t):
    box = BoxSpec(2, 2)
    H = hamiltonian(box, bc, 0.5, sample_field(box, W2, seed))
    ones = np.ones(box.n_sites)
    a = solve_ode(H, ones, [t], log_domain=True)[0]
    b = solve_spectral(principal_eigenpair(H, want_full=True), ones, t, log_domain=True)
    np.testing.assert_allclose(a.log_values, b.log_values, atol=1e-9)
    assert np.all(a.values >= 0)


@given(seed=st.integers(0, 10**6), t=st.floats(0.1, 4))
@settings(max_examples=25, deadline=None)
def test_zero_bc_below_free(seed, t):
    box = BoxSpec(1, 3)
    f = sample_field(box, W2, seed)
    ones = np.ones(box.n_sites)
    free = solve_ode(hamiltonian(box, "free", 1.0, f), ones, [t])[0].u
    zero = solve_ode(hamiltonian(box, "zero", 1.0, f), ones, [t])[0].u
    assert np.all(zero <= free * (1 + 1e-12))


def test_rayleigh_growth_rate():
    box = BoxSpec(1, 2)
    vals = np.zeros(box.n_sites)
    vals[box.origin_index] = 6.0
    H = hamiltonian(box, "zero", 1.0, vals)
    eig = principal_eigenpair(H, want_full=True)
    t = 40.0
    lu = solve_ode(H, np.ones(box.n_sites), [t], log_domain=True)[0].log_values[box.origin_index]
    # log u(t,0) = lambda1 t + log((e1,1) e1(0)) + O(exp(-gap t))
    const = math.log(eig.e1.sum() * eig.e1[box.origin_index])
    assert abs(lu - eig.lambda1 * t - const) <= 1e-8


def test_batch_origin_matches_ode():
    box = BoxSpec(1, 3)
    xs = np.stack([sample_values(box, W2, 4, i) for i in range(5)])
    got = log_u_origin_batch(box, "free", 0.5, xs, [0.5, 1.0])
    for x, row in zip(xs, got):
        H = hamiltonian(box, "free", 0.5, x)
        ref = [s.log_values[box.origin_index] for s in solve_ode(H, np.ones(box.n_sites), [0.5, 1.0])]
        np.testing.assert_allclose(row, ref, atol=1e-10)


def test_solution_csv(tmp_path):
    box = BoxSpec(1, 1)
    sol = solve_ode(hamiltonian(box, "zero", 1.0, SPIKE), np.ones(3), [1.0])[0]
    path = tmp_path / "u.csv"
    sol.to_csv(path, box)
    rows = path.read_text().strip().splitlines()
    assert rows[0] == "site,value,log_value" and len(rows) == 4
