import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pamlab.errors import InvalidArgument
from pamlab.lattice import BoundaryCondition, BoxSpec, build_box, hamiltonian, hamiltonian_stack


@pytest.mark.parametrize("d,R,n", [(1, 1, 3), (2, 1, 9), (2, 2.4, 49), (3, 2, 125)])
def test_site_counts(d, R, n):
    assert build_box(d, R).n_sites == n


def test_one_dimensional_enumeration():
    box = BoxSpec(1, 1)
    assert box.coords[:, 0].tolist() == [-1, 0, 1]
    assert box.origin_index == 1
    assert box.index_of(1) == 2
    assert box.index_of((-1,)) == 0


def test_origin_is_middle():
    for d, R in [(1, 3), (2, 2), (3, 1)]:
        box = BoxSpec(d, R)
        assert box.site_of(box.origin_index) == (0,) * d


@pytest.mark.parametrize("bad", [(0, 1), (1, 0.5), (1.5, 2)])
def test_invalid_box(bad):
    with pytest.raises(InvalidArgument):
        BoxSpec(*bad)


def test_index_outside_box():
    with pytest.raises(InvalidArgument):
        BoxSpec(2, 1).index_of((2, 0))


@given(d=st.integers(1, 3), R=st.integers(1, 3), data=st.data())
@settings(max_examples=40, deadline=None)
def test_index_site_roundtrip(d, R, data):
    box = BoxSpec(d, R)
    i = data.draw(st.integers(0, box.n_sites - 1))
    assert box.index_of(box.site_of(i)) == i


@given(d=st.integers(1, 3), R=st.integers(1, 3))
@settings(max_examples=20, deadline=None)
def test_neighbor_table_geometry(d, R):
    box = BoxSpec(d, R)
    table = box.neighbor_table
    for k in range(2 * d):
        ok = table[:, k] >= 0
        step = box.coords[table[ok, k]] - box.coords[ok]
        expect = np.zeros(d, dtype=int)
        expect[k // 2] = 1 if k % 2 == 0 else -1
        assert np.all(step == expect)
    A = box.adjacency
    assert (A != A.T).nnz == 0
    assert np.array_equal(np.asarray(A.sum(axis=1)).ravel(), box.degree)


def test_zero_bc_hand_matrix():
    H = hamiltonian(BoxSpec(1, 1), "zero", 1.0, np.zeros(3))
    expect = np.array([[-2, 1, 0], [1, -2, 1], [0, 1, -2]], dtype=float)
    assert np.array_equal(H.toarray(), expect)


@given(c=st.floats(0, 50), d=st.integers(1, 3), kappa=st.floats(0.1, 3))
@settings(max_examples=30, deadline=None)
def test_free_constant_potential_row_sums(c, d, kappa):
    box = BoxSpec(d, 2)
    H = hamiltonian(box, "free", kappa, np.full(box.n_sites, c))
    np.testing.assert_allclose(H @ np.ones(box.n_sites), c, atol=1e-12 * (1 + c))


def test_free_zero_potential_kills_constants():
    box = BoxSpec(2, 2)
    H = hamiltonian(box, BoundaryCondition.FREE, 0.7, np.zeros(box.n_sites))
    assert np.max(np.abs(H @ np.ones(box.n_sites))) <= 1e-15


def test_potential_roundtrip_and_symmetry():
    box = BoxSpec(2, 2)
    xi = np.random.default_rng(0).random(box.n_sites)
    for bc in ("free", "zero"):
        H = hamiltonian(box, bc, 0.3, xi)
        np.testing.assert_allclose(H.potential, xi, atol=1e-15)
        M = H.toarray()
        assert np.array_equal(M, M.T)
        assert np.array_equal(hamiltonian_stack(box, bc, 0.3, xi[None])[0], M)


def test_hamiltonian_rejects_bad_input():
    box = BoxSpec(1, 1)
    with pytest.raises(InvalidArgument):
        hamiltonian(box, "free", 0.0, np.zeros(3))
    with pytest.raises(InvalidArgument):
        hamiltonian(box, "free", 1.0, np.zeros(4))
    with pytest.raises(InvalidArgument):
        hamiltonian(box, "periodic", 1.0, np.zeros(3))
