import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noisyrcs.circuit import haar_unitary
from noisyrcs.clifford import CNOT, CZ, GROUP_ORDER, H_A, IDENTITY, SWAP, Clifford2Q, pauli_matrix
from noisyrcs.rng import stream

ids = st.integers(min_value=0, max_value=GROUP_ORDER - 1)


@given(ids)
@settings(max_examples=200, deadline=None)
def test_id_round_trip(i):
    assert Clifford2Q.from_id(i).element_id == i


@given(ids)
@settings(max_examples=60, deadline=None)
def test_unitary_realises_table(i):
    g = Clifford2Q.from_id(i)
    u = g.unitary
    assert np.allclose(u.conj().T @ u, np.eye(4), atol=1e-12)
    for v, (w, k) in enumerate(g.table):
        assert np.allclose(u @ pauli_matrix(v) @ u.conj().T, pauli_matrix(int(w), int(k)), atol=1e-12)
    assert Clifford2Q.from_unitary(u) == g


def test_all_ids_distinct_elements():
    seen = {Clifford2Q.from_id(i).images for i in range(GROUP_ORDER)}
    assert len(seen) == GROUP_ORDER


def test_named_gates():
    cnot = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]])
    assert Clifford2Q.from_unitary(cnot) == CNOT
    assert Clifford2Q.from_unitary(np.diag([1, 1, 1, -1])) == CZ
    assert Clifford2Q.from_unitary(np.eye(4)) == IDENTITY
    assert Clifford2Q.from_unitary(np.eye(4)[[0, 2, 1, 3]]) == SWAP
    h = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    assert Clifford2Q.from_unitary(np.kron(h, np.eye(2))) == H_A


def test_haar_gate_is_not_clifford():
    with pytest.raises(ValueError):
        Clifford2Q.from_unitary(haar_unitary(stream(0)))


def test_invalid_images_rejected():
    with pytest.raises(ValueError):
        Clifford2Q.from_signed(("XI", 1), ("XI", 1), ("IX", 1), ("IZ", 1))
    with pytest.raises(ValueError):
        Clifford2Q.from_id(GROUP_ORDER)
