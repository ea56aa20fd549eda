import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import brute_cmi, entropy_bits, reference_probs
from noisyrcs.circuit import (CircuitDescriptor, GateFamily, GridGeometry, NoiseKind, NoiseSpec,
                              channel_ptm)
from noisyrcs.clifford import CNOT, H_A
from noisyrcs.errors import CapacityError, ConditioningError
from noisyrcs.oracle import (DenseState, DistributionTable, clifford_ptm, evolve, exact_cmi,
                             markov_residual, pinsker_slack, tv_distance, unitary_ptm)

BELL = DistributionTable([0.5, 0, 0, 0.5], (0, 1))
GHZ3 = DistributionTable([0.5, 0, 0, 0, 0, 0, 0, 0.5], (0, 1, 2))


def random_table(rng, m):
    p = rng.random(2 ** m) ** 3
    return DistributionTable(p / p.sum(), tuple(range(m)))


def test_depth_zero_is_all_zeros():
    d = CircuitDescriptor(GridGeometry((4,)), 0, GateFamily.HAAR2Q, NoiseSpec(NoiseKind.AMPLITUDE_DAMPING, 0.3), 0)
    p = evolve(d).marginal().probs
    assert p[0] == 1.0 and p[1:].sum() == 0.0


def test_bell_preparation():
    s = DenseState.zero(2)
    s.apply_2q(clifford_ptm(CNOT) @ clifford_ptm(H_A), 0, 1)
    bell = np.zeros((4, 4))
    bell[np.ix_([0, 3], [0, 3])] = 0.5
    assert np.allclose(s.rho(), bell, atol=1e-15)
    assert np.array_equal(s.marginal().probs, [0.5, 0, 0, 0.5])


def test_clifford_ptm_matches_unitary_ptm():
    for g in (CNOT, H_A):
        assert np.allclose(clifford_ptm(g), unitary_ptm(g.unitary), atol=1e-12)


def test_frozen_haar_values(haar_1d):
    # values from the brute-force density-matrix reference in conftest
    P = evolve(haar_1d(n=6, depth=4, gamma=0.1, seed=0)).marginal()
    assert P.probs[0] == pytest.approx(0.030980417049173155, abs=1e-12)
    assert P.entropy() == pytest.approx(5.7103645551888516, abs=1e-12)
    assert exact_cmi(P, (2, 3), (1, 4), (0, 5)) == pytest.approx(0.04260841504467927, abs=1e-12)


@pytest.mark.parametrize("kind", [NoiseKind.AMPLITUDE_DAMPING, NoiseKind.DEPOLARIZING,
                                  NoiseKind.HERALDED_RESET, NoiseKind.HERALDED_DEPOLARIZING])
@pytest.mark.parametrize("mode", ["average", "trajectory"])
def test_matches_reference(kind, mode):
    for r in range(2):
        d = CircuitDescriptor(GridGeometry((2, 4)), 5, GateFamily.HAAR2Q, NoiseSpec(kind, 0.3), 4, realization=r)
        want = reference_probs(d, trajectory=mode == "trajectory")
        got = evolve(d, mode=mode).marginal().probs
        assert np.abs(got - want).max() < 1e-13


def test_clifford_output_is_exactly_dyadic(clifford_grid):
    p = evolve(clifford_grid(), mode="trajectory").marginal().probs
    scaled = p * 2 ** 8
    assert np.array_equal(scaled, np.round(scaled))


def test_from_rho_round_trip():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
    rho = a @ a.conj().T
    rho /= np.trace(rho)
    s = DenseState.from_rho(rho)
    assert np.allclose(s.rho(), rho, atol=1e-14)
    assert s.trace() == pytest.approx(1.0)


def test_capacity():
    with pytest.raises(CapacityError):
        DenseState.zero(15)


def test_entropies_and_cmi_known_values():
    assert exact_cmi(GHZ3, (0,), (1,), (2,)) == pytest.approx(0.0, abs=1e-15)
    assert exact_cmi(BELL, (0,), (), (1,)) == pytest.approx(1.0)
    assert BELL.entropy((0,)) == pytest.approx(1.0)
    prod = DistributionTable(np.kron([0.3, 0.7], np.kron([0.6, 0.4], [0.9, 0.1])), (0, 1, 2))
    assert exact_cmi(prod, (0,), (1,), (2,)) == pytest.approx(0.0, abs=1e-14)
    assert markov_residual(prod, (0,), (1,), (2,)) == pytest.approx(0.0, abs=1e-15)


def test_conditionals():
    assert np.array_equal(BELL.conditional((1,), {0: 1}).probs, [0.0, 1.0])
    with pytest.raises(ConditioningError):
        DistributionTable([1.0, 0, 0, 0], (0, 1)).conditional((1,), {0: 1})


def test_tv_distance_is_l1():
    assert tv_distance(BELL, BELL) == 0.0
    assert tv_distance(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 2.0


@given(st.integers(0, 10 ** 6), st.integers(3, 6))
@settings(max_examples=60, deadline=None)
def test_cmi_properties(seed, m):
    rng = np.random.default_rng(seed)
    P = random_table(rng, m)
    labels = rng.integers(0, 3, size=m)
    X, Y, Z = (tuple(int(q) for q in range(m) if labels[q] == c) for c in range(3))
    cmi = exact_cmi(P, X, Y, Z)
    assert cmi >= -1e-12
    assert cmi == pytest.approx(brute_cmi(P.probs, m, X, Y, Z), abs=1e-10)
    assert cmi == pytest.approx(exact_cmi(P, Z, Y, X), abs=1e-12)
    assert pinsker_slack(P, X, Y, Z) >= -1e-12


def test_average_of_trajectories_is_average_channel():
    # the averaged heralded channel equals the herald-weighted mixture
    noise = NoiseSpec(NoiseKind.HERALDED_RESET, 0.25)
    fired = np.array([[1, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [1, 0, 0, 0]])
    assert np.allclose(channel_ptm(noise), 0.75 * np.eye(4) + 0.25 * fired)


def test_entropy_helper_matches_reference():
    rng = np.random.default_rng(3)
    P = random_table(rng, 4)
    assert P.entropy() == pytest.approx(entropy_bits(P.probs))
    assert P.entropy() <= 4 + 1e-12 and P.entropy() >= 0
    assert math.isclose(P.marginal((3, 1)).probs.sum(), 1.0)
