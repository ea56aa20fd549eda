"""Shared fixtures and an independent density-matrix reference simulator.

The reference works directly on the ``2^n x 2^n`` matrix with Kraus
operators and full-register Kronecker products, so it shares no code path
with the Pauli-basis oracle or the tensor-network backends.
"""
from __future__ import annotations

import itertools

import numpy as np
import pytest

from noisyrcs.circuit import CircuitDescriptor, GateFamily, GridGeometry, NoiseKind, NoiseSpec, gate_unitary


def embed(op: np.ndarray, qubits: tuple[int, ...], n: int) -> np.ndarray:
    """Lift ``op`` acting on ``qubits`` (first = most significant) to ``n`` qubits."""
    k = len(qubits)
    rest = [q for q in range(n) if q not in qubits]
    perm = list(qubits) + rest
    full = np.kron(op, np.eye(2 ** (n - k)))
    full = full.reshape((2,) * (2 * n))
    inv = np.argsort(perm)
    full = full.transpose(list(inv) + [n + i for i in inv])
    return full.reshape(2 ** n, 2 ** n)


def apply_kraus(rho: np.ndarray, kraus, q: int, n: int) -> np.ndarray:
    ops = [embed(K, (q,), n) for K in kraus]
    return sum(K @ rho @ K.conj().T for K in ops)


def reference_rho(desc: CircuitDescriptor, trajectory: bool = False, heralds=None) -> np.ndarray:
    n = desc.n
    rho = np.zeros((2 ** n, 2 ** n), dtype=complex)
    rho[0, 0] = 1.0
    if heralds is None:
        heralds = desc.heralds()
    for i, layer in enumerate(desc.layers()):
        for (a, b), k in zip(layer.pairs, layer.gate_ids):
            U = embed(gate_unitary(desc.gate(layer.layer_index, k)), (a, b), n)
            rho = U @ rho @ U.conj().T
        if desc.noise.kind is NoiseKind.NONE:
            continue
        for q in range(n):
            if trajectory and desc.noise.heralded:
                if heralds[i, q]:
                    rho = apply_kraus(rho, desc.noise.fired_kraus(), q, n)
            else:
                rho = apply_kraus(rho, desc.noise.kraus(), q, n)
    return rho


def reference_probs(desc: CircuitDescriptor, trajectory: bool = False, heralds=None) -> np.ndarray:
    return np.real(np.diag(reference_rho(desc, trajectory, heralds)))


def entropy_bits(p: np.ndarray) -> float:
    p = np.asarray(p).ravel()
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


def brute_cmi(probs: np.ndarray, n: int, X, Y, Z) -> float:
    """I(X:Z|Y) by summing the full table over explicit bit masks."""
    def H(A):
        A = list(A)
        if not A:
            return 0.0
        marg = {}
        for idx, p in enumerate(probs):
            key = tuple((idx >> (n - 1 - q)) & 1 for q in A)
            marg[key] = marg.get(key, 0.0) + p
        return entropy_bits(np.array(list(marg.values())))
    X, Y, Z = list(X), list(Y), list(Z)
    return H(X + Y) + H(Y + Z) - H(X + Y + Z) - H(Y)


def all_bitstrings(m: int):
    return list(itertools.product((0, 1), repeat=m))


@pytest.fixture
def haar_1d():
    def make(n=6, depth=4, gamma=0.1, seed=0, realization=0, kind=NoiseKind.AMPLITUDE_DAMPING):
        return CircuitDescriptor(GridGeometry((n,)), depth, GateFamily.HAAR2Q,
                                 NoiseSpec(kind, gamma), seed, realization=realization)
    return make


@pytest.fixture
def clifford_grid():
    def make(dims=(2, 4), depth=6, gamma=0.2, seed=0, realization=0, kind=NoiseKind.HERALDED_RESET):
        return CircuitDescriptor(GridGeometry(dims), depth, GateFamily.CLIFFORD2Q,
                                 NoiseSpec(kind, gamma), seed, realization=realization)
    return make


def chi2_pvalue(bits: np.ndarray, probs: np.ndarray, min_expected: float = 5.0) -> float:
    """Goodness of fit of sampled bit rows against ``probs``; sparse bins are pooled."""
    from scipy import stats

    n_samples, m = bits.shape
    idx = (bits.astype(np.int64) << np.arange(m - 1, -1, -1)).sum(axis=1)
    counts = np.bincount(idx, minlength=2 ** m)
    expected = np.asarray(probs) * n_samples
    if counts[expected == 0].any():
        return 0.0
    keep = expected >= min_expected
    obs, exp = counts[keep], expected[keep]
    rest = expected[~keep].sum()
    if rest > 0:
        obs, exp = np.append(obs, counts[~keep].sum()), np.append(exp, rest)
    return float(stats.chisquare(obs, exp * obs.sum() / exp.sum()).pvalue)


def pytest_terminal_summary(terminalreporter):
    try:
        import test_acceptance
    except ImportError:
        return
    if test_acceptance.LINES:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.LINES:
            terminalreporter.write_line(line)
