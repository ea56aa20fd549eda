"""Dense reference simulation and exact information quantities.

The state is stored by its Pauli coefficients ``c_a = Tr(sigma_a rho)``, a
real tensor of shape ``(4,) * n`` with axes ordered by qubit index. This
holds exactly the information of the density matrix, stays real, and turns
every channel into a real transfer matrix on one or two axes. Clifford gates
and heralded branches have integer transfer matrices, so Clifford circuits
with a fixed herald record are simulated without rounding error.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .circuit import (PAULIS, CircuitDescriptor, GateLayer, NoiseKind, NoiseSpec,
                      channel_ptm, gate_unitary, ptm_from_kraus)
from .clifford import Clifford2Q
from .errors import CapacityError, ConditioningError, IntegrityError

DEFAULT_CAP = 14
_ZERO_1Q = np.array([1.0, 0.0, 0.0, 1.0])
_PAULI_2Q = np.stack([np.kron(a, b) for a in PAULIS for b in PAULIS])
# single-qubit index (x, z) -> position in (I, X, Y, Z)
_XZ_TO_PAULI = {(0, 0): 0, (1, 0): 1, (1, 1): 2, (0, 1): 3}
_RESET_FIRED = np.array([[1.0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [1.0, 0, 0, 0]])
_DEPOL_FIRED = np.diag([1.0, 0, 0, 0])


# ---------------------------------------------------------------------------
# distributions


@dataclass(frozen=True)
class DistributionTable:
    """Probabilities over bitstrings of ``qubits``; the first qubit is the most significant bit."""

    probs: np.ndarray
    qubits: tuple[int, ...]

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float).ravel()
        qubits = tuple(int(q) for q in self.qubits)
        if probs.size != 2 ** len(qubits):
            raise ValueError(f"{probs.size} probabilities for {len(qubits)} qubits")
        if len(set(qubits)) != len(qubits):
            raise ValueError("repeated qubit labels")
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "qubits", qubits)

    @property
    def m(self) -> int:
        return len(self.qubits)

    def tensor(self) -> np.ndarray:
        return self.probs.reshape((2,) * self.m)

    def marginal(self, subset: Iterable[int]) -> "DistributionTable":
        subset = tuple(subset)
        pos = [self.qubits.index(q) for q in subset]
        drop = tuple(i for i in range(self.m) if i not in pos)
        t = self.tensor().sum(axis=drop) if drop else self.tensor()
        kept = sorted(pos)
        t = np.transpose(t, [kept.index(p) for p in pos]) if subset else np.asarray(t)
        return DistributionTable(np.ravel(t), subset)

    def entropy(self, subset: Iterable[int] | None = None) -> float:
        table = self if subset is None else self.marginal(subset)
        return shannon_entropy(table.probs)

    def conditional(self, target: Sequence[int], condition: dict[int, int]) -> "DistributionTable":
        """Distribution of ``target`` given ``condition`` (qubit -> bit)."""
        cond = tuple(condition)
        joint = self.marginal(tuple(target) + cond).tensor()
        idx = (Ellipsis,) + tuple(int(condition[q]) for q in cond) if cond else (Ellipsis,)
        sl = np.asarray(joint[idx]).ravel()
        total = sl.sum()
        if total <= 0:
            raise ConditioningError("conditioning event has probability zero")
        return DistributionTable(sl / total, tuple(target))

    def bits(self, index: int) -> dict[int, int]:
        return {q: (index >> (self.m - 1 - i)) & 1 for i, q in enumerate(self.qubits)}


def shannon_entropy(p: np.ndarray) -> float:
    """Shannon entropy in bits with ``0 log 0 = 0``."""
    p = np.asarray(p, dtype=float).ravel()
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


def exact_cmi(P: DistributionTable, X, Y, Z) -> float:
    """``H(XY) + H(YZ) - H(XYZ) - H(Y)`` in bits."""
    X, Y, Z = tuple(X), tuple(Y), tuple(Z)
    _check_disjoint(X, Y, Z)
    return P.entropy(X + Y) + P.entropy(Y + Z) - P.entropy(X + Y + Z) - P.entropy(Y)


def tv_distance(P: DistributionTable | np.ndarray, Q: DistributionTable | np.ndarray) -> float:
    """l1 norm of ``P - Q`` (twice the total-variation distance)."""
    if isinstance(P, DistributionTable) and isinstance(Q, DistributionTable) and P.qubits != Q.qubits:
        Q = Q.marginal(P.qubits)
    p = P.probs if isinstance(P, DistributionTable) else np.asarray(P)
    q = Q.probs if isinstance(Q, DistributionTable) else np.asarray(Q)
    if p.shape != q.shape:
        raise ValueError("distributions have different supports")
    return float(np.abs(p - q).sum())


def markov_residual(P: DistributionTable, X, Y, Z) -> float:
    """``|| P_XYZ - P_X P_{Y|X} P_{Z|Y} ||_1``; empty conditionals are taken uniform."""
    X, Y, Z = tuple(X), tuple(Y), tuple(Z)
    _check_disjoint(X, Y, Z)
    nx, ny, nz = len(X), len(Y), len(Z)
    pxyz = P.marginal(X + Y + Z).probs.reshape(2 ** nx, 2 ** ny, 2 ** nz)
    pxy = pxyz.sum(axis=2)
    pyz = pxyz.sum(axis=0)
    py = pyz.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        z_given_y = np.where(py[:, None] > 0, pyz / py[:, None], 1.0 / 2 ** nz)
    model = pxy[:, :, None] * z_given_y[None, :, :]
    return float(np.abs(pxyz - model).sum())


def pinsker_slack(P: DistributionTable, X, Y, Z) -> float:
    """``I(X:Z|Y) - residual**2 / (2 ln 2)``; nonnegative by Pinsker's inequality."""
    r = markov_residual(P, X, Y, Z)
    return exact_cmi(P, X, Y, Z) - r * r / (2 * math.log(2))


def _check_disjoint(*regions):
    seen: set = set()
    for r in regions:
        if seen & set(r):
            raise ValueError("regions must be disjoint")
        seen |= set(r)


# ---------------------------------------------------------------------------
# transfer matrices


def unitary_ptm(u: np.ndarray) -> np.ndarray:
    """16x16 transfer matrix of ``rho -> U rho U^dag`` in the (I,X,Y,Z)^2 basis."""
    conj = u @ _PAULI_2Q @ u.conj().T
    return np.einsum("aij,bji->ab", _PAULI_2Q, conj).real / 4


def clifford_ptm(gate: Clifford2Q) -> np.ndarray:
    """Exact signed-permutation transfer matrix of a two-qubit Clifford."""
    out = np.zeros((16, 16))
    for v in range(16):
        bits, k = (int(x) for x in gate.table[v])
        ny_in = ((v >> 3) & (v >> 2) & 1) + ((v >> 1) & v & 1)
        ny_out = ((bits >> 3) & (bits >> 2) & 1) + ((bits >> 1) & bits & 1)
        sign = 1.0 if ((ny_in + k - ny_out) % 4) == 0 else -1.0
        col = _XZ_TO_PAULI[((v >> 3) & 1, (v >> 2) & 1)] * 4 + _XZ_TO_PAULI[((v >> 1) & 1, v & 1)]
        row = _XZ_TO_PAULI[((bits >> 3) & 1, (bits >> 2) & 1)] * 4 + _XZ_TO_PAULI[((bits >> 1) & 1, bits & 1)]
        out[row, col] = sign
    return out


def gate_ptm(gate) -> np.ndarray:
    if isinstance(gate, Clifford2Q):
        return clifford_ptm(gate)
    return unitary_ptm(gate_unitary(gate))


def fired_ptm(noise: NoiseSpec) -> np.ndarray:
    if noise.kind is NoiseKind.HERALDED_RESET:
        return _RESET_FIRED
    if noise.kind is NoiseKind.HERALDED_DEPOLARIZING:
        return _DEPOL_FIRED
    return ptm_from_kraus(noise.fired_kraus())


# ---------------------------------------------------------------------------
# dense state


class DenseState:
    """Pauli-coefficient representation of an ``n``-qubit density operator."""

    def __init__(self, coeffs: np.ndarray):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (4,) * coeffs.ndim:
            raise ValueError("coefficients must have shape (4,) * n")
        self.coeffs = coeffs

    @property
    def n(self) -> int:
        return self.coeffs.ndim

    @classmethod
    def zero(cls, n: int, cap: int = DEFAULT_CAP) -> "DenseState":
        _check_cap(n, cap)
        c = np.ones((1,) * 0)
        for _ in range(n):
            c = np.multiply.outer(c, _ZERO_1Q)
        return cls(c)

    @classmethod
    def maximally_mixed(cls, n: int, cap: int = DEFAULT_CAP) -> "DenseState":
        _check_cap(n, cap)
        c = np.zeros((4,) * n)
        c[(0,) * n] = 1.0
        return cls(c)

    @classmethod
    def from_rho(cls, rho: np.ndarray) -> "DenseState":
        n = int(round(math.log2(rho.shape[0])))
        c = np.zeros(4 ** n)
        for a in range(4 ** n):
            digits = [(a >> (2 * (n - 1 - i))) & 3 for i in range(n)]
            op = np.ones((1, 1))
            for dgt in digits:
                op = np.kron(op, PAULIS[dgt])
            c[a] = np.trace(op @ rho).real
        return cls(c.reshape((4,) * n))

    def rho(self) -> np.ndarray:
        """Density matrix (small ``n`` only)."""
        if self.n > 10:
            raise CapacityError("rho() is limited to 10 qubits")
        out = np.zeros((2 ** self.n, 2 ** self.n), dtype=complex)
        flat = self.coeffs.ravel()
        for a in np.flatnonzero(flat):
            op = np.ones((1, 1))
            for i in range(self.n):
                op = np.kron(op, PAULIS[(a >> (2 * (self.n - 1 - i))) & 3])
            out += flat[a] * op
        return out / 2 ** self.n

    def trace(self) -> float:
        return float(self.coeffs[(0,) * self.n])

    def copy(self) -> "DenseState":
        return DenseState(self.coeffs.copy())

    # channels ------------------------------------------------------------

    def apply_1q(self, T: np.ndarray, q: int):
        n = self.n
        x = self.coeffs.reshape(4 ** q, 4, 4 ** (n - q - 1))
        self.coeffs = np.matmul(T, x).reshape((4,) * n)

    def apply_2q(self, T: np.ndarray, a: int, b: int):
        """Apply a 16x16 transfer matrix whose first tensor factor acts on ``a``."""
        n = self.n
        if a > b:
            T = T.reshape(4, 4, 4, 4).transpose(1, 0, 3, 2).reshape(16, 16)
            a, b = b, a
        if b == a + 1:
            x = self.coeffs.reshape(4 ** a, 16, 4 ** (n - b - 1))
            self.coeffs = np.matmul(T, x).reshape((4,) * n)
            return
        x = np.moveaxis(self.coeffs, (a, b), (0, 1))
        shape = x.shape
        y = (T @ x.reshape(16, -1)).reshape(shape)
        self.coeffs = np.ascontiguousarray(np.moveaxis(y, (0, 1), (a, b)))

    # readout -------------------------------------------------------------

    def marginal(self, qubits: Sequence[int] | None = None, clamp: float = 1e-12) -> DistributionTable:
        """Computational-basis distribution of ``qubits`` (all qubits by default)."""
        qubits = tuple(range(self.n)) if qubits is None else tuple(qubits)
        inside = set(qubits)
        idx = tuple(slice(0, 4, 3) if q in inside else 0 for q in range(self.n))
        sub = self.coeffs[idx]
        order = sorted(qubits)
        sub = np.transpose(sub, [order.index(q) for q in qubits]) if qubits else np.asarray(sub)
        sub = np.array(sub, dtype=float)
        for ax in range(sub.ndim):
            s0 = np.take(sub, 0, axis=ax)
            s1 = np.take(sub, 1, axis=ax)
            sub = np.stack([s0 + s1, s0 - s1], axis=ax)
        p = np.ravel(sub) / 2 ** len(qubits)
        if p.size and p.min() < -clamp:
            raise IntegrityError(f"negative probability {p.min():.3e}")
        return DistributionTable(np.clip(p, 0.0, None), qubits)


def distribution(state: DenseState) -> DistributionTable:
    return state.marginal()


def _check_cap(n: int, cap: int):
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n > cap:
        raise CapacityError(f"{n} qubits exceeds the dense cap of {cap}")


# ---------------------------------------------------------------------------
# evolution


def run_layers(state: DenseState, descriptor: CircuitDescriptor, layers: Sequence[GateLayer],
               qubits: Sequence[int], mode: str = "average", heralds: np.ndarray | None = None,
               gate_ptms: dict | None = None) -> DenseState:
    """Apply ``layers`` (global qubit labels) to ``state`` over the local register ``qubits``.

    Noise acts on every qubit of the register after each layer. In
    ``"trajectory"`` mode heralded channels follow ``heralds`` (indexed by
    ``layer_index - layer_offset - 1`` and global qubit).
    """
    local = {q: i for i, q in enumerate(qubits)}
    noise = descriptor.noise
    if mode not in ("average", "trajectory"):
        raise ValueError(f"unknown mode {mode!r}")
    trajectory = mode == "trajectory" and noise.heralded
    if trajectory and heralds is None:
        heralds = descriptor.heralds()
    base = None if noise.kind is NoiseKind.NONE else channel_ptm(noise)
    ident = np.eye(4)
    fired = fired_ptm(noise) if noise.heralded else None
    if trajectory:
        base = None

    for layer in layers:
        if trajectory:
            row = heralds[layer.layer_index - descriptor.layer_offset - 1]
            per_qubit = {q: (fired if row[q] else None) for q in qubits}
        else:
            per_qubit = {q: base for q in qubits}
        touched = set()
        for (a, b), k in zip(layer.pairs, layer.gate_ids):
            key = (layer.layer_index, k)
            T = gate_ptms.get(key) if gate_ptms is not None else None
            if T is None:
                T = gate_ptm(descriptor.gate(layer.layer_index, k))
                if gate_ptms is not None:
                    gate_ptms[key] = T
            na, nb = per_qubit[a], per_qubit[b]
            if na is not None or nb is not None:
                T = np.kron(ident if na is None else na, ident if nb is None else nb) @ T
            state.apply_2q(T, local[a], local[b])
            touched.update((a, b))
        for q in qubits:
            if q not in touched and per_qubit[q] is not None:
                state.apply_1q(per_qubit[q], local[q])
    return state


def evolve(descriptor: CircuitDescriptor, mode: str = "average", heralds: np.ndarray | None = None,
           initial: DenseState | None = None, cap: int = DEFAULT_CAP) -> DenseState:
    """Exact output state of the circuit (``|0^n><0^n|`` input unless ``initial`` is given).

    ``mode`` selects how heralded channels act: ``"average"`` uses the
    averaged channel, ``"trajectory"`` follows a herald record (the
    descriptor's own unless ``heralds`` is supplied).
    """
    n = descriptor.n
    _check_cap(n, cap)
    state = DenseState.zero(n, cap) if initial is None else initial.copy()
    if state.n != n:
        raise ValueError("initial state has the wrong number of qubits")
    return run_layers(state, descriptor, descriptor.layers(), range(n), mode, heralds)
