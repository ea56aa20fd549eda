"""Stabilizer-group simulation of Clifford circuits with heralded noise.

A group is stored as generator rows of bit-packed ``x`` and ``z`` words
(qubit ``q`` is bit ``q % 64`` of word ``q // 64``) plus a phase exponent
``k`` so that a row is ``i**k X^x Z^z``. Hermitian rows have
``k = #Y + 2 * signbit (mod 4)``.

The output distribution is uniform over the bitstrings satisfying the
parity constraints of the diagonal (I/Z only) subgroup, so entropies are
ranks and conditionals are affine-subspace counts.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from numba import njit

from .circuit import CircuitDescriptor, GateFamily, GateLayer, NoiseKind
from .clifford import Clifford2Q
from .errors import IntegrityError
from .oracle import DistributionTable

_ONE = np.uint64(1)

# ---------------------------------------------------------------------------
# word-level kernels


@njit(cache=True)
def _popcount(v):
    v = v - ((v >> np.uint64(1)) & np.uint64(0x5555555555555555))
    v = (v & np.uint64(0x3333333333333333)) + ((v >> np.uint64(2)) & np.uint64(0x3333333333333333))
    v = (v + (v >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
    return int((v * np.uint64(0x0101010101010101)) >> np.uint64(56))


@njit(cache=True)
def _get(words, r, q):
    return int((words[r, q >> 6] >> np.uint64(q & 63)) & np.uint64(1))


@njit(cache=True)
def _set(words, r, q, bit):
    w = q >> 6
    m = np.uint64(1) << np.uint64(q & 63)
    if bit:
        words[r, w] |= m
    else:
        words[r, w] &= ~m


@njit(cache=True)
def _rowmul(x, z, k, i, j):
    """row_i <- row_i * row_j."""
    extra = 0
    for w in range(x.shape[1]):
        extra += _popcount(z[i, w] & x[j, w])
        x[i, w] ^= x[j, w]
        z[i, w] ^= z[j, w]
    k[i] = (k[i] + k[j] + 2 * extra) & 3


@njit(cache=True)
def _swap_rows(x, z, k, i, j):
    for w in range(x.shape[1]):
        t = x[i, w]
        x[i, w] = x[j, w]
        x[j, w] = t
        t = z[i, w]
        z[i, w] = z[j, w]
        z[j, w] = t
    t2 = k[i]
    k[i] = k[j]
    k[j] = t2


@njit(cache=True)
def _apply_layer(x, z, k, r, qa, qb, out_bits, out_phase):
    """Conjugate rows ``0..r-1`` by gates on pairs ``(qa[g], qb[g])``."""
    for g in range(qa.shape[0]):
        a = qa[g]
        b = qb[g]
        for row in range(r):
            v = (_get(x, row, a) << 3) | (_get(z, row, a) << 2) | (_get(x, row, b) << 1) | _get(z, row, b)
            nv = out_bits[g, v]
            k[row] = (k[row] + out_phase[g, v]) & 3
            _set(x, row, a, (nv >> 3) & 1)
            _set(z, row, a, (nv >> 2) & 1)
            _set(x, row, b, (nv >> 1) & 1)
            _set(z, row, b, nv & 1)


@njit(cache=True)
def _clear_qubit(x, z, k, r, q):
    """Keep the subgroup acting as identity on ``q``; returns the new row count."""
    for col in range(2):
        words = x if col == 0 else z
        pivot = -1
        for row in range(r):
            if _get(words, row, q):
                pivot = row
                break
        if pivot < 0:
            continue
        for row in range(r):
            if row != pivot and _get(words, row, q):
                _rowmul(x, z, k, row, pivot)
        r -= 1
        if pivot != r:
            _swap_rows(x, z, k, pivot, r)
    return r


@njit(cache=True)
def _reduce_x(x, z, k, r, n):
    """Row-reduce on the x block; rows ``p..r-1`` of the result are diagonal.

    Returns ``p``, or ``-1`` if a row collapses to ``-I`` and ``-2`` if it
    collapses to ``+I`` (dependent generators).
    """
    p = 0
    for q in range(n):
        pivot = -1
        for row in range(p, r):
            if _get(x, row, q):
                pivot = row
                break
        if pivot < 0:
            continue
        _swap_rows(x, z, k, p, pivot)
        for row in range(r):
            if row != p and _get(x, row, q):
                _rowmul(x, z, k, row, p)
        p += 1
    # the diagonal rows are reduced among themselves so that any product
    # collapsing to +-I shows up as an empty row
    d = p
    for q in range(n):
        pivot = -1
        for row in range(d, r):
            if _get(z, row, q):
                pivot = row
                break
        if pivot < 0:
            continue
        _swap_rows(x, z, k, d, pivot)
        for row in range(p, r):
            if row != d and _get(z, row, q):
                _rowmul(x, z, k, row, d)
        d += 1
    for row in range(d, r):
        empty = True
        for w in range(x.shape[1]):
            if z[row, w] != 0:
                empty = False
        if empty:
            return -1 if k[row] == 2 else -2
    return p


@njit(cache=True)
def _reduce_masked(x, z, k, r, n, mask):
    """Row-reduce on the z columns selected by ``mask``.

    Returns the number of pivots; pivot rows are moved to the top.
    """
    p = 0
    for q in range(n):
        if not ((mask[q >> 6] >> np.uint64(q & 63)) & np.uint64(1)):
            continue
        pivot = -1
        for row in range(p, r):
            if _get(z, row, q):
                pivot = row
                break
        if pivot < 0:
            continue
        _swap_rows(x, z, k, p, pivot)
        for row in range(r):
            if row != p and _get(z, row, q):
                _rowmul(x, z, k, row, p)
        p += 1
    return p


# ---------------------------------------------------------------------------
# types


@dataclass(frozen=True)
class PauliString:
    """``sign * prod_q X^{x_q} Z^{z_q}`` with ``Y`` written as ``x = z = 1``.

    The sign refers to the Hermitian operator, i.e. ``Y`` itself carries +1.
    """

    x_bits: tuple[int, ...]
    z_bits: tuple[int, ...]
    sign: int = 1

    @classmethod
    def parse(cls, label: str) -> "PauliString":
        sign = -1 if label.startswith("-") else 1
        body = label.lstrip("+-")
        x = tuple(int(c in "XY") for c in body)
        z = tuple(int(c in "ZY") for c in body)
        return cls(x, z, sign)

    def label(self) -> str:
        chars = "".join("IXZY"[xb + 2 * zb] for xb, zb in zip(self.x_bits, self.z_bits))
        return ("+" if self.sign > 0 else "-") + chars


class PauliTableau:
    """Generating set of a stabilizer group on ``n`` qubits (single-owner, mutable)."""

    def __init__(self, n: int, x: np.ndarray, z: np.ndarray, k: np.ndarray, r: int):
        self.n = n
        self.x = x
        self.z = z
        self.k = k
        self.r = r

    @staticmethod
    def _alloc(n: int, rows: int):
        w = (n + 63) // 64
        return (np.zeros((rows, w), dtype=np.uint64), np.zeros((rows, w), dtype=np.uint64),
                np.zeros(rows, dtype=np.int64))

    @classmethod
    def from_strings(cls, n: int, strings: Iterable[PauliString | str]) -> "PauliTableau":
        strings = [PauliString.parse(s) if isinstance(s, str) else s for s in strings]
        x, z, k = cls._alloc(n, max(n, len(strings)))
        for row, s in enumerate(strings):
            if len(s.x_bits) != n:
                raise ValueError("string length does not match n")
            ny = 0
            for q in range(n):
                _set(x, row, q, s.x_bits[q])
                _set(z, row, q, s.z_bits[q])
                ny += s.x_bits[q] & s.z_bits[q]
            k[row] = (ny + (0 if s.sign > 0 else 2)) % 4
        return cls(n, x, z, k, len(strings))

    def copy(self) -> "PauliTableau":
        return PauliTableau(self.n, self.x.copy(), self.z.copy(), self.k.copy(), self.r)

    def __len__(self):
        return self.r

    def generators(self) -> list[PauliString]:
        out = []
        for row in range(self.r):
            xb = tuple(_get(self.x, row, q) for q in range(self.n))
            zb = tuple(_get(self.z, row, q) for q in range(self.n))
            ny = sum(a & b for a, b in zip(xb, zb))
            out.append(PauliString(xb, zb, 1 if (self.k[row] - ny) % 4 == 0 else -1))
        return out

    def labels(self) -> list[str]:
        return [g.label() for g in self.generators()]

    def bit_matrix(self) -> np.ndarray:
        """(r, 2n) 0/1 matrix ``[x | z]``."""
        xs = np.unpackbits(self.x[: self.r].view(np.uint8), axis=1, bitorder="little")[:, : self.n]
        zs = np.unpackbits(self.z[: self.r].view(np.uint8), axis=1, bitorder="little")[:, : self.n]
        return np.concatenate([xs, zs], axis=1).astype(np.int64)

    def is_diagonal(self) -> bool:
        return not self.x[: self.r].any()

    def check(self):
        """Raise :class:`IntegrityError` unless generators commute, are independent and exclude -I."""
        m = self.bit_matrix()
        n = self.n
        sym = (m[:, :n] @ m[:, n:].T + m[:, n:] @ m[:, :n].T) % 2
        if sym.any():
            raise IntegrityError("generators do not commute")
        for row in range(self.r):
            ny = int((m[row, :n] & m[row, n:]).sum())
            if (self.k[row] - ny) % 2:
                raise IntegrityError("generator is not Hermitian")
        t = self.copy()
        p = _reduce_x(t.x, t.z, t.k, t.r, n)
        if p == -1:
            raise IntegrityError("-I lies in the generated group")
        if p == -2:
            raise IntegrityError("generators are not independent")


# ---------------------------------------------------------------------------
# operations


def init_zero_state(n: int) -> PauliTableau:
    if n < 1:
        raise ValueError("need at least one qubit")
    x, z, k = PauliTableau._alloc(n, n)
    for q in range(n):
        _set(z, q, q, 1)
    return PauliTableau(n, x, z, k, n)


def _as_clifford(gate) -> Clifford2Q:
    if isinstance(gate, Clifford2Q):
        return gate
    try:
        return Clifford2Q.from_unitary(np.asarray(gate))
    except ValueError as exc:
        raise ValueError(f"not a two-qubit Clifford gate: {exc}") from None


def apply_clifford(tableau: PauliTableau, gate, qubit_pair: tuple[int, int]) -> PauliTableau:
    """Conjugate every generator by ``gate`` acting on ``qubit_pair`` (first entry is qubit a)."""
    a, b = (int(q) for q in qubit_pair)
    if a == b or not (0 <= a < tableau.n and 0 <= b < tableau.n):
        raise ValueError(f"bad qubit pair {qubit_pair}")
    c = _as_clifford(gate)
    table = c.table
    _apply_layer(tableau.x, tableau.z, tableau.k, tableau.r, np.array([a]), np.array([b]),
                 table[None, :, 0].copy(), table[None, :, 1].copy())
    return tableau


def apply_heralded_depolarizing(tableau: PauliTableau, i: int, fired: bool) -> PauliTableau:
    if fired:
        tableau.r = _clear_qubit(tableau.x, tableau.z, tableau.k, tableau.r, int(i))
    return tableau


def apply_heralded_reset(tableau: PauliTableau, i: int, fired: bool) -> PauliTableau:
    if fired:
        r = _clear_qubit(tableau.x, tableau.z, tableau.k, tableau.r, int(i))
        tableau.x[r] = 0
        tableau.z[r] = 0
        tableau.k[r] = 0
        _set(tableau.z, r, int(i), 1)
        tableau.r = r + 1
    return tableau


def diagonal_subgroup(tableau: PauliTableau) -> PauliTableau:
    """Generators of the subgroup made of I/Z factors only."""
    t = tableau.copy()
    p = _reduce_x(t.x, t.z, t.k, t.r, t.n)
    if p == -1:
        raise IntegrityError("-I lies in the generated group")
    if p == -2:
        raise IntegrityError("generators are not independent")
    rows = t.r - p
    x, z, k = PauliTableau._alloc(t.n, max(rows, 1))
    z[:rows] = t.z[p: t.r]
    k[:rows] = t.k[p: t.r]
    return PauliTableau(t.n, x, z, k, rows)


def _mask(n: int, region: Iterable[int]) -> np.ndarray:
    m = np.zeros((n + 63) // 64, dtype=np.uint64)
    for q in region:
        q = int(q)
        if not 0 <= q < n:
            raise ValueError(f"qubit {q} out of range")
        m[q >> 6] |= _ONE << np.uint64(q & 63)
    return m


def _require_diagonal(diag: PauliTableau):
    if not diag.is_diagonal():
        raise ValueError("expected a diagonal tableau (see diagonal_subgroup)")


def region_entropy(diag: PauliTableau, region: Iterable[int]) -> int:
    """Shannon entropy (bits) of the marginal on ``region``.

    The marginal is uniform over a coset whose constraints are the
    diagonal elements supported inside the region, so the entropy is
    ``|A| - (r - rank of the generators restricted to the complement)``.
    """
    _require_diagonal(diag)
    region = set(int(q) for q in region)
    outside = _mask(diag.n, set(range(diag.n)) - region)
    t = diag.copy()
    rank_out = _reduce_masked(t.x, t.z, t.k, t.r, t.n, outside)
    _check_independent(t, rank_out, region)
    return len(region) - (diag.r - rank_out)


def _check_independent(t: PauliTableau, start: int, region: set[int]):
    """Rows ``start..`` live inside ``region``; they must stay independent and exclude -I."""
    rows = t.r - start
    if rows == 0:
        return
    z, k = t.z[start: t.r].copy(), t.k[start: t.r].copy()
    x = np.zeros_like(z)
    p = _reduce_masked(x, z, k, rows, t.n, _mask(t.n, region))
    if p < rows:
        # row p reduced to a bare phase
        raise IntegrityError("-I lies in the generated group" if k[p] == 2
                             else "generators are not independent")


def stabilizer_cmi(diag: PauliTableau, X, Y, Z) -> int:
    X, Y, Z = set(X), set(Y), set(Z)
    if X & Y or Y & Z or X & Z:
        raise ValueError("regions must be disjoint")
    value = (region_entropy(diag, X | Y) + region_entropy(diag, Y | Z)
             - region_entropy(diag, X | Y | Z) - region_entropy(diag, Y))
    if value < 0:
        raise IntegrityError(f"negative conditional mutual information {value}")
    return value


def region_constraints(diag: PauliTableau, region: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """Parity checks ``(H, s)`` on ``region``: bitstrings ``x`` in the support satisfy ``H x = s (mod 2)``."""
    _require_diagonal(diag)
    region = [int(q) for q in region]
    outside = _mask(diag.n, set(range(diag.n)) - set(region))
    t = diag.copy()
    p = _reduce_masked(t.x, t.z, t.k, t.r, t.n, outside)
    rows = range(p, t.r)
    H = np.array([[_get(t.z, row, q) for q in region] for row in rows], dtype=np.int64).reshape(-1, len(region))
    s = np.array([(int(t.k[row]) >> 1) & 1 for row in rows], dtype=np.int64)
    for row in rows:
        if t.k[row] % 2:
            raise IntegrityError("diagonal generator with imaginary phase")
    return H, s


def marginal_distribution(tableau: PauliTableau, region: Sequence[int], max_bits: int = 22) -> DistributionTable:
    """Exact marginal on ``region``; every probability is a dyadic rational."""
    diag = tableau if tableau.is_diagonal() else diagonal_subgroup(tableau)
    region = tuple(int(q) for q in region)
    m = len(region)
    if m > max_bits:
        raise ValueError(f"region of {m} bits is too large to tabulate")
    H, s = region_constraints(diag, region)
    idx = np.arange(2 ** m, dtype=np.int64)
    bits = (idx[:, None] >> np.arange(m - 1, -1, -1)) & 1
    ok = np.all((bits @ H.T) % 2 == s, axis=1) if len(s) else np.ones(2 ** m, dtype=bool)
    count = int(ok.sum())
    if count == 0:
        raise IntegrityError("parity constraints are inconsistent")
    return DistributionTable(ok / count, region)


def conditional_distribution(tableau: PauliTableau, target: Sequence[int],
                             condition: dict[int, int]) -> DistributionTable:
    target = tuple(int(q) for q in target)
    if set(target) & set(condition):
        raise ValueError("target and conditioned sets overlap")
    joint = marginal_distribution(tableau, target + tuple(condition))
    return joint.conditional(target, condition)


# ---------------------------------------------------------------------------
# circuits


def layer_tables(descriptor: CircuitDescriptor, layer: GateLayer, local: dict[int, int] | None = None):
    """Kernel arguments for one layer: local pair indices and stacked gate tables."""
    m = len(layer.pairs)
    qa = np.empty(m, dtype=np.int64)
    qb = np.empty(m, dtype=np.int64)
    bits = np.empty((m, 16), dtype=np.int64)
    phase = np.empty((m, 16), dtype=np.int64)
    for g, ((a, b), kid) in enumerate(zip(layer.pairs, layer.gate_ids)):
        gate = _as_clifford(descriptor.gate(layer.layer_index, kid))
        qa[g] = a if local is None else local[a]
        qb[g] = b if local is None else local[b]
        bits[g] = gate.table[:, 0]
        phase[g] = gate.table[:, 1]
    return qa, qb, bits, phase


def run_layers(tableau: PauliTableau, descriptor: CircuitDescriptor, layers: Sequence[GateLayer],
               qubits: Sequence[int], heralds: np.ndarray | None = None) -> PauliTableau:
    """Apply ``layers`` to ``tableau`` whose qubit ``i`` is global qubit ``qubits[i]``."""
    if descriptor.gate_family is GateFamily.HAAR2Q:
        raise ValueError("the stabilizer track needs Clifford or identity gates")
    kind = descriptor.noise.kind
    if kind not in (NoiseKind.NONE, NoiseKind.HERALDED_RESET, NoiseKind.HERALDED_DEPOLARIZING):
        raise ValueError(f"{kind.value} noise is not stabilizer-representable")
    if heralds is None:
        heralds = descriptor.heralds()
    qubits = [int(q) for q in qubits]
    local = {q: i for i, q in enumerate(qubits)}
    reset = kind is NoiseKind.HERALDED_RESET
    for layer in layers:
        if layer.pairs and descriptor.gate_family is GateFamily.CLIFFORD2Q:
            qa, qb, bits, phase = layer_tables(descriptor, layer, local)
            _apply_layer(tableau.x, tableau.z, tableau.k, tableau.r, qa, qb, bits, phase)
        if kind is NoiseKind.NONE:
            continue
        row = heralds[layer.layer_index - descriptor.layer_offset - 1]
        for q in qubits:
            if row[q]:
                if reset:
                    apply_heralded_reset(tableau, local[q], True)
                else:
                    apply_heralded_depolarizing(tableau, local[q], True)
    return tableau


def simulate(descriptor: CircuitDescriptor, heralds: np.ndarray | None = None) -> PauliTableau:
    """Final stabilizer group of the circuit on ``|0^n>`` following a herald record."""
    tab = init_zero_state(descriptor.n)
    return run_layers(tab, descriptor, descriptor.layers(), range(descriptor.n), heralds)
