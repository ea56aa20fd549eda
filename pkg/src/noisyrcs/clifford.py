"""Two-qubit Clifford group elements.

A Clifford is stored by the images of ``X_a, Z_a, X_b, Z_b`` under
conjugation, each image written as ``i**k X^x Z^z`` on the two qubits with
bit order ``(x_a, z_a, x_b, z_b)``. Qubit ``a`` is the first tensor factor.

Elements modulo global phase are numbered ``0 .. 11519``: the symplectic
part is picked by four sequential choices (15 * 8 * 3 * 2 = 720 elements of
Sp(4, 2)) and the remaining factor of 16 covers the generator signs. Drawing
a uniform integer therefore draws a uniform Clifford.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

GROUP_ORDER = 11520

_PAULI_1Q = {
    (0, 0): np.eye(2, dtype=complex),
    (1, 0): np.array([[0, 1], [1, 0]], dtype=complex),
    (0, 1): np.array([[1, 0], [0, -1]], dtype=complex),
    (1, 1): np.array([[0, 1], [1, 0]], dtype=complex) @ np.array([[1, 0], [0, -1]], dtype=complex),
}


def _bits(v: int) -> tuple[int, int, int, int]:
    return (v >> 3) & 1, (v >> 2) & 1, (v >> 1) & 1, v & 1


def _omega(u: int, v: int) -> int:
    xa, za, xb, zb = _bits(u)
    xa2, za2, xb2, zb2 = _bits(v)
    return (xa * za2 + za * xa2 + xb * zb2 + zb * xb2) & 1


def _num_y(v: int) -> int:
    xa, za, xb, zb = _bits(v)
    return xa * za + xb * zb


def pauli_mul(p: tuple[int, int], q: tuple[int, int]) -> tuple[int, int]:
    """Multiply two-qubit Paulis given as ``(bits, k)`` for ``i**k X^x Z^z``."""
    (u, k1), (v, k2) = p, q
    _, za, _, zb = _bits(u)
    xa2, _, xb2, _ = _bits(v)
    return u ^ v, (k1 + k2 + 2 * (za * xa2 + zb * xb2)) % 4


def pauli_matrix(bits: int, k: int = 0) -> np.ndarray:
    xa, za, xb, zb = _bits(bits)
    return (1j ** k) * np.kron(_PAULI_1Q[(xa, za)], _PAULI_1Q[(xb, zb)])


def _symplectic_from_index(idx: int) -> tuple[int, int, int, int]:
    i4 = idx % 2
    idx //= 2
    i3 = idx % 3
    idx //= 3
    i2 = idx % 8
    i1 = idx // 8
    u1 = list(range(1, 16))[i1]
    u2 = [v for v in range(16) if _omega(u1, v)][i2]
    comp = [v for v in range(1, 16) if not _omega(u1, v) and not _omega(u2, v)]
    u3 = comp[i3]
    u4 = [v for v in comp if _omega(u3, v)][i4]
    return u1, u2, u3, u4


@dataclass(frozen=True)
class Clifford2Q:
    """Two-qubit Clifford given by generator images ``((bits, k), ...)``."""

    images: tuple[tuple[int, int], tuple[int, int], tuple[int, int], tuple[int, int]]

    def __post_init__(self):
        u = [b for b, _ in self.images]
        pairs = [(0, 1, 1), (2, 3, 1), (0, 2, 0), (0, 3, 0), (1, 2, 0), (1, 3, 0)]
        for i, j, want in pairs:
            if _omega(u[i], u[j]) != want:
                raise ValueError("generator images do not preserve commutation relations")
        for bits, k in self.images:
            if (k - _num_y(bits)) % 2:
                raise ValueError("generator image is not Hermitian")

    @classmethod
    def from_id(cls, element_id: int) -> "Clifford2Q":
        if not 0 <= element_id < GROUP_ORDER:
            raise ValueError(f"Clifford id out of range: {element_id}")
        return _from_id(int(element_id))

    @classmethod
    def from_signed(cls, *gens: tuple[str, int]) -> "Clifford2Q":
        """Build from images written as Pauli labels, e.g. ``("XX", +1)``."""
        letters = {"I": (0, 0), "X": (1, 0), "Z": (0, 1), "Y": (1, 1)}
        images = []
        for label, sign in gens:
            (xa, za), (xb, zb) = letters[label[0]], letters[label[1]]
            bits = (xa << 3) | (za << 2) | (xb << 1) | zb
            images.append((bits, (_num_y(bits) + (0 if sign > 0 else 2)) % 4))
        return cls(tuple(images))

    @classmethod
    def from_unitary(cls, u: np.ndarray, atol: float = 1e-9) -> "Clifford2Q":
        """Recognise a 4x4 unitary as a Clifford; ``ValueError`` if it is not one."""
        u = np.asarray(u, dtype=complex)
        if u.shape != (4, 4) or not np.allclose(u.conj().T @ u, np.eye(4), atol=atol):
            raise ValueError("expected a 4x4 unitary")
        images = []
        for g in (0b1000, 0b0100, 0b0010, 0b0001):
            img = u @ pauli_matrix(g) @ u.conj().T
            coeffs = np.einsum("vji,ji->v", _PAULI_STACK.conj(), img) / 4
            v = int(np.argmax(np.abs(coeffs)))
            c = coeffs[v]
            if abs(abs(c) - 1) > atol:
                raise ValueError("gate is not a Clifford")
            # img = c * X^x Z^z with c a power of i
            k = int(round(np.angle(c) / (np.pi / 2))) % 4
            if abs(c - 1j ** k) > atol:
                raise ValueError("gate is not a Clifford")
            images.append((v, k))
        return cls(tuple(images))

    @cached_property
    def table(self) -> np.ndarray:
        """(16, 2) int array: input bits -> (output bits, phase increment)."""
        out = np.zeros((16, 2), dtype=np.int64)
        for v in range(16):
            acc = (0, 0)
            for g, bit in enumerate(_bits(v)):
                if bit:
                    acc = pauli_mul(acc, self.images[g])
            out[v] = acc
        return out

    @cached_property
    def unitary(self) -> np.ndarray:
        """A 4x4 unitary (up to global phase) realising the conjugation map.

        Uses ``sum_P C(P) A P^dag = 4 Tr(U^dag A) U`` with a basis matrix
        ``A = E_ij`` chosen so the trace is nonzero.
        """
        return _unitary_for(self.element_id).copy()

    @property
    def element_id(self) -> int:
        us = [b for b, _ in self.images]
        signs = 0
        for i, (bits, k) in enumerate(self.images):
            signs |= (((k - _num_y(bits)) % 4) // 2) << (3 - i)
        u1, u2, u3, _ = us
        i1 = u1 - 1
        i2 = [v for v in range(16) if _omega(u1, v)].index(u2)
        comp = [v for v in range(1, 16) if not _omega(u1, v) and not _omega(u2, v)]
        i3 = comp.index(u3)
        i4 = [v for v in comp if _omega(u3, v)].index(us[3])
        sym = ((i1 * 8 + i2) * 3 + i3) * 2 + i4
        return sym * 16 + signs


@lru_cache(maxsize=GROUP_ORDER)
def _from_id(element_id: int) -> Clifford2Q:
    signs, sym = element_id % 16, element_id // 16
    us = _symplectic_from_index(sym)
    images = tuple((u, (_num_y(u) + 2 * ((signs >> (3 - i)) & 1)) % 4)
                   for i, u in enumerate(us))
    return Clifford2Q(images)


_PAULI_STACK = np.stack([pauli_matrix(v) for v in range(16)])


@lru_cache(maxsize=GROUP_ORDER)
def _unitary_for(element_id: int) -> np.ndarray:
    table = Clifford2Q.from_id(element_id).table
    images = np.stack([pauli_matrix(b, k) for b, k in table])
    # m[i, j] = sum_v C_v E_ij P_v^dag
    m = np.einsum("vai,vbj->ijab", images, _PAULI_STACK.conj())
    norms = np.linalg.norm(m, axis=(2, 3))
    i, j = np.unravel_index(np.argmax(norms), norms.shape)
    m = m[i, j]
    return m / np.sqrt((m.conj().T @ m)[0, 0].real)


def random_clifford(rng: np.random.Generator) -> Clifford2Q:
    return Clifford2Q.from_id(int(rng.integers(GROUP_ORDER)))


IDENTITY = Clifford2Q.from_signed(("XI", 1), ("ZI", 1), ("IX", 1), ("IZ", 1))
CNOT = Clifford2Q.from_signed(("XX", 1), ("ZI", 1), ("IX", 1), ("ZZ", 1))
CZ = Clifford2Q.from_signed(("XZ", 1), ("ZI", 1), ("ZX", 1), ("IZ", 1))
SWAP = Clifford2Q.from_signed(("IX", 1), ("IZ", 1), ("XI", 1), ("ZI", 1))
H_A = Clifford2Q.from_signed(("ZI", 1), ("XI", 1), ("IX", 1), ("IZ", 1))
S_A = Clifford2Q.from_signed(("YI", 1), ("ZI", 1), ("IX", 1), ("IZ", 1))
X_A = Clifford2Q.from_signed(("XI", 1), ("ZI", -1), ("IX", 1), ("IZ", 1))
