"""Lattice geometries, brickwork layouts, noise channels and gate draws.

Qubits are numbered by row-major linearisation of their lattice coordinates
(0-based). Gate layers are numbered ``t = 1, 2, ...`` as in the layer
convention of the circuit model; a truncated circuit keeps the original
layer numbers so its gates and heralds are bit-identical to the matching
layers of the full circuit.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Union

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from .clifford import Clifford2Q, GROUP_ORDER
from .rng import Purpose, stream

PAULIS = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


# ---------------------------------------------------------------------------
# geometry


@dataclass(frozen=True)
class GridGeometry:
    """Open-boundary hypercubic lattice with side lengths ``dims``."""

    dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if not dims or any(d < 1 for d in dims):
            raise ValueError(f"dims must be positive integers, got {self.dims}")
        object.__setattr__(self, "dims", dims)

    @property
    def D(self) -> int:
        return len(self.dims)

    @property
    def n(self) -> int:
        return math.prod(self.dims)

    def coords(self, q: int) -> tuple[int, ...]:
        return tuple(int(c) for c in np.unravel_index(q, self.dims))

    def index(self, coords) -> int:
        return int(np.ravel_multi_index(tuple(coords), self.dims))

    @cached_property
    def coord_array(self) -> np.ndarray:
        return np.array(np.unravel_index(np.arange(self.n), self.dims)).T

    @cached_property
    def distances(self) -> np.ndarray:
        """All-pairs lattice distance (Manhattan metric)."""
        c = self.coord_array
        return np.abs(c[:, None, :] - c[None, :, :]).sum(axis=2)

    def edges(self) -> list[tuple[int, int]]:
        out = []
        for q in range(self.n):
            c = self.coords(q)
            for axis in range(self.D):
                if c[axis] + 1 < self.dims[axis]:
                    nb = list(c)
                    nb[axis] += 1
                    out.append((q, self.index(nb)))
        return out

    def to_dict(self) -> dict:
        return {"dims": list(self.dims)}


@dataclass(frozen=True)
class GraphGeometry:
    """Arbitrary interaction graph with a cyclic sequence of gate matchings.

    Layer ``t`` applies gates on ``matchings[(t - 1) % len(matchings)]``.
    When no matchings are given, edges are split greedily into matchings.
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    matchings: tuple[tuple[tuple[int, int], ...], ...] = ()

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("graph needs at least one vertex")
        edges = tuple(sorted(tuple(sorted((int(a), int(b)))) for a, b in self.edges))
        for a, b in edges:
            if a == b or not (0 <= a < self.n and 0 <= b < self.n):
                raise ValueError(f"invalid edge ({a}, {b})")
        object.__setattr__(self, "edges", edges)
        if not self.matchings:
            object.__setattr__(self, "matchings", _greedy_matchings(edges))
        edge_set = set(edges)
        for m in self.matchings:
            used = set()
            for a, b in m:
                if tuple(sorted((a, b))) not in edge_set:
                    raise ValueError(f"matching uses non-edge ({a}, {b})")
                if a in used or b in used:
                    raise ValueError("matching pairs overlap")
                used.update((a, b))

    @classmethod
    def from_grid(cls, grid: GridGeometry) -> "GraphGeometry":
        period = 2 if grid.D == 1 else 4
        layers = build_layout(grid, period)
        return cls(grid.n, tuple(grid.edges()), tuple(tuple(l.pairs) for l in layers))

    @cached_property
    def distances(self) -> np.ndarray:
        if not self.edges:
            d = np.full((self.n, self.n), np.inf)
            np.fill_diagonal(d, 0)
            return d
        a, b = np.array(self.edges).T
        adj = csr_matrix((np.ones(len(a)), (a, b)), shape=(self.n, self.n))
        return shortest_path(adj, directed=False, unweighted=True)

    def to_dict(self) -> dict:
        return {"n": self.n, "edges": [list(e) for e in self.edges],
                "matchings": [[list(p) for p in m] for m in self.matchings]}


def _greedy_matchings(edges) -> tuple:
    matchings: list[list[tuple[int, int]]] = []
    busy: list[set] = []
    for a, b in edges:
        for m, used in zip(matchings, busy):
            if a not in used and b not in used:
                m.append((a, b))
                used.update((a, b))
                break
        else:
            matchings.append([(a, b)])
            busy.append({a, b})
    return tuple(tuple(m) for m in matchings)


Geometry = Union[GridGeometry, GraphGeometry]


# ---------------------------------------------------------------------------
# noise


class NoiseKind(str, enum.Enum):
    AMPLITUDE_DAMPING = "amplitude_damping"
    DEPOLARIZING = "depolarizing"
    HERALDED_RESET = "heralded_reset"
    HERALDED_DEPOLARIZING = "heralded_depolarizing"
    NONE = "none"


@dataclass(frozen=True)
class NoiseSpec:
    kind: NoiseKind = NoiseKind.NONE
    gamma: float = 0.0

    def __post_init__(self):
        kind = NoiseKind(self.kind)
        object.__setattr__(self, "kind", kind)
        gamma = 0.0 if kind is NoiseKind.NONE else float(self.gamma)
        if not 0.0 <= gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        object.__setattr__(self, "gamma", gamma)

    @property
    def heralded(self) -> bool:
        return self.kind in (NoiseKind.HERALDED_RESET, NoiseKind.HERALDED_DEPOLARIZING)

    def kraus(self) -> list[np.ndarray]:
        """Kraus operators of the channel; heralded kinds give the averaged channel."""
        g = self.gamma
        if self.kind is NoiseKind.NONE:
            return [np.eye(2, dtype=complex)]
        if self.kind is NoiseKind.AMPLITUDE_DAMPING:
            return [np.array([[1, 0], [0, math.sqrt(1 - g)]], dtype=complex),
                    np.array([[0, math.sqrt(g)], [0, 0]], dtype=complex)]
        if self.kind in (NoiseKind.DEPOLARIZING, NoiseKind.HERALDED_DEPOLARIZING):
            return [math.sqrt(1 - 3 * g / 4) * PAULIS[0]] + [math.sqrt(g / 4) * p for p in PAULIS[1:]]
        # averaged heralded reset: (1 - g) rho + g |0><0| Tr rho
        return [math.sqrt(1 - g) * PAULIS[0],
                np.array([[math.sqrt(g), 0], [0, 0]], dtype=complex),
                np.array([[0, math.sqrt(g)], [0, 0]], dtype=complex)]

    def fired_kraus(self) -> list[np.ndarray]:
        """Kraus operators of the branch applied when the herald fires."""
        if self.kind is NoiseKind.HERALDED_RESET:
            return [np.array([[1, 0], [0, 0]], dtype=complex), np.array([[0, 1], [0, 0]], dtype=complex)]
        if self.kind is NoiseKind.HERALDED_DEPOLARIZING:
            return [0.5 * p for p in PAULIS]
        raise ValueError(f"{self.kind.value} is not a heralded channel")

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "gamma": self.gamma}


def ptm_from_kraus(kraus) -> np.ndarray:
    """Single-qubit Pauli transfer matrix ``T_PQ = Tr[P N(Q)] / 2``."""
    out = np.zeros((4, 4))
    for q, Q in enumerate(PAULIS):
        image = sum(k @ Q @ k.conj().T for k in kraus)
        for p, P in enumerate(PAULIS):
            out[p, q] = np.trace(P @ image).real / 2
    return out


def channel_ptm(noise: NoiseSpec) -> np.ndarray:
    """Exact PTM of ``noise`` (the averaged channel for heralded kinds)."""
    return ptm_from_kraus(noise.kraus())


def contraction_coefficient(noise: NoiseSpec) -> float:
    """Rotation-invariant ``(|t|^2 + |M|_F^2) / 3`` of the channel PTM.

    Equals one exactly for unitary channels and is below one otherwise.
    """
    T = channel_ptm(noise)
    t = T[1:, 0]
    m = T[1:, 1:]
    return float((t @ t + np.sum(m * m)) / 3)


# ---------------------------------------------------------------------------
# layouts


@dataclass(frozen=True)
class GateLayer:
    """Disjoint gate pairs of layer ``layer_index``.

    ``gate_ids`` are the positions of the pairs in the unrestricted layer,
    which key the gate draws; they survive lightcone restriction.
    """

    pairs: tuple[tuple[int, int], ...]
    layer_index: int
    gate_ids: tuple[int, ...] = field(default=())

    def __post_init__(self):
        pairs = tuple((int(a), int(b)) for a, b in self.pairs)
        object.__setattr__(self, "pairs", pairs)
        if not self.gate_ids:
            object.__setattr__(self, "gate_ids", tuple(range(len(pairs))))
        elif len(self.gate_ids) != len(pairs):
            raise ValueError("gate_ids must match pairs")
        seen = [q for p in pairs for q in p]
        if len(seen) != len(set(seen)):
            raise ValueError(f"layer {self.layer_index} has overlapping pairs")

    def __len__(self):
        return len(self.pairs)


def build_layout_1d(geometry: GridGeometry, depth: int, first_layer: int = 1) -> list[GateLayer]:
    """Brickwork layers: odd ``t`` pairs (2,3),(4,5),...; even ``t`` pairs (1,2),(3,4),...

    Pair labels above are 1-based; returned pairs are 0-based qubit indices.
    """
    if geometry.D != 1:
        raise ValueError("build_layout_1d needs a 1D geometry")
    n = geometry.n
    if n < 2:
        raise ValueError("need at least two qubits")
    layers = []
    for t in range(first_layer, first_layer + depth):
        start = 1 if t % 2 else 0
        layers.append(GateLayer(tuple((i, i + 1) for i in range(start, n - 1, 2)), t))
    return layers


def build_layout_2d(geometry: GridGeometry, depth: int, first_layer: int = 1) -> list[GateLayer]:
    """Four-pattern cycle on an ``L0 x L1`` grid with even sides.

    Coordinate ``(c0, c1)`` is qubit ``c0 * L1 + c1``; "horizontal" pairs step
    along ``c0`` and "vertical" pairs along ``c1``.
    """
    if geometry.D != 2:
        raise ValueError("build_layout_2d needs a 2D geometry")
    L0, L1 = geometry.dims
    if L0 % 2 or L1 % 2:
        raise ValueError(f"2D layout needs even side lengths, got {geometry.dims}")
    layers = []
    for t in range(first_layer, first_layer + depth):
        phase = t % 4
        pairs = []
        if phase in (1, 3):
            start = 0 if phase == 1 else 1
            for c0 in range(start, L0 - 1, 2):
                for c1 in range(L1):
                    pairs.append((c0 * L1 + c1, (c0 + 1) * L1 + c1))
        else:
            start = 1 if phase == 2 else 0
            for c0 in range(L0):
                for c1 in range(start, L1 - 1, 2):
                    pairs.append((c0 * L1 + c1, c0 * L1 + c1 + 1))
        layers.append(GateLayer(tuple(sorted(pairs)), t))
    return layers


def build_layout(geometry: Geometry, depth: int, first_layer: int = 1) -> list[GateLayer]:
    if isinstance(geometry, GraphGeometry):
        m = geometry.matchings
        if not m:
            return [GateLayer((), t) for t in range(first_layer, first_layer + depth)]
        return [GateLayer(m[(t - 1) % len(m)], t) for t in range(first_layer, first_layer + depth)]
    if geometry.D == 1:
        return build_layout_1d(geometry, depth, first_layer)
    if geometry.D == 2:
        return build_layout_2d(geometry, depth, first_layer)
    raise ValueError(f"no built-in layout for D={geometry.D}")


# ---------------------------------------------------------------------------
# circuit descriptors


class GateFamily(str, enum.Enum):
    HAAR2Q = "haar2q"
    CLIFFORD2Q = "clifford2q"
    IDENTITY2Q = "identity2q"


@dataclass(frozen=True)
class CircuitDescriptor:
    """Everything needed to rebuild one circuit realization.

    ``layer_offset`` shifts layer numbering so that a truncated circuit's
    layer ``t`` is the original layer ``t + layer_offset``.
    """

    geometry: Geometry
    depth: int
    gate_family: GateFamily
    noise: NoiseSpec
    seed: int
    realization: int = 0
    layer_offset: int = 0

    def __post_init__(self):
        object.__setattr__(self, "gate_family", GateFamily(self.gate_family))
        if self.depth < 0:
            raise ValueError("depth must be nonnegative")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.realization < 0 or self.layer_offset < 0:
            raise ValueError("realization and layer_offset must be nonnegative")

    @property
    def n(self) -> int:
        return self.geometry.n

    def layers(self) -> list[GateLayer]:
        return build_layout(self.geometry, self.depth, self.layer_offset + 1)

    def gate(self, layer: int, k: int):
        return sample_gate(self, layer, k)

    def heralds(self) -> np.ndarray:
        """Herald record, bool array of shape ``(depth, n)``."""
        return herald_record(self)

    def replace(self, **changes) -> "CircuitDescriptor":
        data = dict(geometry=self.geometry, depth=self.depth, gate_family=self.gate_family,
                    noise=self.noise, seed=self.seed, realization=self.realization,
                    layer_offset=self.layer_offset)
        data.update(changes)
        return CircuitDescriptor(**data)

    # JSON --------------------------------------------------------------

    def to_dict(self) -> dict:
        out = {"geometry": self.geometry.to_dict(), "depth": self.depth,
               "gate_family": self.gate_family.value, "noise": self.noise.to_dict(),
               "seed": self.seed}
        if self.realization:
            out["realization"] = self.realization
        if self.layer_offset:
            out["layer_offset"] = self.layer_offset
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "CircuitDescriptor":
        _check_keys(data, {"geometry", "depth", "gate_family", "noise", "seed"},
                    {"realization", "layer_offset"}, "descriptor")
        geo = data["geometry"]
        if "dims" in geo:
            _check_keys(geo, {"dims"}, set(), "geometry")
            geometry: Geometry = GridGeometry(tuple(geo["dims"]))
        else:
            _check_keys(geo, {"n", "edges"}, {"matchings"}, "geometry")
            geometry = GraphGeometry(int(geo["n"]), tuple(tuple(e) for e in geo["edges"]),
                                     tuple(tuple(tuple(p) for p in m) for m in geo.get("matchings", ())))
        noise = data["noise"]
        _check_keys(noise, {"kind"}, {"gamma"}, "noise")
        return cls(geometry=geometry, depth=int(data["depth"]),
                   gate_family=GateFamily(data["gate_family"]),
                   noise=NoiseSpec(NoiseKind(noise["kind"]), float(noise.get("gamma", 0.0))),
                   seed=int(data["seed"]), realization=int(data.get("realization", 0)),
                   layer_offset=int(data.get("layer_offset", 0)))

    @classmethod
    def from_json(cls, text: str) -> "CircuitDescriptor":
        return cls.from_dict(json.loads(text))


def _check_keys(data: dict, required: set, optional: set, what: str):
    keys = set(data)
    missing = required - keys
    unknown = keys - required - optional
    if missing:
        raise ValueError(f"{what} is missing fields: {sorted(missing)}")
    if unknown:
        raise ValueError(f"{what} has unknown fields: {sorted(unknown)}")


# ---------------------------------------------------------------------------
# random draws


def haar_unitary(rng: np.random.Generator, dim: int = 4) -> np.ndarray:
    """Haar-random unitary: QR of a Ginibre matrix with R's phases absorbed."""
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def sample_gate(descriptor: CircuitDescriptor, layer: int, k: int):
    """Gate ``k`` of (original) layer ``layer``.

    Returns a 4x4 unitary for ``haar2q`` and ``identity2q`` and a
    :class:`Clifford2Q` for ``clifford2q``.
    """
    family = descriptor.gate_family
    if family is GateFamily.IDENTITY2Q:
        return np.eye(4, dtype=complex)
    rng = stream(descriptor.seed, descriptor.realization, layer, k, Purpose.GATE)
    if family is GateFamily.HAAR2Q:
        return haar_unitary(rng)
    return Clifford2Q.from_id(int(rng.integers(GROUP_ORDER)))


def gate_unitary(gate) -> np.ndarray:
    return gate.unitary if isinstance(gate, Clifford2Q) else np.asarray(gate)


def herald_record(descriptor: CircuitDescriptor) -> np.ndarray:
    """Which (layer, qubit) heralds fire; all False for non-heralded noise."""
    n, d = descriptor.n, descriptor.depth
    out = np.zeros((d, n), dtype=bool)
    if not descriptor.noise.heralded:
        return out
    for i in range(d):
        t = descriptor.layer_offset + i + 1
        rng = stream(descriptor.seed, descriptor.realization, t, 0, Purpose.HERALD)
        out[i] = rng.random(n) < descriptor.noise.gamma
    return out
