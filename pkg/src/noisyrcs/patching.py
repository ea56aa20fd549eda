"""Patch-by-patch sampling from lightcone-restricted simulations.

The lattice is cut into patches visited in a fixed order. Patch ``X_j`` is
drawn from its distribution conditioned on the already-sampled patches in
its neighbourhood ``N'(X_j)``; that conditional only needs the marginal on
``X_j + N'(X_j)``, which in turn only needs the gates in the backward
lightcone of that region. Sampling therefore draws from

    P''(x) = prod_j P(x_{X_j} | x_{N'(X_j)}),

whose distance to the true output distribution is controlled by the
conditional mutual information across each patch boundary.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import oracle, stabilizer
from .circuit import CircuitDescriptor, GateLayer, GraphGeometry, GridGeometry
from .errors import CapacityError, ConditioningError
from .oracle import DistributionTable, exact_cmi


@dataclass(frozen=True)
class PatchGraph:
    """Ordered patches with prior-neighbour sets ``N'(X_i) = N(X_i) & X_{<i}``."""

    patches: tuple[tuple[int, ...], ...]
    edges: tuple[tuple[int, int], ...]
    prior_neighbors: tuple[tuple[int, ...], ...]
    ell: int

    @property
    def size(self) -> int:
        return len(self.patches)

    def neighbors(self, i: int) -> list[int]:
        return sorted({b for a, b in self.edges if a == i} | {a for a, b in self.edges if b == i})

    def conditioned_qubits(self, i: int) -> tuple[int, ...]:
        return tuple(q for j in self.prior_neighbors[i] for q in self.patches[j])


def coarse_grain(geometry: GridGeometry, ell: int) -> PatchGraph:
    """Hypercubes of side ``ell`` in raster order; edges join patches closer than ``ell``."""
    if ell < 1:
        raise ValueError("ell must be positive")
    coords = geometry.coord_array
    keys = [tuple(int(c) // ell for c in row) for row in coords]
    order = sorted(set(keys))
    patches = tuple(tuple(q for q in range(geometry.n) if keys[q] == key) for key in order)
    dist = geometry.distances
    edges = []
    for i, j in itertools.combinations(range(len(patches)), 2):
        if dist[np.ix_(patches[i], patches[j])].min() < ell:
            edges.append((i, j))
    return _finish(patches, edges, ell)


def ball_patches(geometry: GraphGeometry | GridGeometry, ell: int) -> PatchGraph:
    """Single-vertex patches in index order; vertex ``i`` conditions on ``B_ell(v_i) & v_{<i}``."""
    if ell < 0:
        raise ValueError("ell must be nonnegative")
    dist = geometry.distances
    n = geometry.n
    patches = tuple((q,) for q in range(n))
    edges = [(i, j) for i, j in itertools.combinations(range(n), 2) if dist[i, j] <= ell]
    return _finish(patches, edges, ell)


def _finish(patches, edges, ell) -> PatchGraph:
    prior = []
    for i in range(len(patches)):
        prior.append(tuple(sorted({a for a, b in edges if b == i and a < i}
                                  | {b for a, b in edges if a == i and b < i})))
    return PatchGraph(tuple(patches), tuple(edges), tuple(prior), ell)


# ---------------------------------------------------------------------------
# lightcones and truncation


@dataclass(frozen=True)
class LightconeRegion:
    qubits: tuple[int, ...]
    layers: tuple[GateLayer, ...]


def backward_lightcone(descriptor: CircuitDescriptor, region: Sequence[int], window: int | None = None) -> LightconeRegion:
    """Qubits and gates of the last ``window`` layers that can influence ``region``."""
    region = set(int(q) for q in region)
    if not region:
        raise ValueError("region must be nonempty")
    layers = descriptor.layers()
    window = len(layers) if window is None else window
    if not 0 <= window <= len(layers):
        raise ValueError(f"window {window} outside [0, {len(layers)}]")
    cone = set(region)
    kept: list[GateLayer] = []
    for layer in reversed(layers[len(layers) - window:]):
        pairs, ids = [], []
        for (a, b), k in zip(layer.pairs, layer.gate_ids):
            if a in cone or b in cone:
                pairs.append((a, b))
                ids.append(k)
        cone.update(q for p in pairs for q in p)
        kept.append(GateLayer(tuple(pairs), layer.layer_index, tuple(ids)) if pairs
                    else GateLayer((), layer.layer_index))
    return LightconeRegion(tuple(sorted(cone)), tuple(reversed(kept)))


def truncate_circuit(descriptor: CircuitDescriptor, d_star: int) -> CircuitDescriptor:
    """The last ``d_star`` layers, started from ``|0^n>``, with the original gate draws."""
    if not 0 <= d_star <= descriptor.depth:
        raise ValueError(f"d_star must lie in [0, {descriptor.depth}]")
    return descriptor.replace(depth=d_star,
                              layer_offset=descriptor.layer_offset + descriptor.depth - d_star)


# ---------------------------------------------------------------------------
# conditionals


def region_marginal(descriptor: CircuitDescriptor, region: Sequence[int], backend: str = "dense",
                    cap: int = oracle.DEFAULT_CAP) -> DistributionTable:
    """Exact marginal on ``region`` from a simulation of its backward lightcone only."""
    region = tuple(int(q) for q in region)
    cone = backward_lightcone(descriptor, region)
    local = {q: i for i, q in enumerate(cone.qubits)}
    if backend == "dense":
        if len(cone.qubits) > cap:
            raise CapacityError(f"lightcone of {len(cone.qubits)} qubits exceeds the dense cap of {cap}; "
                                "use a smaller d_star or ell")
        state = oracle.DenseState.zero(len(cone.qubits), cap)
        oracle.run_layers(state, descriptor, cone.layers, cone.qubits, mode="trajectory")
        table = state.marginal([local[q] for q in region])
    elif backend == "stabilizer":
        tab = stabilizer.init_zero_state(len(cone.qubits))
        stabilizer.run_layers(tab, descriptor, cone.layers, cone.qubits)
        table = stabilizer.marginal_distribution(tab, [local[q] for q in region])
    else:
        raise ValueError(f"unknown backend {backend!r}")
    return DistributionTable(table.probs, region)


def patch_conditional(descriptor: CircuitDescriptor, patch: Sequence[int], conditioned: Sequence[int],
                      assignment: dict[int, int] | Sequence[int], backend: str = "dense",
                      cap: int = oracle.DEFAULT_CAP) -> DistributionTable:
    """``P(X_j | N'(X_j) = x)`` from a lightcone simulation of ``X_j + N'(X_j)``."""
    patch, conditioned = tuple(patch), tuple(conditioned)
    if not isinstance(assignment, dict):
        assignment = dict(zip(conditioned, (int(b) for b in assignment)))
    joint = region_marginal(descriptor, patch + conditioned, backend, cap)
    return joint.conditional(patch, {q: assignment[q] for q in conditioned})


@dataclass
class PatchSampler:
    """Sequential patch sampler over a fixed (already truncated) circuit.

    The joint marginal of each ``X_j + N'(X_j)`` is computed once and reused
    for every draw; ``backend_calls`` counts those lightcone simulations.
    """

    descriptor: CircuitDescriptor
    graph: PatchGraph
    backend: str = "dense"
    cap: int = oracle.DEFAULT_CAP
    backend_calls: int = 0
    _tables: dict = field(default_factory=dict, repr=False)

    def conditional_table(self, j: int) -> np.ndarray:
        """Array ``(2^|N'|, 2^|X_j|)`` of joint probabilities, rows indexed by the conditioning bits."""
        if j not in self._tables:
            patch = self.graph.patches[j]
            cond = self.graph.conditioned_qubits(j)
            joint = region_marginal(self.descriptor, cond + patch, self.backend, self.cap)
            self.backend_calls += 1
            self._tables[j] = joint.probs.reshape(2 ** len(cond), 2 ** len(patch))
        return self._tables[j]

    def sample(self, n_samples: int, rng: np.random.Generator) -> np.ndarray:
        """``(n_samples, n)`` array of bits indexed by qubit."""
        out = np.zeros((n_samples, self.descriptor.n), dtype=np.int8)
        for j, patch in enumerate(self.graph.patches):
            cond = self.graph.conditioned_qubits(j)
            joint = self.conditional_table(j)
            row_index = _pack(out[:, list(cond)]) if cond else np.zeros(n_samples, dtype=np.int64)
            rows = joint[row_index]
            totals = rows.sum(axis=1)
            if np.any(totals <= 0):
                raise ConditioningError(f"patch {j}: conditioning event has probability zero")
            cdf = np.cumsum(rows, axis=1) / totals[:, None]
            u = rng.random(n_samples)
            pick = np.minimum((cdf < u[:, None]).sum(axis=1), rows.shape[1] - 1)
            m = len(patch)
            for i, q in enumerate(patch):
                out[:, q] = (pick >> (m - 1 - i)) & 1
        return out

    def distribution(self) -> DistributionTable:
        """Exact ``P''`` over all qubits (first qubit most significant)."""
        n = self.descriptor.n
        if n > 22:
            raise CapacityError("P'' can only be tabulated for up to 22 qubits")
        idx = np.arange(2 ** n, dtype=np.int64)
        bits = ((idx[:, None] >> np.arange(n - 1, -1, -1)) & 1).astype(np.int8)
        weight = np.ones(2 ** n)
        for j, patch in enumerate(self.graph.patches):
            cond = self.graph.conditioned_qubits(j)
            joint = self.conditional_table(j)
            totals = joint.sum(axis=1)
            r = _pack(bits[:, list(cond)]) if cond else np.zeros(2 ** n, dtype=np.int64)
            c = _pack(bits[:, list(patch)])
            if np.any((weight > 0) & (totals[r] <= 0)):
                raise ConditioningError(f"patch {j}: reachable conditioning event has probability zero")
            safe = np.where(totals > 0, totals, 1.0)
            weight = weight * joint[r, c] / safe[r]
        return DistributionTable(weight, tuple(range(n)))


def _pack(bits: np.ndarray) -> np.ndarray:
    m = bits.shape[1]
    if m == 0:
        return np.zeros(bits.shape[0], dtype=np.int64)
    return (bits.astype(np.int64) << np.arange(m - 1, -1, -1)).sum(axis=1)


def make_sampler(descriptor: CircuitDescriptor, ell: int, d_star: int | None = None,
                 backend: str = "dense", cap: int = oracle.DEFAULT_CAP) -> PatchSampler:
    d_star = descriptor.depth if d_star is None else d_star
    truncated = truncate_circuit(descriptor, d_star)
    geometry = descriptor.geometry
    if isinstance(geometry, GridGeometry):
        graph = coarse_grain(geometry, ell)
    else:
        graph = ball_patches(geometry, ell)
    return PatchSampler(truncated, graph, backend, cap)


def patch_sample(descriptor: CircuitDescriptor, ell: int, d_star: int, backend: str,
                 rng: np.random.Generator) -> np.ndarray:
    """One ``n``-bit sample from ``P''`` of the circuit truncated to its last ``d_star`` layers."""
    return make_sampler(descriptor, ell, d_star, backend).sample(1, rng)[0]


def ball_patch_sample(descriptor: CircuitDescriptor, ell: int, backend: str,
                      rng: np.random.Generator) -> np.ndarray:
    """One sample drawn bit by bit, vertex ``i`` conditioned on ``B_ell(v_i) & v_{<i}``."""
    sampler = PatchSampler(descriptor, ball_patches(descriptor.geometry, ell), backend)
    return sampler.sample(1, rng)[0]


# ---------------------------------------------------------------------------
# oracle-side checks


def patched_from_table(P: DistributionTable, graph: PatchGraph) -> DistributionTable:
    """``P''`` assembled from the conditionals of an explicit distribution ``P``."""
    n = P.m
    idx = np.arange(2 ** n, dtype=np.int64)
    bits = ((idx[:, None] >> np.arange(n - 1, -1, -1)) & 1).astype(np.int8)
    pos = {q: i for i, q in enumerate(P.qubits)}
    weight = np.ones(2 ** n)
    for j, patch in enumerate(graph.patches):
        cond = graph.conditioned_qubits(j)
        joint = P.marginal(cond + patch).probs.reshape(2 ** len(cond), 2 ** len(patch))
        totals = joint.sum(axis=1)
        r = _pack(bits[:, [pos[q] for q in cond]])
        c = _pack(bits[:, [pos[q] for q in patch]])
        safe = np.where(totals > 0, totals, 1.0)
        weight = weight * np.where(totals[r] > 0, joint[r, c] / safe[r], 1.0 / 2 ** len(patch))
    return DistributionTable(weight, P.qubits)


@dataclass(frozen=True)
class PatchingBoundReport:
    lhs: float
    eta_measured: float
    bound: float
    step_cmi: tuple[float, ...]

    @property
    def holds(self) -> bool:
        return self.lhs <= self.bound + 1e-12


def telescoping_cmi(P: DistributionTable, graph: PatchGraph) -> list[float]:
    """``I(X_j : X_{<j} minus N'(X_j) | N'(X_j))`` for every patch."""
    out = []
    for j, patch in enumerate(graph.patches):
        cond = graph.conditioned_qubits(j)
        earlier = [q for i in range(j) if i not in graph.prior_neighbors[j] for q in graph.patches[i]]
        out.append(max(0.0, exact_cmi(P, patch, cond, earlier)) if earlier else 0.0)
    return out


def verify_patching_bound(descriptor: CircuitDescriptor, ell: int, P: DistributionTable | None = None,
                 mode: str = "trajectory") -> PatchingBoundReport:
    """Compare ``||P - P''||_1`` with ``(|V|-1) sqrt(2 ln2 eta)`` on an oracle instance."""
    if P is None:
        P = oracle.evolve(descriptor, mode=mode).marginal()
    geometry = descriptor.geometry
    graph = coarse_grain(geometry, ell) if isinstance(geometry, GridGeometry) else ball_patches(geometry, ell)
    lhs = oracle.tv_distance(P, patched_from_table(P, graph))
    steps = telescoping_cmi(P, graph)
    eta = max(steps) if steps else 0.0
    bound = (graph.size - 1) * math.sqrt(2 * math.log(2) * eta)
    return PatchingBoundReport(lhs, eta, bound, tuple(steps))
