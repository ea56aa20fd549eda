"""Tensor-train simulation of vectorised density operators.

Site ``k`` holds a ``(left, 4, right)`` complex tensor whose physical index
``I = 2 i + j`` labels ``|i><j|``. The train is kept in mixed-canonical form
around ``center``; two-site channels are applied at the center, split by SVD
and truncated to ``chi_max``. After every update the trace is renormalised
to one.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .circuit import CircuitDescriptor, GridGeometry, NoiseSpec, gate_unitary
from .errors import IntegrityError

SVD_RTOL = 1e-14
CLAMP_TOL = 1e-10
UNDERFLOW = 1e-300


class NegativeProbabilityWarning(UserWarning):
    """A truncated state assigned a probability below ``-CLAMP_TOL``."""


class NumericalError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# superoperators


def _single_superop(kraus) -> np.ndarray:
    return sum(np.kron(k, k.conj()) for k in kraus)


def noise_superop(noise: NoiseSpec) -> np.ndarray:
    if noise.heralded:
        raise ValueError(f"{noise.kind.value} noise belongs to the stabilizer track")
    return _single_superop(noise.kraus())


def build_superop(gate, noise: NoiseSpec) -> np.ndarray:
    """16x16 matrix of ``N (x) N o U`` on the index pair ``(I_k, I_{k+1})``."""
    u = gate_unitary(gate)
    if u.shape != (4, 4):
        raise ValueError("expected a two-qubit gate")
    s = np.kron(u, u.conj()).reshape((2,) * 8)
    # (i_k, i_k+1, i'_k, i'_k+1; j...) -> (i_k, i'_k, i_k+1, i'_k+1; j...)
    s = s.transpose(0, 2, 1, 3, 4, 6, 5, 7).reshape(16, 16)
    n1 = noise_superop(noise)
    return np.kron(n1, n1) @ s


# ---------------------------------------------------------------------------
# state


@dataclass
class MpdoState:
    sites: list[np.ndarray]
    chi_max: int
    center: int = 0
    bond_spectrum: list[np.ndarray] = field(default_factory=list)
    truncation_weight: list[float] = field(default_factory=list)
    trace: float = 1.0

    @property
    def n(self) -> int:
        return len(self.sites)

    def bond_dims(self) -> list[int]:
        return [a.shape[2] for a in self.sites[:-1]]

    def copy(self) -> "MpdoState":
        return MpdoState([a.copy() for a in self.sites], self.chi_max, self.center,
                         [s.copy() for s in self.bond_spectrum], list(self.truncation_weight), self.trace)

    # canonical form --------------------------------------------------------

    def move_center(self, k: int):
        if not 0 <= k < self.n:
            raise ValueError(f"site {k} out of range")
        while self.center < k:
            c = self.center
            a = self.sites[c]
            dl, _, dr = a.shape
            q, r = np.linalg.qr(a.reshape(dl * 4, dr))
            self.sites[c] = q.reshape(dl, 4, q.shape[1])
            self.sites[c + 1] = np.tensordot(r, self.sites[c + 1], axes=(1, 0))
            self.center += 1
        while self.center > k:
            c = self.center
            a = self.sites[c]
            dl, _, dr = a.shape
            q, r = np.linalg.qr(a.reshape(dl, 4 * dr).T)
            self.sites[c] = q.T.reshape(q.shape[1], 4, dr)
            self.sites[c - 1] = np.tensordot(self.sites[c - 1], r.T, axes=(2, 0))
            self.center -= 1

    def compute_trace(self) -> float:
        v = np.ones(1, dtype=complex)
        for a in self.sites:
            v = v @ (a[:, 0, :] + a[:, 3, :])
        return float(v[0].real)

    def _renormalize(self):
        tr = self.compute_trace()
        if not tr > 0:
            raise IntegrityError(f"non-positive trace {tr}")
        self.sites[self.center] = self.sites[self.center] / tr
        self.trace = 1.0

    # updates ---------------------------------------------------------------

    def apply_single(self, superop: np.ndarray, k: int):
        self.move_center(k)
        self.sites[k] = np.einsum("IJ,aJb->aIb", superop, self.sites[k])
        self._renormalize()

    def apply_two(self, superop: np.ndarray, k: int, move_right: bool = True):
        """Apply a 16x16 superoperator to sites ``(k, k+1)`` and split by SVD."""
        if not 0 <= k < self.n - 1:
            raise ValueError(f"bond {k} out of range")
        if self.center not in (k, k + 1):
            self.move_center(k if self.center < k else k + 1)
        a, b = self.sites[k], self.sites[k + 1]
        dl, dr = a.shape[0], b.shape[2]
        theta = np.tensordot(a, b, axes=(2, 0)).reshape(dl, 16, dr)
        theta = np.matmul(superop, theta).reshape(dl * 4, 4 * dr)
        try:
            u, s, vh = scipy.linalg.svd(theta, full_matrices=False, lapack_driver="gesdd")
        except (np.linalg.LinAlgError, ValueError):
            try:
                u, s, vh = scipy.linalg.svd(theta, full_matrices=False, lapack_driver="gesvd")
            except (np.linalg.LinAlgError, ValueError) as exc:
                raise NumericalError(f"SVD failed at bond {k}: {exc}") from None
        total = float(np.sum(s * s))
        keep = int(np.sum(s > SVD_RTOL * s[0])) if s.size and s[0] > 0 else 1
        keep = max(1, min(keep, self.chi_max))
        discarded = float(np.sum(s[keep:] ** 2)) / total if total > 0 else 0.0
        u, s, vh = u[:, :keep], s[:keep], vh[:keep]
        if move_right:
            self.sites[k] = u.reshape(dl, 4, keep)
            self.sites[k + 1] = (s[:, None] * vh).reshape(keep, 4, dr)
            self.center = k + 1
        else:
            self.sites[k] = (u * s[None, :]).reshape(dl, 4, keep)
            self.sites[k + 1] = vh.reshape(keep, 4, dr)
            self.center = k
        self.bond_spectrum[k] = s / math.sqrt(float(np.sum(s * s)))
        self.truncation_weight[k] += discarded
        self._renormalize()

    # readout ---------------------------------------------------------------

    def spectrum(self, cut: int) -> np.ndarray:
        """Normalised singular values across bond ``cut`` (between sites ``cut`` and ``cut+1``)."""
        if not 0 <= cut < self.n - 1:
            raise ValueError(f"cut {cut} out of range")
        self.move_center(cut)
        a = self.sites[cut]
        s = np.linalg.svd(a.reshape(a.shape[0] * 4, a.shape[2]), compute_uv=False)
        norm = math.sqrt(float(np.sum(s * s)))
        if norm == 0:
            raise NumericalError(f"all-zero spectrum at bond {cut}")
        return s / norm

    def prob(self, assignment: dict[int, int]) -> float:
        """Probability that the sites in ``assignment`` read the given bits (others marginalised)."""
        v = np.ones(1, dtype=complex)
        for k, a in enumerate(self.sites):
            if k in assignment:
                v = v @ a[:, 3 if assignment[k] else 0, :]
            else:
                v = v @ (a[:, 0, :] + a[:, 3, :])
        return _clamp(float(v[0].real))

    def distribution(self) -> np.ndarray:
        """All ``2^n`` probabilities, first qubit most significant (small ``n``)."""
        if self.n > 20:
            raise ValueError("distribution() is limited to 20 qubits")
        v = np.ones((1, 1), dtype=complex)
        for a in self.sites:
            v = np.stack([v @ a[:, 0, :], v @ a[:, 3, :]], axis=1).reshape(-1, a.shape[2])
        p = v[:, 0].real
        low = p.min()
        if low < -CLAMP_TOL:
            warnings.warn(f"negative probability {low:.3e}", NegativeProbabilityWarning, stacklevel=2)
        return np.clip(p, 0.0, None)

    # checkpoint ------------------------------------------------------------

    def save(self, path: str | Path):
        header = {"n": self.n, "chi_max": self.chi_max, "center": self.center, "trace": self.trace,
                  "shapes": [list(a.shape) for a in self.sites]}
        with open(path, "wb") as fh:
            fh.write((json.dumps(header) + "\n").encode())
            for a in self.sites:
                fh.write(np.ascontiguousarray(a, dtype="<c16").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "MpdoState":
        with open(path, "rb") as fh:
            header = json.loads(fh.readline())
            sites = []
            for shape in header["shapes"]:
                count = int(np.prod(shape))
                sites.append(np.frombuffer(fh.read(16 * count), dtype="<c16").reshape(shape).copy())
        n = header["n"]
        return cls(sites, header["chi_max"], header["center"], [np.ones(1) for _ in range(n - 1)],
                   [0.0] * (n - 1), header["trace"])


def _clamp(p: float) -> float:
    if p < -CLAMP_TOL:
        warnings.warn(f"negative probability {p:.3e}", NegativeProbabilityWarning, stacklevel=3)
    return max(p, 0.0)


def init_zero_mpdo(n: int, chi_max: int = 256) -> MpdoState:
    if n < 1:
        raise ValueError("need at least one site")
    if chi_max < 1:
        raise ValueError("chi_max must be positive")
    site = np.zeros((1, 4, 1), dtype=complex)
    site[0, 0, 0] = 1.0
    return MpdoState([site.copy() for _ in range(n)], chi_max, 0,
                     [np.ones(1) for _ in range(n - 1)], [0.0] * (n - 1), 1.0)


def apply_channel(state: MpdoState, superop: np.ndarray, k: int) -> MpdoState:
    state.apply_two(superop, k)
    return state


def mpoee(state: MpdoState, cut: int) -> float:
    """Shannon entropy (bits) of the squared normalised spectrum at ``cut``."""
    s = state.spectrum(cut)
    p = s * s
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


def diagonal_prob(state: MpdoState, bits: Sequence[int] | str) -> float:
    """Probability of ``bits`` on the first ``len(bits)`` sites, trailing sites marginalised."""
    bits = [int(b) for b in bits]
    if len(bits) > state.n:
        raise ValueError("prefix longer than the chain")
    return state.prob(dict(enumerate(bits)))


# ---------------------------------------------------------------------------
# circuits


def simulate_mpdo(descriptor: CircuitDescriptor, chi_max: int,
                  after_layer: Callable[[int, MpdoState], None] | None = None) -> MpdoState:
    """Evolve a 1D circuit; ``after_layer(t, state)`` runs after each layer."""
    if not isinstance(descriptor.geometry, GridGeometry) or descriptor.geometry.D != 1:
        raise ValueError("the tensor-train track needs a 1D geometry")
    n = descriptor.n
    state = init_zero_mpdo(n, chi_max)
    n1 = noise_superop(descriptor.noise)
    trivial_noise = np.allclose(n1, np.eye(4))
    for step, layer in enumerate(descriptor.layers()):
        ops = []
        paired = set()
        for (a, b), gid in zip(layer.pairs, layer.gate_ids):
            ops.append((min(a, b), build_superop(_oriented(descriptor.gate(layer.layer_index, gid), a, b),
                                                 descriptor.noise)))
            paired.update((a, b))
        if not trivial_noise:
            ops += [(q, None) for q in range(n) if q not in paired]
        ops.sort(key=lambda op: op[0])
        forward = step % 2 == 0
        if not forward:
            ops.reverse()
        for k, sup in ops:
            if sup is None:
                state.apply_single(n1, k)
            else:
                state.apply_two(sup, k, move_right=forward)
        if after_layer is not None:
            after_layer(layer.layer_index, state)
    return state


def _oriented(gate, a: int, b: int) -> np.ndarray:
    u = gate_unitary(gate)
    if a < b:
        return u
    swap = np.eye(4)[[0, 2, 1, 3]]
    return swap @ u @ swap


# ---------------------------------------------------------------------------
# Monte-Carlo entropies


def _site_blocks(state: MpdoState):
    p0 = [a[:, 0, :] for a in state.sites]
    p1 = [a[:, 3, :] for a in state.sites]
    summed = [x + y for x, y in zip(p0, p1)]
    right = [None] * (state.n + 1)
    right[state.n] = np.ones(1, dtype=complex)
    for k in range(state.n - 1, -1, -1):
        right[k] = summed[k] @ right[k + 1]
        scale = np.abs(right[k]).max()
        if scale > 0:
            right[k] = right[k] / scale
    return p0, p1, summed, right


def _binary_entropy(q: np.ndarray) -> np.ndarray:
    out = np.zeros_like(q)
    inner = (q > 0) & (q < 1)
    qi = q[inner]
    out[inner] = -(qi * np.log2(qi) + (1 - qi) * np.log2(1 - qi))
    return out


def _chain(state: MpdoState, region: Sequence[int], blocks, rng: np.random.Generator | None,
           fixed: np.ndarray | None, count: int):
    """Walk the chain over ``region`` (sorted), sampling or following ``fixed`` bits.

    Returns ``(bits, entropy_sums, ok)`` where ``ok`` flags rows whose
    conditional normalisations stayed above the underflow threshold.
    """
    p0, p1, summed, right = blocks
    region_set = set(region)
    pos = {q: i for i, q in enumerate(region)}
    bits = np.zeros((count, len(region)), dtype=np.int8) if fixed is None else fixed
    h = np.zeros(count)
    ok = np.ones(count, dtype=bool)
    left = np.ones((count, 1), dtype=complex)
    for k in range(state.n):
        if k not in region_set:
            left = left @ summed[k]
            continue
        l0 = left @ p0[k]
        l1 = left @ p1[k]
        w0 = (l0 @ right[k + 1]).real
        w1 = (l1 @ right[k + 1]).real
        if np.any(np.minimum(w0, w1) < -CLAMP_TOL * np.maximum(np.abs(w0) + np.abs(w1), UNDERFLOW)):
            warnings.warn("negative conditional weight clamped", NegativeProbabilityWarning, stacklevel=3)
        w0 = np.clip(w0, 0.0, None)
        w1 = np.clip(w1, 0.0, None)
        tot = w0 + w1
        bad = ~(tot > UNDERFLOW)
        ok &= ~bad
        tot = np.where(bad, 1.0, tot)
        q1 = np.where(bad, 0.5, w1 / tot)
        h += _binary_entropy(q1)
        col = pos[k]
        if fixed is None:
            bits[:, col] = rng.random(count) < q1
        b = bits[:, col].astype(bool)
        left = np.where(b[:, None], l1, l0) / np.where(bad, 1.0, tot)[:, None]
    return bits, h, ok


def _sample_region(state, region, n_samples, rng, blocks, max_rounds: int = 100):
    bits = np.zeros((n_samples, len(region)), dtype=np.int8)
    h = np.zeros(n_samples)
    todo = np.arange(n_samples)
    for _ in range(max_rounds):
        b, hh, ok = _chain(state, region, blocks, rng, None, len(todo))
        bits[todo[ok]] = b[ok]
        h[todo[ok]] = hh[ok]
        todo = todo[~ok]
        if not len(todo):
            return bits, h
    raise NumericalError("conditional normalisation underflow persisted after resampling")


def _stats(values: np.ndarray) -> tuple[float, float]:
    mean = float(values.mean())
    if len(values) < 2:
        return mean, 0.0
    return mean, float(values.std(ddof=1) / math.sqrt(len(values)))


def mc_entropy(state: MpdoState, region: Sequence[int], n_samples: int,
               rng: np.random.Generator) -> tuple[float, float]:
    """Chain-rule estimate of ``H(region)`` in bits and its standard error.

    Each draw samples the region site by site in chain order and adds the
    binary entropies of the conditionals it passes through.
    """
    if n_samples < 1:
        raise ValueError("need at least one sample")
    region = sorted(set(int(q) for q in region))
    if not region:
        return 0.0, 0.0
    _, h = _sample_region(state, region, n_samples, rng, _site_blocks(state))
    return _stats(h)


def mc_cmi(state: MpdoState, X, Y, Z, n_samples: int,
           rng: np.random.Generator) -> tuple[float, float]:
    """Estimate ``I(X:Z|Y)`` from one set of draws of ``XYZ``.

    The four chain-rule sums are evaluated on the same draws (restricted to
    each subregion), so the reported standard error is that of the paired
    per-draw combination.
    """
    X, Y, Z = (set(int(q) for q in r) for r in (X, Y, Z))
    if X & Y or Y & Z or X & Z:
        raise ValueError("regions must be disjoint")
    if not X or not Z:
        return 0.0, 0.0
    blocks = _site_blocks(state)
    full = sorted(X | Y | Z)
    bits, h_xyz = _sample_region(state, full, n_samples, rng, blocks)
    col = {q: i for i, q in enumerate(full)}

    def along(sub):
        sub = sorted(sub)
        if not sub:
            return np.zeros(n_samples)
        fixed = bits[:, [col[q] for q in sub]].copy()
        _, h, ok = _chain(state, sub, blocks, None, fixed, n_samples)
        if not ok.all():
            raise NumericalError("conditional normalisation underflow on a sampled path")
        return h

    per_draw = along(X | Y) + along(Y | Z) - h_xyz - along(Y)
    return _stats(per_draw)
