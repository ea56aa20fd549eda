"""Batch experiments: CMI scans, MPOEE benchmarks, sampling runs, validation suites.

Every random quantity is keyed by ``(seed, realization, ...)`` so results do
not depend on how realizations are spread over workers; the pool only
changes wall-clock time.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
from scipy import stats

from . import mpdo, oracle, patching, stabilizer
from .circuit import (CircuitDescriptor, GateFamily, GridGeometry, NoiseKind, NoiseSpec,
                      contraction_coefficient)
from .errors import CapacityError, IntegrityError
from .rng import Purpose, stream

EXPERIMENTS = ("cmi_scan", "mpoee_bench", "patch_sample", "validate")
SUITES = ("oracle_equivalence", "pinsker", "prop1", "lemma6_decay", "cmi_nonneg_stab")
MPDO_MEMORY_BUDGET = 2 * 1024 ** 3  # bytes for one tensor train and its two-site workspace
CMI_COLUMNS = ("model", "n", "d", "gamma", "ell", "mean_cmi", "stderr", "realizations")
MPOEE_COLUMNS = ("n", "d", "gamma", "chi", "cut", "mpoee")


@dataclass
class ExperimentConfig:
    experiment: str
    descriptor: CircuitDescriptor
    depths: list[int] = field(default_factory=list)
    gammas: list[float] = field(default_factory=list)
    ells: list[int] = field(default_factory=list)
    chis: list[int] = field(default_factory=lambda: [256])
    d_stars: list[int] = field(default_factory=list)
    realizations: int = 1
    mc_samples: int = 1000
    seed: int = 0
    output: str | None = None
    model: str = "stabilizer"
    x_side: int = 2
    smooth_depths: bool = False
    samples: int = 1000
    backend: str = "dense"
    suites: list[str] = field(default_factory=lambda: list(SUITES))
    corrupt: bool = False
    threads: int = 1

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if self.realizations < 1:
            raise ValueError("realizations must be at least 1")
        if not self.depths:
            self.depths = [self.descriptor.depth]
        if not self.gammas:
            self.gammas = [self.descriptor.noise.gamma]
        for name in ("depths", "gammas", "chis"):
            if not getattr(self, name):
                raise ValueError(f"sweep axis {name} is empty")
        if self.experiment in ("cmi_scan", "patch_sample") and not self.ells:
            raise ValueError("sweep axis ells is empty")
        unknown = set(self.suites) - set(SUITES)
        if unknown:
            raise ValueError(f"unknown suites {sorted(unknown)}")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentConfig":
        data = dict(data)
        allowed = {"experiment", "descriptor", "sweep", "realizations", "mc_samples", "seed", "output",
                   "model", "x_side", "smooth_depths", "samples", "backend", "suites", "corrupt", "threads"}
        unknown = set(data) - allowed
        if unknown:
            raise ValueError(f"config has unknown fields: {sorted(unknown)}")
        sweep = data.pop("sweep", {}) or {}
        bad = set(sweep) - {"depths", "gammas", "ells", "chis", "d_stars"}
        if bad:
            raise ValueError(f"sweep has unknown axes: {sorted(bad)}")
        data["descriptor"] = CircuitDescriptor.from_dict(data["descriptor"])
        data.update({k: list(v) for k, v in sweep.items()})
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def instance(self, depth: int, gamma: float, realization: int) -> CircuitDescriptor:
        noise = NoiseSpec(self.descriptor.noise.kind, gamma)
        return self.descriptor.replace(depth=depth, noise=noise, seed=self.seed, realization=realization)


# ---------------------------------------------------------------------------
# helpers


def fan_out(fn: Callable, items: Sequence, threads: int = 1) -> list:
    """``[fn(x) for x in items]``, optionally over a process pool; order is preserved."""
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def central_region(geometry: GridGeometry, side: int = 2) -> tuple[int, ...]:
    """Central ``side`` qubits in 1D or the central ``side x side`` block in 2D."""
    if any(side > L for L in geometry.dims):
        raise CapacityError(f"central region of side {side} does not fit in {geometry.dims}")
    starts = [(L - side) // 2 for L in geometry.dims]
    coords = np.array(np.meshgrid(*[np.arange(s, s + side) for s in starts], indexing="ij")).reshape(geometry.D, -1).T
    return tuple(sorted(geometry.index(c) for c in coords))


def tripartition(geometry, X: Sequence[int], ell: int) -> tuple[tuple, tuple, tuple]:
    """``Z`` = qubits at distance at least ``ell`` from ``X``; ``Y`` = the rest outside ``X``."""
    dist = geometry.distances[list(X)].min(axis=0)
    xs = set(X)
    Z = tuple(int(q) for q in range(geometry.n) if dist[q] >= ell and q not in xs)
    Y = tuple(int(q) for q in range(geometry.n) if dist[q] < ell and q not in xs)
    return tuple(X), Y, Z


def check_mpdo_size(descriptor: CircuitDescriptor, chi: int):
    """Raise :class:`CapacityError` when a chain of bond dimension ``chi`` cannot be held."""
    geometry = descriptor.geometry
    if not isinstance(geometry, GridGeometry) or geometry.D != 1:
        raise CapacityError("the tensor-train model needs a 1D geometry")
    if chi < 1:
        raise CapacityError("chi must be positive")
    # n sites of chi x 4 x chi complex128, plus the (4 chi) x (4 chi) two-site block
    need = 16 * (descriptor.n * 4 * chi * chi + 16 * chi * chi)
    if need > MPDO_MEMORY_BUDGET:
        raise CapacityError(f"n={descriptor.n}, chi={chi} needs about {need / 1024 ** 3:.1f} GiB")


def loglinear_fit(x: Sequence[float], y: Sequence[float]) -> dict:
    """Least-squares line through ``(x, ln y)``; nonpositive ``y`` are rejected."""
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise ValueError("log-linear fit needs positive values")
    res = stats.linregress(np.asarray(x, dtype=float), np.log(y))
    return {"slope": float(res.slope), "intercept": float(res.intercept), "r2": float(res.rvalue ** 2)}


def write_csv(rows: list[dict], columns: Sequence[str], path: str | None) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt(row[k]) for k in columns})
    text = buf.getvalue()
    if path:
        Path(path).write_text(text, encoding="utf-8")
    return text


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


# ---------------------------------------------------------------------------
# CMI scan


def _cmi_realization(args) -> dict:
    config, depth, gamma, r = args
    desc = config.instance(depth, gamma, r)
    geometry = desc.geometry
    X = central_region(geometry, config.x_side)
    parts = {ell: tripartition(geometry, X, ell) for ell in config.ells}
    out = {}
    if config.model == "stabilizer":
        diag = stabilizer.diagonal_subgroup(stabilizer.simulate(desc))
        for ell, (x, y, z) in parts.items():
            out[ell] = float(stabilizer.stabilizer_cmi(diag, x, y, z))
    elif config.model == "dense":
        P = oracle.evolve(desc, mode="trajectory").marginal()
        for ell, (x, y, z) in parts.items():
            out[ell] = oracle.exact_cmi(P, x, y, z)
    elif config.model == "mpdo":
        state = mpdo.simulate_mpdo(desc, config.chis[0])
        for ell, (x, y, z) in parts.items():
            rng = stream(config.seed, r, depth, ell, Purpose.MC)
            out[ell] = mpdo.mc_cmi(state, x, y, z, config.mc_samples, rng)[0]
    else:
        raise ValueError(f"unknown model {config.model!r}")
    return out


def run_cmi_scan(config: ExperimentConfig) -> list[dict]:
    """Mean CMI over realizations for every (depth, gamma, ell)."""
    if config.model == "dense" and config.descriptor.n > oracle.DEFAULT_CAP:
        raise CapacityError(f"dense model limited to {oracle.DEFAULT_CAP} qubits")
    if config.model == "mpdo":
        check_mpdo_size(config.descriptor, config.chis[0])
    rows = []
    for gamma in config.gammas:
        per_depth = {}
        for depth in config.depths:
            jobs = [(config, depth, gamma, r) for r in range(config.realizations)]
            values = fan_out(_cmi_realization, jobs, config.threads)
            per_depth[depth] = {ell: np.array([v[ell] for v in values]) for ell in config.ells}
        depths = list(config.depths)
        if config.smooth_depths:
            pairs = list(zip(depths[:-1], depths[1:]))
            merged = {d0: {ell: (per_depth[d0][ell] + per_depth[d1][ell]) / 2 for ell in config.ells}
                      for d0, d1 in pairs}
            per_depth, depths = merged, [d0 for d0, _ in pairs]
        for depth in depths:
            for ell in config.ells:
                v = per_depth[depth][ell]
                err = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
                rows.append({"model": config.model, "n": config.descriptor.n, "d": depth, "gamma": gamma,
                             "ell": ell, "mean_cmi": float(v.mean()), "stderr": err,
                             "realizations": len(v)})
    return rows


# ---------------------------------------------------------------------------
# MPOEE benchmark


def _mpoee_realization(args) -> dict:
    config, gamma, chi, r = args
    desc = config.instance(max(config.depths), gamma, r)
    cut = desc.n // 2 - 1
    record = {}
    wanted = set(config.depths)

    def hook(t, state):
        depth = t - desc.layer_offset
        if depth in wanted:
            record[depth] = mpdo.mpoee(state, cut)

    mpdo.simulate_mpdo(desc, chi, hook)
    if 0 in wanted:
        record[0] = 0.0
    return record


def run_mpoee_bench(config: ExperimentConfig) -> list[dict]:
    """MPOEE at the central cut (``cut`` = qubits left of the cut) per (gamma, chi, depth)."""
    for chi in config.chis:
        check_mpdo_size(config.descriptor, chi)
    rows = []
    n = config.descriptor.n
    for gamma in config.gammas:
        for chi in config.chis:
            jobs = [(config, gamma, chi, r) for r in range(config.realizations)]
            records = fan_out(_mpoee_realization, jobs, config.threads)
            for depth in config.depths:
                rows.append({"n": n, "d": depth, "gamma": gamma, "chi": chi, "cut": n // 2,
                             "mpoee": float(np.mean([rec[depth] for rec in records]))})
    return rows


# ---------------------------------------------------------------------------
# patch sampling


def run_patch_sample(config: ExperimentConfig) -> dict:
    """Draw ``config.samples`` bitstrings for the first (ell, d_star) of the sweep."""
    desc = config.descriptor.replace(seed=config.seed)
    ell = config.ells[0]
    d_star = config.d_stars[0] if config.d_stars else desc.depth
    sampler = patching.make_sampler(desc, ell, d_star, config.backend)
    rng = stream(config.seed, desc.realization, 0, 0, Purpose.SAMPLE)
    bits = sampler.sample(config.samples, rng)
    order = [q for patch in sampler.graph.patches for q in patch]
    lines = ["".join(str(int(b)) for b in row[order]) for row in bits]
    return {"lines": lines, "sidecar": {"descriptor": desc.to_dict(), "ell": ell, "d_star": d_star,
                                        "backend": config.backend, "seed": config.seed,
                                        "samples": config.samples, "qubit_order": order,
                                        "backend_calls": sampler.backend_calls}}


# ---------------------------------------------------------------------------
# marginal convergence from two inputs


def _marginal_gap_realization(args) -> list[float]:
    desc, region = args
    n = desc.n
    a = oracle.DenseState.zero(n)
    b = oracle.DenseState.maximally_mixed(n)
    gaps = []
    for layer in desc.layers():
        oracle.run_layers(a, desc, [layer], range(n))
        oracle.run_layers(b, desc, [layer], range(n))
        gaps.append(oracle.tv_distance(a.marginal(region), b.marginal(region)))
    return gaps


def marginal_convergence(template: CircuitDescriptor, depths: Sequence[int], realizations: int,
                         region: Sequence[int] | None = None, threads: int = 1) -> dict:
    """Mean ``||P_X - Q_X||_1`` for ``|0^n>`` versus maximally mixed inputs, per depth.

    Depth-``d`` circuits are prefixes of the deepest one, so one pass per
    realization yields every depth.
    """
    region = tuple(region) if region is not None else central_region(template.geometry, 2)
    dmax = max(depths)
    jobs = [(template.replace(depth=dmax, realization=r), region) for r in range(realizations)]
    curves = np.array(fan_out(_marginal_gap_realization, jobs, threads))
    means = curves.mean(axis=0)[[d - 1 for d in depths]]
    fit = loglinear_fit(depths, means)
    c = contraction_coefficient(template.noise)
    predicted = -math.log(c) / 2
    return {"depths": list(depths), "mean_gap": means.tolist(), "fit": fit, "rate": -fit["slope"],
            "predicted_rate": predicted, "ratio": -fit["slope"] / predicted}


# ---------------------------------------------------------------------------
# validation suites


def _suite_oracle_equivalence(seed: int) -> dict:
    worst_cliff = 0.0
    for r in range(5):
        d = CircuitDescriptor(GridGeometry((2, 4)), 6, GateFamily.CLIFFORD2Q,
                              NoiseSpec(NoiseKind.HERALDED_RESET, 0.2), seed, realization=r)
        p = stabilizer.marginal_distribution(stabilizer.simulate(d), range(8)).probs
        q = oracle.evolve(d, mode="trajectory").marginal().probs
        worst_cliff = max(worst_cliff, float(np.abs(p - q).max()))
    worst_haar = 0.0
    for r in range(3):
        d = CircuitDescriptor(GridGeometry((6,)), 6, GateFamily.HAAR2Q,
                              NoiseSpec(NoiseKind.AMPLITUDE_DAMPING, 0.1), seed, realization=r)
        p = mpdo.simulate_mpdo(d, 4096).distribution()
        q = oracle.evolve(d).marginal().probs
        worst_haar = max(worst_haar, float(np.abs(p - q).max()))
    return {"passed": worst_cliff == 0.0 and worst_haar <= 1e-8,
            "clifford_max_dev": worst_cliff, "haar_max_dev": worst_haar}


def _suite_pinsker(seed: int) -> dict:
    worst = math.inf
    count = 0
    for r in range(3):
        d = CircuitDescriptor(GridGeometry((6,)), 5, GateFamily.HAAR2Q,
                              NoiseSpec(NoiseKind.AMPLITUDE_DAMPING, 0.2), seed, realization=r)
        P = oracle.evolve(d).marginal()
        rng = stream(seed, r, 0, 0, Purpose.TRIPARTITION)
        for _ in range(20):
            X, Y, Z = random_tripartition(6, rng)
            worst = min(worst, oracle.pinsker_slack(P, X, Y, Z))
            count += 1
    return {"passed": worst >= -1e-12, "min_slack": worst, "cases": count}


def _suite_patching_bound(seed: int) -> dict:
    reports = []
    for r in range(5):
        d = CircuitDescriptor(GridGeometry((6,)), 4, GateFamily.HAAR2Q,
                              NoiseSpec(NoiseKind.AMPLITUDE_DAMPING, 0.2), seed, realization=r)
        rep = patching.verify_patching_bound(d, 2)
        reports.append({"lhs": rep.lhs, "bound": rep.bound, "holds": rep.holds})
    return {"passed": all(x["holds"] for x in reports), "cases": reports}


def _suite_marginal_decay(seed: int) -> dict:
    template = CircuitDescriptor(GridGeometry((6,)), 8, GateFamily.HAAR2Q,
                                 NoiseSpec(NoiseKind.AMPLITUDE_DAMPING, 0.2), seed)
    res = marginal_convergence(template, list(range(2, 9)), 20)
    return {"passed": res["fit"]["slope"] < 0, **res}


def _suite_cmi_nonneg(seed: int, corrupt: bool = False) -> dict:
    values = []
    try:
        if corrupt:
            bad = stabilizer.PauliTableau.from_strings(3, ["+ZII", "+IZI", "-ZZI"])
            bad.check()
        for r in range(20):
            d = CircuitDescriptor(GridGeometry((4, 4)), 6, GateFamily.CLIFFORD2Q,
                                  NoiseSpec(NoiseKind.HERALDED_RESET, 0.2), seed, realization=r)
            tab = stabilizer.simulate(d)
            tab.check()
            diag = stabilizer.diagonal_subgroup(tab)
            rng = stream(seed, r, 0, 0, Purpose.TRIPARTITION)
            for _ in range(5):
                X, Y, Z = random_tripartition(16, rng)
                values.append(stabilizer.stabilizer_cmi(diag, X, Y, Z))
    except IntegrityError as exc:
        return {"passed": False, "integrity_error": str(exc)}
    ok = all(isinstance(v, (int, np.integer)) and v >= 0 for v in values)
    return {"passed": ok, "cases": len(values), "max_cmi": int(max(values))}


def random_tripartition(n: int, rng: np.random.Generator) -> tuple[tuple, tuple, tuple]:
    """Random disjoint ``(X, Y, Z)`` with nonempty ``X`` and ``Z``."""
    labels = rng.integers(0, 4, size=n)  # 0: X, 1: Y, 2: Z, 3: unused
    perm = rng.permutation(n)
    labels[perm[0]], labels[perm[1]] = 0, 2
    X = tuple(int(q) for q in range(n) if labels[q] == 0)
    Y = tuple(int(q) for q in range(n) if labels[q] == 1)
    Z = tuple(int(q) for q in range(n) if labels[q] == 2)
    return X, Y, Z


def run_validate(config: ExperimentConfig) -> dict:
    """JSON-ready verdict with one entry per suite."""
    runners = {
        "oracle_equivalence": lambda: _suite_oracle_equivalence(config.seed),
        "pinsker": lambda: _suite_pinsker(config.seed),
        "prop1": lambda: _suite_patching_bound(config.seed),
        "lemma6_decay": lambda: _suite_marginal_decay(config.seed),
        "cmi_nonneg_stab": lambda: _suite_cmi_nonneg(config.seed, config.corrupt),
    }
    results = {name: runners[name]() for name in config.suites}
    return {"passed": all(r["passed"] for r in results.values()), "suites": results}
