"""Simulation and sampling toolkit for noisy random quantum circuits."""
from .circuit import (CircuitDescriptor, GateFamily, GateLayer, GraphGeometry, GridGeometry,
                      NoiseKind, NoiseSpec, build_layout_1d, build_layout_2d, channel_ptm,
                      contraction_coefficient, sample_gate)
from .errors import CapacityError, ConditioningError, IntegrityError
from .oracle import DenseState, DistributionTable, evolve, exact_cmi, markov_residual, tv_distance

__all__ = [
    "CircuitDescriptor", "GateFamily", "GateLayer", "GraphGeometry", "GridGeometry", "NoiseKind",
    "NoiseSpec", "build_layout_1d", "build_layout_2d", "channel_ptm", "contraction_coefficient",
    "sample_gate", "CapacityError", "ConditioningError", "IntegrityError", "DenseState",
    "DistributionTable", "evolve", "exact_cmi", "markov_residual", "tv_distance",
]
