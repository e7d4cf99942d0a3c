"""Parabolicity, capacities and p-harmonic functions on weighted K-regular trees."""

__version__ = "0.1.0"

from .capacity import (
    CapacityCurve,
    CondenserSpec,
    PairCapacityResult,
    capacity_exhaustion,
    condenser_capacity,
    limit_harmonic,
    pair_capacity,
    radial_condenser_capacity,
)
from .classifier import ClassificationResult, PhasePoint, classify, liouville_audit, phase_map
from .config_io import load_config, parse_config
from .solver import (
    DirichletProblem,
    FluxResidual,
    PotentialField,
    caccioppoli_check,
    flux_residual,
    solve_dirichlet,
    superharmonic_check,
)
from .tree import TreeTopology, VertexId, VertexSet, build_truncation, plate_sets, subtree_T1
from .weights import (
    Constant,
    EdgeCoefficients,
    ExpLevel,
    Finite,
    Infinite,
    NumericSampled,
    Override,
    PerLevelTable,
    PowLevelOfK,
    Undetermined,
    WeightConfig,
    edge_coefficients,
    level_index,
    rp_classify,
    rp_subtree,
    rp_truncated,
)

__all__ = [
    "CapacityCurve", "CondenserSpec", "PairCapacityResult", "capacity_exhaustion",
    "condenser_capacity", "limit_harmonic", "pair_capacity", "radial_condenser_capacity",
    "ClassificationResult", "PhasePoint", "classify", "liouville_audit", "phase_map",
    "load_config", "parse_config",
    "DirichletProblem", "FluxResidual", "PotentialField", "caccioppoli_check", "flux_residual",
    "solve_dirichlet", "superharmonic_check",
    "TreeTopology", "VertexId", "VertexSet", "build_truncation", "plate_sets", "subtree_T1",
    "Constant", "EdgeCoefficients", "ExpLevel", "Finite", "Infinite", "NumericSampled", "Override",
    "PerLevelTable", "PowLevelOfK", "Undetermined", "WeightConfig", "edge_coefficients",
    "level_index", "rp_classify", "rp_subtree", "rp_truncated",
]
