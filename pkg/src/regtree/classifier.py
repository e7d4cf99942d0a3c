"""Parabolic / hyperbolic verdicts with the evidence behind them.

Radial weights are decided by the criterion integral alone.  With
subtree overrides the tree is split at the root: the whole tree is
hyperbolic as soon as one branch is, since capacity through that branch
already bounds the total from below.  Branches still holding overrides
further down are split again at their own root.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from dataclasses import field as dc_field
from typing import Iterable, Literal

import numpy as np

from .capacity import CapacityCurve, LimitDiagnostics, capacity_exhaustion, limit_harmonic
from .errors import PreconditionError
from .solver import DEFAULT_TOL, PotentialField
from .tree import VertexId
from .weights import (
    DEFAULT_QUAD_TOL,
    RATE_TOL,
    ExpLevel,
    Finite,
    Infinite,
    RadialIntegrand,
    RpValue,
    Undetermined,
    WeightConfig,
    rp_classify,
)

Verdict = Literal["parabolic", "hyperbolic", "undetermined"]

# value spread below which a field counts as constant
NONCONSTANT_SPREAD = 1e-3
AUDIT_RESIDUAL = 1e-8


@dataclass(frozen=True)
class BranchVerdict:
    """R_p of the radial subtree hanging from ``anchor`` (its incoming edge included)."""

    anchor: VertexId
    rp: RpValue


@dataclass(frozen=True, eq=False)
class ClassificationResult:
    verdict: Verdict
    rp: RpValue | None
    config: WeightConfig
    branches: tuple[BranchVerdict, ...] = ()
    curve: CapacityCurve | None = None
    notes: tuple[str, ...] = ()


def _verdict_of(values: Iterable[RpValue]) -> Verdict:
    values = list(values)
    if any(isinstance(v, Finite) for v in values):
        return "hyperbolic"
    if any(isinstance(v, Undetermined) for v in values):
        return "undetermined"
    return "parabolic"


def _has_anchor_below(config: WeightConfig, v: VertexId) -> bool:
    K = config.K
    return any(
        a.level > v.level and a.index // K ** (a.level - v.level) == v.index
        for a in (o.anchor for o in config.overrides)
    )


def _radial_branches(config: WeightConfig, v: VertexId, quad_tol: float) -> list[BranchVerdict]:
    """Split below ``v`` until every piece carries a single weight pair."""
    out = []
    for c in range(config.K):
        w = VertexId(v.level + 1, v.index * config.K + c)
        if _has_anchor_below(config, w):
            out.extend(_radial_branches(config, w, quad_tol))
            continue
        lam, mu = config.pair_for(w)
        tail = RadialIntegrand(lam, mu, config.K, config.p, quad_tol).tail(float(v.level))
        out.append(BranchVerdict(w, tail))
    return out


def _total_rp(config: WeightConfig, quad_tol: float) -> RpValue | None:
    """R_p summed over the root branches, each with weight ``1/K``; None if a branch is mixed."""
    K = config.K
    parts = []
    for c in range(K):
        w = VertexId(1, c)
        if _has_anchor_below(config, w):
            return None
        lam, mu = config.pair_for(w)
        parts.append(RadialIntegrand(lam, mu, K, config.p, quad_tol).tail(0.0).scaled(1.0 / K))
    inf = [v for v in parts if isinstance(v, Infinite)]
    if inf:
        return inf[0]
    und = [v for v in parts if isinstance(v, Undetermined)]
    if und:
        return Undetermined(math.fsum(v.value if isinstance(v, Finite) else v.partial for v in parts),
                            max(v.horizon for v in und))
    return Finite(math.fsum(v.value for v in parts))


def classify(config: WeightConfig, with_curve: bool = False, n: int = 0,
             horizons=None, tol: float = DEFAULT_TOL,
             quad_tol: float = DEFAULT_QUAD_TOL) -> ClassificationResult:
    """Verdict for ``config``; ``with_curve`` attaches the exhaustion of ``Cap_p(X^n)``."""
    curve = capacity_exhaustion(config, n, horizons, tol, quad_tol=quad_tol) if with_curve else None
    if config.radial:
        rp = rp_classify(config, quad_tol)
        return ClassificationResult(_verdict_of([rp]), rp, config, curve=curve)
    branches = tuple(_radial_branches(config, VertexId(0, 0), quad_tol))
    verdict = _verdict_of(b.rp for b in branches)
    total = _total_rp(config, quad_tol)
    notes = []
    if verdict == "hyperbolic" and isinstance(total, Infinite):
        notes.append("total R_p infinite; capacity is carried by a hyperbolic branch")
    if total is None:
        notes.append("a root branch carries deeper overrides; total R_p not defined")
    for b in branches:
        notes.append(f"branch {tuple(b.anchor)}: {b.rp}")
    return ClassificationResult(verdict, total, config, branches, curve, tuple(notes))


# ---------------------------------------------------------------------------
# exponential family phase map


@dataclass(frozen=True)
class PhasePoint:
    """``lambda = exp(-epsilon j)``, ``mu = exp(-beta j)`` on the K-regular tree."""

    K: int
    p: float
    epsilon: float
    beta: float
    verdict: Verdict
    doubling: bool
    agrees: bool

    def config(self) -> WeightConfig:
        return exp_family(self.K, self.p, self.epsilon, self.beta)


def exp_family(K: int, p: float, epsilon: float, beta: float) -> WeightConfig:
    return WeightConfig(K, p, ExpLevel(epsilon), ExpLevel(beta))


def phase_verdict(K: int, p: float, epsilon: float, beta: float) -> Verdict:
    """Hyperbolic exactly when ``beta < log K + epsilon p``; the boundary line is parabolic."""
    logK = math.log(K)
    margin = logK + epsilon * p - beta
    slack = RATE_TOL * max(p - 1, abs(p * epsilon) + abs(beta) + logK)
    return "hyperbolic" if margin > slack else "parabolic"


def phase_map(K: int, p: float, epsilon_grid, beta_grid,
              quad_tol: float = DEFAULT_QUAD_TOL) -> list[PhasePoint]:
    """Every ``(epsilon, beta)`` pair, decided by the inequality and cross-checked on R_p."""
    eps = [float(e) for e in epsilon_grid]
    betas = [float(b) for b in beta_grid]
    if not eps or not betas:
        raise ValueError("grids must be nonempty")
    if any(not (e > 0 and math.isfinite(e)) for e in eps + betas):
        raise ValueError("grid values must be finite and positive")
    logK = math.log(K)
    out = []
    for e in eps:
        for b in betas:
            closed = phase_verdict(K, p, e, b)
            other = _verdict_of([rp_classify(exp_family(K, p, e, b), quad_tol)])
            out.append(PhasePoint(K, p, e, b, closed, b > logK, closed == other))
    return out


# ---------------------------------------------------------------------------
# bounded harmonic functions on hyperbolic trees


@dataclass(frozen=True)
class AuditItem:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True, eq=False)
class AuditReport:
    items: tuple[AuditItem, ...]
    field: PotentialField = dc_field(repr=False)
    diagnostics: LimitDiagnostics = dc_field(repr=False)

    @property
    def passed(self) -> bool:
        return all(i.passed for i in self.items)

    @property
    def failing(self) -> list[str]:
        return [i.name for i in self.items if not i.passed]


def liouville_audit(config: WeightConfig, limit: tuple[PotentialField, LimitDiagnostics] | None = None,
                    n_max: int = 10, window: int = 3, tol: float = DEFAULT_TOL,
                    quad_tol: float = DEFAULT_QUAD_TOL) -> AuditReport:
    """Check that the limit construction gives a bounded nonconstant p-harmonic function.

    ``limit`` is a precomputed ``limit_harmonic`` result; when omitted it
    is computed with ``n_max`` and ``window``.
    """
    verdict = classify(config, quad_tol=quad_tol).verdict
    if verdict != "hyperbolic":
        raise PreconditionError(f"config is {verdict}; bounded nonconstant p-harmonic functions need a hyperbolic tree")
    field_, diag = limit if limit is not None else limit_harmonic(config, n_max, window, tol, quad_tol=quad_tol)
    v = field_.values
    lo, hi = float(np.min(v)), float(np.max(v))
    spread = hi - lo
    energy = diag.energies[-1]
    m2, m1 = diag.bounds
    items = (
        AuditItem("bounded", lo >= 0.0 and hi <= 1.0, f"values in [{lo:.6g}, {hi:.6g}]"),
        AuditItem("nonconstant", spread > NONCONSTANT_SPREAD, f"spread {spread:.6g}"),
        AuditItem("harmonic", field_.residual <= AUDIT_RESIDUAL,
                  f"interior flux residual {field_.residual:.3e}"),
        AuditItem("energy", math.isfinite(energy) and energy > 0 and diag.energies_within_bounds,
                  f"energy {energy:.12g} within [{m2:.6g}, {m1:.6g}]"),
    )
    return AuditReport(items, field_, diag)
