"""Condenser capacities on weighted truncations.

A condenser is an inner plate held at 1 and an outer plate held at 0;
its p-capacity is the least p-energy of a potential with those values,
which is exactly the energy of the Dirichlet solution.

Capacity of a ball ``X^n`` (to infinity) is reached through an
exhaustion over horizons ``m``.  Deep horizons do not need the full tree:
below the deepest level where weights still differ between vertices,
every subtree is radial and behaves like a single edge whose
p-resistance is known in closed form.  ``exhaustion_network`` builds that
lumped network, which is exact, so horizons up to 64 cost no more than
shallow ones.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Literal, Sequence

import numpy as np

from .errors import ConfigError, ConvergenceError, PreconditionError, RegTreeError, TopologyError
from .solver import (
    DEFAULT_TOL,
    DirichletProblem,
    Method,
    PotentialField,
    solve_dirichlet,
)
from .tree import TreeTopology, VertexSet, ball, build_truncation, level_set, plate_sets
from .weights import (
    DEFAULT_QUAD_TOL,
    EdgeCoefficients,
    Finite,
    Infinite,
    RadialIntegrand,
    WeightConfig,
    branch_pair,
    network_coefficients,
    profile_integral,
    rp_truncated,
)

MAX_HORIZON = 64
CURVE_SCHEMA = "capacity_curve/1"
# successive samples closer than this (relative) end the default schedule
STOP_RELATIVE = 1e-9
# slack for monotonicity checks on computed samples
MONOTONE_SLACK = 1e-9

Verdict = Literal["converged", "vanishing", "undetermined"]


def radial_condenser_capacity(config: WeightConfig, n: int, m: int,
                              quad_tol: float = DEFAULT_QUAD_TOL) -> float:
    """Closed-form capacity of ``X^n`` against the vertices of level ``m``."""
    if not 0 <= n < m:
        raise ValueError(f"need 0 <= n < m, got n={n}, m={m}")
    return rp_truncated(config, n, m, quad_tol) ** (1.0 - config.p)


@dataclass(frozen=True, eq=False)
class CondenserSpec:
    config: WeightConfig
    inner: VertexSet
    outer: VertexSet
    horizon: int

    def __post_init__(self):
        for name, s in (("inner", self.inner), ("outer", self.outer)):
            topo = s.topology
            if topo.depth != self.horizon or topo.branching != self.config.K:
                raise TopologyError(
                    f"{name} plate lives on X^{topo.depth} with K={topo.branching}, "
                    f"expected X^{self.horizon} with K={self.config.K}"
                )
            if len(s) == 0:
                raise PreconditionError(f"{name} plate is empty")
        if not self.inner.isdisjoint(self.outer):
            raise PreconditionError("inner and outer plates overlap")

    @property
    def topology(self) -> TreeTopology:
        return self.inner.topology

    @classmethod
    def ball_to_level(cls, config: WeightConfig, n: int, m: int) -> CondenserSpec:
        """``X^n`` at potential 1 against ``X \\ X^m`` (the level-``m`` vertices) at 0."""
        if not 0 <= n < m:
            raise ValueError(f"need 0 <= n < m, got n={n}, m={m}")
        topo = build_truncation(config.K, m)
        return cls(config, ball(topo, n), level_set(topo, m), m)


def _condenser_problem(coefficients: EdgeCoefficients, inner: np.ndarray,
                       outer: np.ndarray) -> DirichletProblem:
    return DirichletProblem(coefficients, inner | outer, inner.astype(float))


def condenser_capacity(spec: CondenserSpec, tol: float = DEFAULT_TOL,
                       method: Method = "newton",
                       quad_tol: float = DEFAULT_QUAD_TOL) -> tuple[float, PotentialField]:
    coef = network_coefficients(spec.config, spec.topology, quad_tol)
    problem = _condenser_problem(coef, spec.inner.mask, spec.outer.mask)
    field_ = solve_dirichlet(problem, tol=tol, method=method)
    return field_.energy, field_


# ---------------------------------------------------------------------------
# exhaustion


def _deepest_anchor(config: WeightConfig) -> int:
    return max((o.anchor.level for o in config.overrides), default=0)


def exhaustion_network(config: WeightConfig, n: int, m: int | None,
                       quad_tol: float = DEFAULT_QUAD_TOL) -> DirichletProblem:
    """Condenser problem for ``X^n`` against level ``m`` (``None``: infinity), lumped.

    The tree is kept explicitly down to level ``D = max(n, deepest
    anchor)``; everything below a level-``D`` vertex ``v`` is radial, so
    it is replaced by ``K`` edges to new leaves whose parallel
    combination has the p-resistance of ``v``'s subtree out to level
    ``m``.  Subtrees with infinite resistance get zero conductance.
    """
    K, p = config.K, config.p
    D = max(n, _deepest_anchor(config))
    if m is not None:
        if not 0 <= n < m:
            raise ValueError(f"need 0 <= n < m, got n={n}, m={m}")
        if m <= D + 1:
            topo = build_truncation(K, m)
            coef = network_coefficients(config, topo, quad_tol)
            return _condenser_problem(coef, ball(topo, n).mask, level_set(topo, m).mask)
    topo = build_truncation(K, D + 1)
    coef = network_coefficients(config, topo, quad_tol)
    log_r = coef.log_r.copy()
    lo, hi = topo.offset(D + 1), topo.offset(D + 2)
    share = math.log(K) / (p - 1)
    cache: dict = {}
    for f in range(topo.offset(D), topo.offset(D + 1)):
        pair = config.pair_for(topo.vertex(f))
        if pair not in cache:
            integrand = RadialIntegrand(pair[0], pair[1], K, p, quad_tol)
            if m is None:
                tail = integrand.tail(D)
                if isinstance(tail, Finite):
                    cache[pair] = math.log(tail.value)
                elif isinstance(tail, Infinite):
                    cache[pair] = math.inf
                else:
                    raise _UnknownTail(str(tail))
            else:
                cache[pair] = math.log(integrand.integral(D, m))
        base = cache[pair] + D * share + share
        kids = np.arange(lo, hi)[topo.parents[lo - 1:hi - 1] == f]
        log_r[kids - 1] = base
    coef = EdgeCoefficients(topo, p, log_r, coef.log_m)
    return _condenser_problem(coef, ball(topo, n).mask, level_set(topo, D + 1).mask)


class _UnknownTail(RegTreeError):
    pass


def symbolic_ball_capacity(config: WeightConfig, n: int, tol: float = DEFAULT_TOL,
                           quad_tol: float = DEFAULT_QUAD_TOL) -> float | None:
    """``Cap_p(X^n)`` to infinity, or ``None`` when some tail is not decided symbolically."""
    if config.radial:
        tail = RadialIntegrand.of(config, quad_tol).tail(n)
        if isinstance(tail, Finite):
            return tail.value ** (1.0 - config.p)
        if isinstance(tail, Infinite):
            return 0.0
        return None
    try:
        problem = exhaustion_network(config, n, None, quad_tol)
    except _UnknownTail:
        return None
    outer = problem.boundary & ~ball(problem.topology, n).mask
    if not np.any(problem.coefficients.conductance[outer[1:]]):
        return 0.0
    return solve_dirichlet(problem, tol=tol).energy


@dataclass(frozen=True)
class CapacitySample:
    horizon: int
    value: float
    residual: float


@dataclass(frozen=True)
class CapacityCurve:
    """Capacities of ``X^n`` against growing horizons, with the verdict on their limit."""

    n: int
    samples: tuple[CapacitySample, ...]
    limit: float | None
    bracket: tuple[float, float]
    verdict: Verdict
    note: str = ""

    @property
    def horizons(self) -> list[int]:
        return [s.horizon for s in self.samples]

    @property
    def values(self) -> list[float]:
        return [s.value for s in self.samples]

    @property
    def nonincreasing(self) -> bool:
        v = self.values
        return all(b <= a * (1 + MONOTONE_SLACK) for a, b in zip(v, v[1:]))

    def csv_text(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()

    def write_csv(self, fh, header_lines: Iterable[str] = ()) -> None:
        fh.write(f"# schema: {CURVE_SCHEMA}\n")
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["horizon", "value", "residual"])
        for s in self.samples:
            w.writerow([s.horizon, repr(float(s.value)), repr(float(s.residual))])


def default_horizons(n: int) -> list[int]:
    """``n+1, 2(n+1), 4(n+1), ...`` up to the horizon cap."""
    if not 0 <= n < MAX_HORIZON:
        raise ValueError(f"n must lie in [0, {MAX_HORIZON}), got {n}")
    out, m = [], n + 1
    while m < MAX_HORIZON:
        out.append(m)
        m *= 2
    out.append(MAX_HORIZON)
    return out


def capacity_exhaustion(config: WeightConfig, n: int, horizons: Sequence[int] | None = None,
                        tol: float = DEFAULT_TOL, method: Method = "newton",
                        lumped: bool = True,
                        quad_tol: float = DEFAULT_QUAD_TOL) -> CapacityCurve:
    """Exhaust ``Cap_p(X^n)`` over ``horizons`` and decide what the values tend to.

    Without explicit horizons the default doubling schedule is used and
    stops early once successive values agree to ``STOP_RELATIVE``.
    ``lumped=False`` solves on the full truncation at every horizon.
    """
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    auto = horizons is None
    hs = default_horizons(n) if auto else [int(h) for h in horizons]
    if not hs:
        raise ValueError("no horizons given")
    if any(b <= a for a, b in zip(hs, hs[1:])):
        raise ValueError("horizons must be strictly increasing")
    if hs[0] <= n:
        raise ValueError(f"every horizon must exceed n={n}; got {hs[0]}")
    samples: list[CapacitySample] = []
    for m in hs:
        try:
            if lumped:
                problem = exhaustion_network(config, n, m, quad_tol)
                f = solve_dirichlet(problem, tol=tol, method=method)
            else:
                _, f = condenser_capacity(CondenserSpec.ball_to_level(config, n, m), tol, method, quad_tol)
        except ConvergenceError as exc:
            # callers can still report what was finished
            exc.partial = tuple(samples)
            exc.horizon = m
            raise
        samples.append(CapacitySample(m, f.energy, f.residual))
        if auto and len(samples) > 1:
            a, b = samples[-2].value, samples[-1].value
            if abs(a - b) <= STOP_RELATIVE * max(abs(a), abs(b)):
                break
    return _judge(config, n, tuple(samples), tol, quad_tol)


def _judge(config, n, samples, tol, quad_tol) -> CapacityCurve:
    last = samples[-1].value
    values = [s.value for s in samples]
    monotone = all(b <= a * (1 + MONOTONE_SLACK) for a, b in zip(values, values[1:]))
    limit = symbolic_ball_capacity(config, n, tol, quad_tol)
    if not monotone:
        return CapacityCurve(n, samples, limit, (0.0, max(values)), "undetermined",
                             "samples are not nonincreasing in the horizon")
    if limit is None:
        return CapacityCurve(n, samples, None, (0.0, last), "undetermined",
                             "tail behaviour of the weights is unknown")
    if limit == 0.0:
        return CapacityCurve(n, samples, 0.0, (0.0, last), "vanishing",
                             "criterion integral diverges beyond level n")
    if last < limit * (1 - 1e-8):
        return CapacityCurve(n, samples, limit, (0.0, last), "undetermined",
                             "samples fell below the closed-form limit")
    return CapacityCurve(n, samples, limit, (limit, last), "converged",
                         "criterion integral converges beyond level n")


# ---------------------------------------------------------------------------
# pair capacities


@dataclass(frozen=True, eq=False)
class PairCapacityResult:
    """Capacity between the T_1 side and the rest, plates beyond level ``n``.

    ``bounds`` is ``(lower, upper)``; the lower bound is certified only
    when ``lower_certified`` is true (every root branch radial with a
    symbolically decided criterion integral), otherwise it is 0.
    """

    n: int
    value: float
    minimizer: PotentialField
    bounds: tuple[float, float]
    lower_certified: bool = True

    @property
    def within_bounds(self) -> bool:
        lo, hi = self.bounds
        return lo * (1 - 1e-9) <= self.value <= hi * (1 + 1e-9)


def branch_capacity(config: WeightConfig, c: int, quad_tol: float = DEFAULT_QUAD_TOL) -> float | None:
    """Capacity from the root to infinity through root branch ``c`` alone.

    The branch has p-resistance ``K**(1/(p-1)) * R_p`` of its weight
    pair; ``None`` when that integral is not decided.
    """
    lam, mu = branch_pair(config, c)
    value = RadialIntegrand(lam, mu, config.K, config.p, quad_tol).tail(0.0)
    if isinstance(value, Finite):
        return value.value ** (1.0 - config.p) / config.K
    if isinstance(value, Infinite):
        return 0.0
    return None


def pair_upper_bound(config: WeightConfig, quad_tol: float = DEFAULT_QUAD_TOL) -> float:
    """``mu(X^1) / d^p`` with ``d`` the lambda-length of the shortest plate-to-plate path."""
    K, p = config.K, config.p
    lengths, masses = [], []
    for c in range(K):
        lam, mu = config.pair_for((1, c))
        lengths.append(profile_integral(lam, K, 0.0, 1.0, quad_tol))
        masses.append(profile_integral(mu, K, 0.0, 1.0, quad_tol))
    d = lengths[0] + min(lengths[1:])
    return math.fsum(masses) / d**p


def pair_lower_bound(config: WeightConfig,
                     quad_tol: float = DEFAULT_QUAD_TOL) -> tuple[float, bool]:
    """``2**-p * min(T_1 side, other side)`` of the branch capacities; ``(value, certified)``."""
    try:
        caps = [branch_capacity(config, c, quad_tol) for c in range(config.K)]
    except ConfigError:
        return 0.0, False
    if any(x is None for x in caps):
        return 0.0, False
    side = min(caps[0], math.fsum(caps[1:]))
    return 2.0 ** (-config.p) * side, True


def pair_capacity(config: WeightConfig, n: int, tol: float = DEFAULT_TOL,
                  method: Method = "newton",
                  quad_tol: float = DEFAULT_QUAD_TOL) -> PairCapacityResult:
    """Capacity of the plates beyond level ``n``: T_1's side at 1, the rest at 0.

    Solved on ``X^{n+1}``, whose level ``n + 1`` carries the plates, so
    the free vertices are exactly ``X^n``.
    """
    if config.K < 2:
        raise ConfigError("pair capacity needs K >= 2", field="K")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    topo = build_truncation(config.K, n + 1)
    E, F = plate_sets(topo, n)
    value, field_ = condenser_capacity(CondenserSpec(config, E, F, n + 1), tol, method, quad_tol)
    lower, certified = pair_lower_bound(config, quad_tol)
    return PairCapacityResult(n, value, field_, (lower, pair_upper_bound(config, quad_tol)), certified)


@dataclass(frozen=True, eq=False)
class LimitDiagnostics:
    ns: tuple[int, ...]
    energies: tuple[float, ...]
    sup_deltas: tuple[float, ...]     # between u_{n-1} and u_n on X^window, for ns[1:]
    bounds: tuple[float, float]
    full_field: PotentialField = field(repr=False)

    @property
    def deltas_decreasing(self) -> bool:
        d = self.sup_deltas
        return all(b < a for a, b in zip(d, d[1:]))

    @property
    def energies_within_bounds(self) -> bool:
        lo, hi = self.bounds
        return all(lo * (1 - 1e-9) <= e <= hi * (1 + 1e-9) for e in self.energies)


def limit_harmonic(config: WeightConfig, n_max: int, window: int, tol: float = DEFAULT_TOL,
                   method: Method = "newton",
                   quad_tol: float = DEFAULT_QUAD_TOL) -> tuple[PotentialField, LimitDiagnostics]:
    """Pair-capacity minimizers ``u_n`` for ``n = window..n_max``, compared on ``X^window``.

    Their limit is a bounded nonconstant p-harmonic function, which
    exists when the lower energy bound is positive.  The returned field
    lives on ``X^window`` with its outermost level as boundary, so its
    residual is the flux imbalance of ``u_{n_max}`` inside the window.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    if n_max <= window:
        raise ValueError(f"need window < n_max, got window={window}, n_max={n_max}")
    lower, certified = pair_lower_bound(config, quad_tol)
    if not certified or lower <= 0:
        raise PreconditionError(
            "no positive lower energy bound: a root branch is parabolic or undecided, "
            "so the minimizers degenerate to constants"
        )
    upper = pair_upper_bound(config, quad_tol)
    ns, energies, deltas = [], [], []
    prev = None
    size = build_truncation(config.K, window).n_vertices
    res = None
    for n in range(window, n_max + 1):
        res = pair_capacity(config, n, tol, method, quad_tol)
        cur = res.minimizer.values[:size]
        if prev is not None:
            deltas.append(float(np.max(np.abs(cur - prev))))
        prev = cur
        ns.append(n)
        energies.append(res.value)
    topo = build_truncation(config.K, window)
    coef = network_coefficients(config, topo, quad_tol)
    rim = topo.levels == window
    values = res.minimizer.values[:size]
    field_ = PotentialField.evaluate(DirichletProblem(coef, rim, np.where(rim, values, 0.0)), values)
    diag = LimitDiagnostics(tuple(ns), tuple(energies), tuple(deltas), (lower, upper), res.minimizer)
    return field_, diag
