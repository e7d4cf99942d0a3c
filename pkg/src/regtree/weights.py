"""Radial densities, network coefficients and the criterion integral R_p.

A weight pair ``(lam, mu)`` turns the combinatorial tree into a metric
measure space.  For the network picture each edge at level ``n`` (the
unit interval ``(n-1, n]`` of the radius) gets

* a p-resistance  ``r = int (lam**p / mu)**(1/(p-1)) dt``  and
* a mass          ``m = int mu dt``,

so that the least p-energy of a function moving by ``du`` across the
edge is ``|du|**p / r**(p-1)``.  Everything level-dependent is kept as a
logarithm because deep levels over- or underflow quickly.

The R_p integrand ``lam**(p/(p-1)) mu**(1/(1-p)) K**(j/(1-p))`` is, on
level ``n``, the edge resistance density times ``K**(n/(1-p))``; for
families that depend on ``t`` only through ``j(t)`` all integrals over
whole levels are therefore finite sums, and tails are geometric.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Literal, Union

import numpy as np
from scipy import integrate

from .errors import ConfigError, NonRadialError, QuadratureError
from .tree import TreeTopology, VertexId

DEFAULT_QUAD_TOL = 1e-10
QUAD_SUBDIVISIONS = 200
# numeric profiles with an unknown tail are integrated this far
DEFAULT_NUMERIC_HORIZON = 64
# geometric rates within this (relative) distance of zero count as zero
RATE_TOL = 1e-12


def level_index(t: float) -> int:
    """j(t): the smallest integer ``>= t``; ``j(0) == 0``."""
    if t < 0:
        raise ValueError(f"level_index needs t >= 0, got {t}")
    return math.ceil(t)


# ---------------------------------------------------------------------------
# profiles


@dataclass(frozen=True)
class Constant:
    value: float

    def __post_init__(self):
        if not (self.value > 0 and math.isfinite(self.value)):
            raise ConfigError(f"constant profile needs a finite positive value, got {self.value}")

    def level_log(self, n: int, K: int) -> float:
        return math.log(self.value)

    def affine(self, K: int) -> tuple[float, float]:
        return math.log(self.value), 0.0

    head = 0


@dataclass(frozen=True)
class ExpLevel:
    """``exp(-rate * j(t))``."""

    rate: float

    def level_log(self, n: int, K: int) -> float:
        return -self.rate * n

    def affine(self, K: int) -> tuple[float, float]:
        return 0.0, -self.rate

    head = 0


@dataclass(frozen=True)
class PowLevelOfK:
    """``K ** (exponent * j(t))``."""

    exponent: float

    def level_log(self, n: int, K: int) -> float:
        return self.exponent * n * math.log(K)

    def affine(self, K: int) -> tuple[float, float]:
        return 0.0, self.exponent * math.log(K)

    head = 0


@dataclass(frozen=True)
class PerLevelTable:
    """Explicit value per level ``1..len(values)``; the last value repeats beyond."""

    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if not self.values:
            raise ConfigError("per-level table is empty")
        if not all(v > 0 and math.isfinite(v) for v in self.values):
            raise ConfigError("per-level table entries must be finite and positive")

    def level_log(self, n: int, K: int) -> float:
        return math.log(self.values[min(max(n, 1), len(self.values)) - 1])

    def affine(self, K: int) -> tuple[float, float]:
        return math.log(self.values[-1]), 0.0

    @property
    def head(self) -> int:
        return len(self.values)


LevelProfile = Union[Constant, ExpLevel, PowLevelOfK, PerLevelTable]


@dataclass(frozen=True)
class NumericSampled:
    """A positive function of the radius, evaluated pointwise.

    ``tail`` optionally declares a level-constant family that takes over
    for ``t > tail_from``; without it the behaviour at infinity is
    unknown and R_p is reported as undetermined.
    """

    func: Callable[[float], float] = field(compare=True)
    tail: LevelProfile | None = None
    tail_from: int | None = None
    label: str = "sampled"
    horizon: int = DEFAULT_NUMERIC_HORIZON

    def __post_init__(self):
        if (self.tail is None) != (self.tail_from is None):
            raise ConfigError("a declared tail needs both 'tail' and 'tail_from'")
        if self.tail_from is not None and self.tail_from < 0:
            raise ConfigError("tail_from must be >= 0")

    @classmethod
    def from_samples(cls, t, values, **kwargs) -> NumericSampled:
        """Piecewise-linear interpolant of ``(t, value)`` samples."""
        t = np.asarray(t, dtype=float)
        v = np.asarray(values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size < 2:
            raise ConfigError("sampled profile needs matching 1-D t/values with >= 2 points")
        if np.any(np.diff(t) <= 0):
            raise ConfigError("sample abscissae must be strictly increasing")
        if np.any(v <= 0) or not np.all(np.isfinite(v)):
            raise ConfigError("sampled values must be finite and positive")
        if t[0] > 0:
            raise ConfigError("samples must start at t <= 0")
        kwargs.setdefault("horizon", max(1, math.floor(t[-1])))

        def interp(x: float, _t=t, _v=v) -> float:
            return float(np.interp(x, _t, _v))

        return cls(interp, **kwargs)

    def level_constant_from(self) -> int | None:
        return self.tail_from

    def level_log(self, n: int, K: int) -> float:
        if self.tail is None or n <= self.tail_from:
            raise ValueError("numeric profile is not level-constant here")
        return self.tail.level_log(n, K)

    def __call__(self, t: float) -> float:
        return self.func(t)


RadialProfile = Union[Constant, ExpLevel, PowLevelOfK, PerLevelTable, NumericSampled]


def profile_value(profile: RadialProfile, t: float, K: int) -> float:
    if isinstance(profile, NumericSampled):
        if profile.tail is not None and t > profile.tail_from:
            return math.exp(profile.tail.level_log(level_index(t), K))
        val = profile(t)
        if not val > 0:
            raise ConfigError(f"profile '{profile.label}' is not positive at t={t}: {val}")
        return val
    return math.exp(profile.level_log(level_index(t), K))


def _level_constant_at(profile: RadialProfile, n: int) -> bool:
    if isinstance(profile, NumericSampled):
        return profile.tail is not None and n > profile.tail_from
    return True


def _head(profile: RadialProfile) -> int | None:
    """Level after which the profile is affine in ``n`` (None: never known)."""
    if isinstance(profile, NumericSampled):
        if profile.tail is None:
            return None
        return max(profile.tail_from, profile.tail.head)
    return profile.head


def _affine(profile: RadialProfile, K: int) -> tuple[float, float]:
    if isinstance(profile, NumericSampled):
        return profile.tail.affine(K)
    return profile.affine(K)


# ---------------------------------------------------------------------------
# configs


@dataclass(frozen=True)
class Override:
    anchor: VertexId
    lam: RadialProfile
    mu: RadialProfile

    def __post_init__(self):
        object.__setattr__(self, "anchor", VertexId(*self.anchor))


@dataclass(frozen=True)
class WeightConfig:
    K: int
    p: float
    lam: RadialProfile
    mu: RadialProfile
    overrides: tuple[Override, ...] = ()

    def __post_init__(self):
        if not isinstance(self.K, (int, np.integer)) or self.K < 1:
            raise ConfigError(f"K must be an integer >= 1, got {self.K!r}", field="K")
        if not (self.p > 1 and math.isfinite(self.p)):
            raise ConfigError(f"p must be a finite real > 1, got {self.p!r}", field="p")
        object.__setattr__(self, "overrides", tuple(self.overrides))
        anchors = [o.anchor for o in self.overrides]
        for i, a in enumerate(anchors):
            if a.level < 1 or not 0 <= a.index < self.K**a.level:
                raise ConfigError(f"override anchor {tuple(a)} is not a non-root vertex", field="overrides")
            for b in anchors[:i]:
                if a == b:
                    raise ConfigError(f"duplicate override anchor {tuple(a)}", field="overrides")
                hi, lo = (a, b) if a.level >= b.level else (b, a)
                if hi.index // self.K ** (hi.level - lo.level) == lo.index:
                    raise ConfigError(
                        f"override anchors {tuple(lo)} and {tuple(hi)} are nested", field="overrides"
                    )

    @property
    def radial(self) -> bool:
        return not self.overrides

    def pair_for(self, v: VertexId) -> tuple[RadialProfile, RadialProfile]:
        """Weight pair on the incoming edge of ``v`` (anchors govern their own edge)."""
        v = VertexId(*v)
        for o in self.overrides:
            a = o.anchor
            if a.level <= v.level and v.index // self.K ** (v.level - a.level) == a.index:
                return o.lam, o.mu
        return self.lam, self.mu

    def with_pair(self, lam: RadialProfile, mu: RadialProfile) -> WeightConfig:
        return WeightConfig(self.K, self.p, lam, mu)


# ---------------------------------------------------------------------------
# edge coefficients


@dataclass(frozen=True)
class EdgeCoefficient:
    log_r: float
    log_m: float

    @property
    def resistance(self) -> float:
        return math.exp(self.log_r)

    @property
    def mass(self) -> float:
        return math.exp(self.log_m)


def _quad(f: Callable[[float], float], a: float, b: float, tol: float) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(f, a, b, epsabs=0.0, epsrel=tol, limit=QUAD_SUBDIVISIONS)
        except integrate.IntegrationWarning as exc:
            # rerun quietly to recover the achieved error for the report
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                val, err = integrate.quad(f, a, b, epsabs=0.0, epsrel=tol, limit=QUAD_SUBDIVISIONS)
            raise QuadratureError(f"quadrature on [{a}, {b}] did not converge: {str(exc).splitlines()[0].strip()}",
                                  abs(err) / max(abs(val), 1e-300)) from None
    if abs(err) > tol * abs(val) * 10:
        raise QuadratureError(f"quadrature on [{a}, {b}] missed its tolerance",
                              abs(err) / max(abs(val), 1e-300))
    return val


def _density_log(lam_log: float, mu_log: float, p: float) -> float:
    return (p * lam_log - mu_log) / (p - 1)


def _pair_level_coefficient(lam, mu, K: int, p: float, n: int, lo: float, hi: float,
                            quad_tol: float) -> tuple[float, float]:
    """Log resistance and log mass of the piece ``(lo, hi]`` of level ``n``."""
    if _level_constant_at(lam, n) and _level_constant_at(mu, n):
        ll, ml = lam.level_log(n, K), mu.level_log(n, K)
        width = math.log(hi - lo)
        return _density_log(ll, ml, p) + width, ml + width

    def density(t):
        return (profile_value(lam, t, K) ** p / profile_value(mu, t, K)) ** (1.0 / (p - 1))

    r = _quad(density, lo, hi, quad_tol)
    m = _quad(lambda t: profile_value(mu, t, K), lo, hi, quad_tol)
    return math.log(r), math.log(m)


def profile_integral(profile: RadialProfile, K: int, lo: float, hi: float,
                     quad_tol: float = DEFAULT_QUAD_TOL) -> float:
    """``int_lo^hi profile(t) dt``, summed level by level."""
    if not 0 <= lo <= hi:
        raise ValueError(f"need 0 <= lo <= hi, got [{lo}, {hi}]")
    pieces = []
    for n in range(max(level_index(lo), 1), level_index(hi) + 1):
        a, b = max(lo, n - 1.0), min(hi, float(n))
        if b <= a:
            continue
        if _level_constant_at(profile, n):
            pieces.append(math.exp(profile.level_log(n, K)) * (b - a))
        else:
            pieces.append(_quad(lambda t: profile_value(profile, t, K), a, b, quad_tol))
    return math.fsum(pieces)


def edge_coefficients(config: WeightConfig, edge: VertexId,
                      quad_tol: float = DEFAULT_QUAD_TOL) -> EdgeCoefficient:
    """Coefficients of the edge whose child endpoint is ``edge``."""
    edge = VertexId(*edge)
    if edge.level < 1:
        raise ValueError("the root is not an edge")
    if quad_tol <= 0:
        raise ValueError("quad_tol must be positive")
    lam, mu = config.pair_for(edge)
    n = edge.level
    return EdgeCoefficient(*_pair_level_coefficient(lam, mu, config.K, config.p, n, n - 1, n, quad_tol))


@dataclass(frozen=True, eq=False)
class EdgeCoefficients:
    """Coefficients of every edge of a truncation; entry ``e`` belongs to flat vertex ``e + 1``."""

    topology: TreeTopology
    p: float
    log_r: np.ndarray = field(repr=False)
    log_m: np.ndarray = field(repr=False)

    def __post_init__(self):
        n = self.topology.n_edges
        if self.log_r.shape != (n,) or self.log_m.shape != (n,):
            raise ValueError("coefficient arrays do not match the topology")

    @property
    def resistance(self) -> np.ndarray:
        return np.exp(self.log_r)

    @property
    def mass(self) -> np.ndarray:
        return np.exp(self.log_m)

    @property
    def conductance(self) -> np.ndarray:
        """``r**(1-p)``: the factor multiplying ``|du|**p`` in an edge's energy."""
        return np.exp((1.0 - self.p) * self.log_r)

    def __getitem__(self, v: VertexId) -> EdgeCoefficient:
        e = self.topology.flat(VertexId(*v)) - 1
        if e < 0:
            raise KeyError("the root is not an edge")
        return EdgeCoefficient(float(self.log_r[e]), float(self.log_m[e]))

    @classmethod
    def uniform(cls, topology: TreeTopology, p: float, resistance: float = 1.0,
                mass: float = 1.0) -> EdgeCoefficients:
        n = topology.n_edges
        return cls(topology, p, np.full(n, math.log(resistance)), np.full(n, math.log(mass)))

    @classmethod
    def from_level_resistances(cls, topology: TreeTopology, p: float, resistances,
                               masses=None) -> EdgeCoefficients:
        """Radial coefficients from per-level values (index 0 is level 1)."""
        r = np.asarray(resistances, dtype=float)
        m = np.ones_like(r) if masses is None else np.asarray(masses, dtype=float)
        lv = topology.levels[1:] - 1
        return cls(topology, p, np.log(r)[lv], np.log(m)[lv])


def network_coefficients(config: WeightConfig, topology: TreeTopology,
                         quad_tol: float = DEFAULT_QUAD_TOL) -> EdgeCoefficients:
    """Coefficients for every edge of ``topology`` under ``config``.

    Edges sharing a level and a weight pair share one computation, so
    radial configs give bit-identical values across a level.
    """
    if topology.branching != config.K:
        raise ValueError(f"topology has K={topology.branching}, config has K={config.K}")
    ne = topology.n_edges
    log_r = np.empty(ne)
    log_m = np.empty(ne)
    levels = topology.levels[1:]
    pairs = [(config.lam, config.mu, None)] + [(o.lam, o.mu, o.anchor) for o in config.overrides]
    owner = np.zeros(ne, dtype=np.int64)
    for k, o in enumerate(config.overrides, start=1):
        a = o.anchor
        if a.level > topology.depth:
            continue
        idx = topology.indices[1:]
        inside = (levels >= a.level) & (idx // config.K ** np.maximum(levels - a.level, 0) == a.index)
        owner[inside] = k
    for k, (lam, mu, _) in enumerate(pairs):
        sel_k = owner == k
        if not sel_k.any():
            continue
        for n in np.unique(levels[sel_k]):
            lr, lm = _pair_level_coefficient(lam, mu, config.K, config.p, int(n), n - 1.0, float(n), quad_tol)
            sel = sel_k & (levels == n)
            log_r[sel] = lr
            log_m[sel] = lm
    return EdgeCoefficients(topology, config.p, log_r, log_m)


# ---------------------------------------------------------------------------
# R_p


@dataclass(frozen=True)
class Finite:
    value: float
    kind: Literal["finite"] = field(default="finite", init=False, repr=False)

    def scaled(self, c: float) -> Finite:
        return Finite(self.value * c)

    def __str__(self):
        return f"Finite {float(f'{self.value:.15g}')!r}"


@dataclass(frozen=True)
class Infinite:
    reason: str
    rate: float | None = None
    kind: Literal["infinite"] = field(default="infinite", init=False, repr=False)

    def scaled(self, c: float) -> Infinite:
        return self

    def __str__(self):
        return f"Infinite ({self.reason})"


@dataclass(frozen=True)
class Undetermined:
    partial: float
    horizon: int
    kind: Literal["undetermined"] = field(default="undetermined", init=False, repr=False)

    def scaled(self, c: float) -> Undetermined:
        return Undetermined(self.partial * c, self.horizon)

    def __str__(self):
        return f"Undetermined, partial={self.partial:.12g}, horizon={self.horizon}"


RpValue = Union[Finite, Infinite, Undetermined]


@dataclass(frozen=True)
class RadialIntegrand:
    """The R_p integrand of one radial weight pair."""

    lam: RadialProfile
    mu: RadialProfile
    K: int
    p: float
    quad_tol: float = DEFAULT_QUAD_TOL

    @classmethod
    def of(cls, config: WeightConfig, quad_tol: float = DEFAULT_QUAD_TOL) -> RadialIntegrand:
        if not config.radial:
            raise NonRadialError(
                "R_p is defined for a radial weight pair; use rp_subtree for configs with overrides"
            )
        return cls(config.lam, config.mu, config.K, config.p, quad_tol)

    def level_log(self, n: int) -> float:
        """Log of the integrand on level ``n`` (only for level-constant pieces)."""
        return (_density_log(self.lam.level_log(n, self.K), self.mu.level_log(n, self.K), self.p)
                + n * math.log(self.K) / (1 - self.p))

    def _piece(self, n: int, lo: float, hi: float) -> float:
        lr, _ = _pair_level_coefficient(self.lam, self.mu, self.K, self.p, n, lo, hi, self.quad_tol)
        return math.exp(lr + n * math.log(self.K) / (1 - self.p))

    def integral(self, lo: float, hi: float) -> float:
        """Integral of the integrand over ``[lo, hi]``."""
        if not 0 <= lo < hi or not math.isfinite(hi):
            raise ValueError(f"need 0 <= lo < hi < inf, got [{lo}, {hi}]")
        pieces = []
        for n in range(max(level_index(lo), 1), level_index(hi) + 1):
            a, b = max(lo, n - 1.0), min(hi, float(n))
            if b > a:
                pieces.append(self._piece(n, a, b))
        return math.fsum(pieces)

    def tail_start(self) -> int | None:
        heads = [_head(self.lam), _head(self.mu)]
        if any(h is None for h in heads):
            return None
        return max(heads)

    def rate(self) -> tuple[float, float, float]:
        """``(alpha, gamma, scale)`` with integrand ``exp(alpha + gamma n)`` beyond the head."""
        al, bl = _affine(self.lam, self.K)
        am, bm = _affine(self.mu, self.K)
        logK = math.log(self.K)
        alpha = (self.p * al - am) / (self.p - 1)
        gamma = (self.p * bl - bm - logK) / (self.p - 1)
        scale = (abs(self.p * bl) + abs(bm) + logK) / (self.p - 1)
        return alpha, gamma, scale

    def tail(self, lo: float = 0.0) -> RpValue:
        """Integral from ``lo`` to infinity, decided symbolically."""
        head = self.tail_start()
        if head is None:
            horizon = max(_numeric_horizon(self.lam), _numeric_horizon(self.mu), math.ceil(lo) + 1)
            return Undetermined(self.integral(lo, horizon), horizon)
        alpha, gamma, scale = self.rate()
        if gamma >= -RATE_TOL * max(1.0, scale):
            shown = 0.0 if abs(gamma) <= RATE_TOL * max(1.0, scale) else gamma
            return Infinite(f"non-summable rate {shown:g}", rate=shown)
        start = max(head, math.ceil(lo))
        total = self.integral(lo, start) if start > lo else 0.0
        geometric = math.exp(alpha + gamma * (start + 1)) / -math.expm1(gamma)
        return Finite(total + geometric)


def _numeric_horizon(profile: RadialProfile) -> int:
    if isinstance(profile, NumericSampled) and profile.tail is None:
        return profile.horizon
    return 0


def rp_truncated(config: WeightConfig, n_lo: float, n_hi: float,
                 quad_tol: float = DEFAULT_QUAD_TOL) -> float:
    """R_p integral restricted to ``[n_lo, n_hi]``."""
    return RadialIntegrand.of(config, quad_tol).integral(n_lo, n_hi)


def rp_classify(config: WeightConfig, quad_tol: float = DEFAULT_QUAD_TOL) -> RpValue:
    return RadialIntegrand.of(config, quad_tol).tail(0.0)


def branch_pair(config: WeightConfig, c: int) -> tuple[RadialProfile, RadialProfile]:
    """Weight pair of root branch ``c`` (the root's child ``(1, c)`` and below).

    Raises when overrides anchored below level 1 make the branch non-radial.
    """
    K = config.K
    own = None
    for o in config.overrides:
        a = o.anchor
        if a.index // K ** (a.level - 1) != c:
            continue
        if a.level > 1:
            raise ConfigError(
                f"branch {c} carries an override anchored at {tuple(a)}; its weights are mixed",
                field="overrides",
            )
        own = o
    return (own.lam, own.mu) if own is not None else (config.lam, config.mu)


def rp_subtree(config: WeightConfig, which: Literal["T1", "complement"],
               quad_tol: float = DEFAULT_QUAD_TOL) -> RpValue:
    """R_p of T_1 (``R_p / K``) or of its complement (``(K-1)/K * R_p``) under the subtree's weights."""
    K = config.K
    if K < 2:
        raise ConfigError("subtree split needs K >= 2", field="K")
    if which == "T1":
        lam, mu = branch_pair(config, 0)
        frac = 1.0 / K
    elif which == "complement":
        pairs = {branch_pair(config, c) for c in range(1, K)}
        if len(pairs) > 1:
            raise ConfigError("complement branches carry different weights", field="overrides")
        lam, mu = pairs.pop()
        frac = (K - 1) / K
    else:
        raise ValueError(f"which must be 'T1' or 'complement', got {which!r}")
    value = RadialIntegrand(lam, mu, K, config.p, quad_tol).tail(0.0)
    return value.scaled(frac)
