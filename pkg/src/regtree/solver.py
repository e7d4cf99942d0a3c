"""p-harmonic Dirichlet problems on weighted truncations.

The discrete p-energy of vertex values ``u`` is

    E(u) = sum_e |u(child) - u(parent)|**p / r_e**(p-1),

which is exactly the continuum energy of the function that is affine in
cumulative resistance along each edge.  Minimising over the free
vertices is a strictly convex problem; its Euler-Lagrange equations are
the p-flux balances

    sum_{w ~ v} c_e * |u_w - u_v|**(p-2) * (u_w - u_v) = 0,   c_e = r_e**(1-p).

Three methods are offered.  ``newton`` (default) takes damped Newton
steps on E, with the tree Laplacian of the second variation solved
sparsely.  ``gauss-seidel`` sweeps level by level, solving each
vertex's scalar flux balance by bisection; vertices of one level are
never adjacent, so updating a level at once equals the sequential
level-major, index-minor order.  ``jacobi`` updates all free vertices
from the previous iterate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Mapping

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .errors import ConvergenceError, PreconditionError
from .tree import TreeTopology, VertexId
from .weights import EdgeCoefficients

Method = Literal["newton", "gauss-seidel", "jacobi"]

DEFAULT_TOL = 1e-10
_DEFAULT_MAX = {"newton": 200, "gauss-seidel": 50_000, "jacobi": 200_000}
_BISECT_STEPS = 200
_FALLBACK_SWEEPS = 200
_FLOOR_FACTOR = 4.0
_EPS = float(np.finfo(float).eps)
_BISECT_WIDTH = 1e-14


def _phi(x: np.ndarray, p: float) -> np.ndarray:
    return np.sign(x) * np.abs(x) ** (p - 1)


@dataclass(frozen=True, eq=False)
class DirichletProblem:
    """Prescribed values on ``boundary``; every other vertex is free."""

    coefficients: EdgeCoefficients
    boundary: np.ndarray = field(repr=False)
    boundary_values: np.ndarray = field(repr=False)

    def __post_init__(self):
        n = self.topology.n_vertices
        b = np.asarray(self.boundary, dtype=bool)
        vals = np.asarray(self.boundary_values, dtype=float)
        if b.shape != (n,) or vals.shape != (n,):
            raise ValueError("boundary arrays must have one entry per vertex")
        if not b.any():
            raise PreconditionError("the boundary set must be nonempty")
        if not np.all(np.isfinite(vals[b])):
            raise PreconditionError("boundary values must be finite")
        vals = np.where(b, vals, 0.0)
        object.__setattr__(self, "boundary", b)
        object.__setattr__(self, "boundary_values", vals)

    @classmethod
    def from_mapping(cls, coefficients: EdgeCoefficients,
                     values: Mapping[VertexId, float]) -> DirichletProblem:
        topo = coefficients.topology
        b = np.zeros(topo.n_vertices, dtype=bool)
        vals = np.zeros(topo.n_vertices)
        for v, x in values.items():
            f = topo.flat(VertexId(*v))
            b[f] = True
            vals[f] = x
        return cls(coefficients, b, vals)

    @property
    def topology(self) -> TreeTopology:
        return self.coefficients.topology

    @property
    def p(self) -> float:
        return self.coefficients.p

    @property
    def free(self) -> np.ndarray:
        return ~self.boundary

    def with_boundary_values(self, values: np.ndarray) -> DirichletProblem:
        return DirichletProblem(self.coefficients, self.boundary, values)


def energy(values: np.ndarray, coefficients: EdgeCoefficients,
           edges: np.ndarray | None = None) -> float:
    """p-energy of ``values``, optionally restricted to a boolean edge mask."""
    topo = coefficients.topology
    du = values[1:] - values[topo.parents]
    terms = coefficients.conductance * np.abs(du) ** coefficients.p
    if edges is not None:
        terms = terms[edges]
    return math.fsum(terms)


def _imbalance(values: np.ndarray, topo: TreeTopology, cond: np.ndarray, p: float) -> np.ndarray:
    """Net p-flux towards each vertex: ``sum_w c (u_w - u_v)^{p-1}``."""
    du = values[1:] - values[topo.parents]
    f = cond * _phi(du, p)
    out = np.bincount(topo.parents, weights=f, minlength=topo.n_vertices)
    out[1:] -= f
    return out


@dataclass(frozen=True)
class FluxResidual:
    """p-flux imbalance at every vertex; only free entries must vanish."""

    values: np.ndarray = field(repr=False)
    free: np.ndarray = field(repr=False)

    @property
    def max_abs(self) -> float:
        r = self.values[self.free]
        return float(np.max(np.abs(r))) if r.size else 0.0

    def at(self, topology: TreeTopology, v: VertexId) -> float:
        return float(self.values[topology.flat(VertexId(*v))])

    def superharmonic(self, tol: float = 0.0) -> bool:
        """Nonnegative perturbations cannot lower the energy iff no free vertex has net inflow."""
        return bool(np.all(self.values[self.free] <= tol))


@dataclass(frozen=True, eq=False)
class PotentialField:
    problem: DirichletProblem
    values: np.ndarray = field(repr=False)
    energy: float
    residual: float
    iterations: int = 0
    floor: float = 0.0

    @property
    def attained(self) -> float:
        """Residual accepted as converged when ``tol`` is below what doubles can resolve."""
        return _FLOOR_FACTOR * self.floor

    @classmethod
    def evaluate(cls, problem: DirichletProblem, values, iterations: int = 0) -> PotentialField:
        values = np.asarray(values, dtype=float)
        if values.shape != (problem.topology.n_vertices,):
            raise ValueError("field size does not match the topology")
        res = flux_residual(values, problem)
        return cls(problem, values, energy(values, problem.coefficients), res.max_abs, iterations,
                   rounding_floor(values, problem))

    def __getitem__(self, v: VertexId) -> float:
        return float(self.values[self.problem.topology.flat(VertexId(*v))])

    def edge_value(self, child: VertexId, s: float) -> float:
        """Value inside the edge above ``child`` at fraction ``s`` of its resistance.

        The least-energy profile along an edge is affine in cumulative
        resistance, so this is a straight interpolation in ``s``.
        """
        if not 0.0 <= s <= 1.0:
            raise ValueError("s must lie in [0, 1]")
        topo = self.problem.topology
        c = topo.flat(VertexId(*child))
        if c == 0:
            raise ValueError("the root has no incoming edge")
        a = self.values[topo.parents[c - 1]]
        return float(a + s * (self.values[c] - a))

    def level_values(self, level: int) -> np.ndarray:
        topo = self.problem.topology
        return self.values[topo.offset(level):topo.offset(level + 1)]

    def rows(self):
        topo = self.problem.topology
        for f in range(topo.n_vertices):
            yield int(topo.levels[f]), int(topo.indices[f]), float(self.values[f])


def rounding_floor(values: np.ndarray, problem: DirichletProblem) -> float:
    """Smallest flux residual that double-precision vertex values can resolve.

    Moving a vertex by one unit in the last place changes its balance by
    about ``sum_e c_e (p-1) |du_e|**(p-2) * ulp``.  For p < 2 and nearly
    equal neighbours this is large, and no solver can go below it.
    """
    topo = problem.topology
    coef = problem.coefficients
    p = coef.p
    ulp = np.spacing(np.abs(values))
    du = np.abs(values[1:] - values[topo.parents])
    step = np.maximum(ulp[1:], ulp[topo.parents])
    moving = du > 0
    slope = np.where(moving, coef.conductance * (p - 1) * np.maximum(du, step) ** (p - 2) * step, 0.0)
    flux = coef.conductance * du ** (p - 1)
    per = np.bincount(topo.parents, weights=slope + _EPS * flux, minlength=topo.n_vertices)
    per[1:] += slope + _EPS * flux
    free = problem.free
    return float(np.max(per[free])) if free.any() else 0.0


def flux_residual(field_or_values, problem: DirichletProblem) -> FluxResidual:
    values = getattr(field_or_values, "values", field_or_values)
    values = np.asarray(values, dtype=float)
    if values.shape != (problem.topology.n_vertices,):
        raise ValueError("field size does not match the topology")
    coef = problem.coefficients
    return FluxResidual(_imbalance(values, problem.topology, coef.conductance, coef.p), problem.free)


# ---------------------------------------------------------------------------
# Newton


@dataclass(frozen=True)
class _Reduction:
    """Free vertices that carry no flux, and how to fill them in.

    A free vertex lies on a current path only if boundary vertices sit in
    at least two of its directions (children, or the rest of the tree via
    its parent).  Otherwise it is constant, equal to the value met in its
    single boundary direction.
    """

    live: np.ndarray      # free vertices taking part in the solve
    active: np.ndarray    # edges between non-dead vertices
    up: np.ndarray        # dead, copies its parent
    down_child: np.ndarray  # dead, copies this child (flat id) or -1


def _reduce(problem: DirichletProblem) -> _Reduction:
    topo = problem.topology
    N = topo.n_vertices
    b = problem.boundary
    below = b.astype(np.int64)
    for n in range(topo.depth, 0, -1):
        lo, hi = topo.offset(n), topo.offset(n + 1)
        np.add.at(below, topo.parents[lo - 1:hi - 1], below[lo:hi])
    total = int(below[0])
    has = below > 0
    child_dirs = np.bincount(topo.parents, weights=has[1:], minlength=N).astype(np.int64)
    up_dir = (total - below) > 0
    dirs = child_dirs + up_dir
    dead = ~b & (dirs < 2)
    up = dead & up_dir
    down_child = np.full(N, -1, dtype=np.int64)
    down = dead & ~up_dir
    if down.any():
        kids = np.flatnonzero(has[1:]) + 1
        down_child[topo.parents[kids - 1]] = np.where(down[topo.parents[kids - 1]], kids, -1)
    active = ~dead[1:] & ~dead[topo.parents]
    return _Reduction(~b & ~dead, active, up, down_child)


def _fill_dead(u: np.ndarray, red: _Reduction, topo: TreeTopology) -> np.ndarray:
    u = u.copy()
    for n in range(topo.depth, -1, -1):
        lo, hi = topo.offset(n), topo.offset(n + 1)
        sel = red.down_child[lo:hi] >= 0
        if sel.any():
            u[lo:hi][sel] = u[red.down_child[lo:hi][sel]]
    for n in range(1, topo.depth + 1):
        lo, hi = topo.offset(n), topo.offset(n + 1)
        sel = red.up[lo:hi]
        if sel.any():
            u[lo:hi][sel] = u[topo.parents[lo - 1:hi - 1][sel]]
    return u


def _laplacian_solve(topo: TreeTopology, unknown: np.ndarray, w: np.ndarray,
                     rhs: np.ndarray) -> np.ndarray:
    """Solve ``L_w d = rhs`` on ``unknown`` vertices, other vertices held at zero."""
    nf = int(unknown.sum())
    pos = np.full(topo.n_vertices, -1, dtype=np.int64)
    pos[unknown] = np.arange(nf)
    pa, pb = pos[topo.parents], pos[1:]
    diag = np.bincount(pa[pa >= 0], weights=w[pa >= 0], minlength=nf) + \
        np.bincount(pb[pb >= 0], weights=w[pb >= 0], minlength=nf)
    both = (pa >= 0) & (pb >= 0)
    rows = np.concatenate([np.arange(nf), pa[both], pb[both]])
    cols = np.concatenate([np.arange(nf), pb[both], pa[both]])
    data = np.concatenate([diag, -w[both], -w[both]])
    H = sp.csc_matrix((data, (rows, cols)), shape=(nf, nf))
    return np.atleast_1d(spsolve(H, rhs[unknown]))


def _newton(problem: DirichletProblem, tol: float, max_iter: int, initial):
    """Newton iteration on the live part; returns ``(best_values, best_residual, iterations)``.

    p >= 2: primal Newton with an Armijo line search on the energy.
    p < 2: primal-dual Newton with edge fluxes as extra unknowns; the
    inverse flux law ``du = (j/c)**(1/(p-1))`` is smooth there, which
    keeps full steps well behaved.  Stalls reset the fluxes from the
    best primal iterate.
    """
    topo = problem.topology
    coef = problem.coefficients
    p = coef.p
    red = _reduce(problem)
    cond = np.where(red.active, coef.conductance, 0.0)
    live = red.live
    N = topo.n_vertices
    span = float(np.ptp(problem.boundary_values[problem.boundary])) or 1.0
    floor = 1e-9 * span

    def resid(v):
        imb = _imbalance(v, topo, cond, p)
        return imb, (float(np.max(np.abs(imb[live]))) if live.any() else 0.0)

    def done(r, v):
        return r <= tol or r <= _FLOOR_FACTOR * rounding_floor(v, problem)

    u = problem.boundary_values.copy()
    if initial is not None:
        u[live] = np.asarray(initial, dtype=float)[live]
    elif live.any():
        u[live] += _laplacian_solve(topo, live, cond, _imbalance(u, topo, cond, 2.0))
    imb, res = resid(u)
    best_res, best_u = res, u.copy()
    it = 0
    if p >= 2:
        def total(v):
            return math.fsum(cond * np.abs(v[1:] - v[topo.parents]) ** p)

        e = total(u)
        while not done(res, u) and it < max_iter:
            it += 1
            du = np.abs(u[1:] - u[topo.parents])
            d = _laplacian_solve(topo, live, cond * (p - 1) * np.maximum(du, floor) ** (p - 2), imb)
            step = np.zeros(N)
            step[live] = d
            slope = -p * float(np.dot(imb[live], d))
            t = 1.0
            while True:
                trial = u + t * step
                e_trial = total(trial)
                if e_trial <= e + 1e-4 * t * slope or t < 1e-10:
                    break
                t *= 0.5
            if e_trial > e and t < 1e-10:
                # energy differences are below rounding; keep the full step only if it helps
                trial = u + step
                if resid(trial)[1] >= res:
                    break
                e_trial = total(trial)
            u, e = trial, e_trial
            imb, res = resid(u)
            if res < best_res:
                best_res, best_u = res, u.copy()
    else:
        q = 1.0 / (p - 1)
        jfloor = floor ** (p - 1)
        j = cond * _phi(u[1:] - u[topo.parents], p)
        safe = np.where(cond > 0, cond, 1.0)
        stall = 0
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            while not done(best_res, best_u) and it < max_iter:
                it += 1
                a = np.abs(j) / safe
                G = np.sign(j) * a ** q - (u[1:] - u[topo.parents])
                W = cond * np.maximum(a, jfloor) ** (1 - q) / q
                WG = W * G
                rhs = np.bincount(topo.parents, weights=j - WG, minlength=N)
                rhs[1:] -= j - WG
                d = _laplacian_solve(topo, live, W, rhs)
                step = np.zeros(N)
                step[live] = d
                u = u + step
                j = j + W * ((step[1:] - step[topo.parents]) - G)
                imb, res = resid(u)
                if np.isfinite(res) and res < best_res:
                    best_res, best_u, stall = res, u.copy(), 0
                else:
                    stall += 1
                if stall >= 6 or not (np.all(np.isfinite(u)) and np.all(np.isfinite(j))):
                    u = best_u.copy()
                    j = cond * _phi(u[1:] - u[topo.parents], p)
                    stall = 0
    return _fill_dead(best_u, red, topo), it


def _solve_newton(problem: DirichletProblem, tol: float, max_iter: int, initial) -> PotentialField:
    u, it = _newton(problem, tol, max_iter, initial)
    field_ = PotentialField.evaluate(problem, u, it)
    if field_.residual <= max(tol, field_.attained):
        return field_
    # stalled (p close to 1); a short run of pointwise sweeps
    try:
        return _solve_sweeps(problem, tol, _FALLBACK_SWEEPS, u, "gauss-seidel", it)
    except ConvergenceError as exc:
        raise ConvergenceError("newton iteration did not reach tolerance",
                               exc.residual, exc.field) from None


# ---------------------------------------------------------------------------
# pointwise sweeps


@dataclass(frozen=True)
class _LevelStencil:
    vertices: np.ndarray      # flat ids of free vertices on the level
    parent: np.ndarray | None
    parent_c: np.ndarray | None
    children: np.ndarray | None   # (n, K)
    children_c: np.ndarray | None


def _stencils(problem: DirichletProblem) -> list[_LevelStencil]:
    topo = problem.topology
    cond = problem.coefficients.conductance
    K = topo.branching
    out = []
    for n in range(topo.depth + 1):
        lo, hi = topo.offset(n), topo.offset(n + 1)
        verts = np.arange(lo, hi)[problem.free[lo:hi]]
        if verts.size == 0:
            continue
        par = parc = ch = chc = None
        if n > 0:
            par = topo.parents[verts - 1]
            parc = cond[verts - 1]
        if n < topo.depth:
            idx = verts - lo
            ch = topo.offset(n + 1) + idx[:, None] * K + np.arange(K)[None, :]
            chc = cond[ch - 1]
        out.append(_LevelStencil(verts, par, parc, ch, chc))
    return out


def _local_solve(st: _LevelStencil, u: np.ndarray, p: float) -> np.ndarray:
    """Root of each vertex's scalar flux balance with neighbours held fixed."""
    nb, cs = [], []
    if st.parent is not None:
        nb.append(u[st.parent][:, None])
        cs.append(st.parent_c[:, None])
    if st.children is not None:
        nb.append(u[st.children])
        cs.append(st.children_c)
    nbv = np.concatenate(nb, axis=1)
    c = np.concatenate(cs, axis=1)

    def flux(x):
        return np.sum(c * _phi(nbv - x[:, None], p), axis=1)

    lo = nbv.min(axis=1)
    hi = nbv.max(axis=1)
    scale = np.maximum(np.abs(lo), np.abs(hi)) + 1.0
    for _ in range(_BISECT_STEPS):
        mid = 0.5 * (lo + hi)
        f = flux(mid)
        up = f > 0
        lo = np.where(up, mid, lo)
        hi = np.where(up, hi, mid)
        if np.all(hi - lo <= _BISECT_WIDTH * scale):
            break
    x = 0.5 * (lo + hi)
    # one Newton polish, kept only where it stays bracketed and helps
    diff = nbv - x[:, None]
    fx = flux(x)
    dfx = -(p - 1) * np.sum(c * np.abs(diff) ** (p - 2) if p >= 2 else
                            c * np.where(diff == 0, np.inf, np.abs(diff)) ** (p - 2), axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        y = x - fx / dfx
    ok = np.isfinite(y) & (y >= lo - _BISECT_WIDTH * scale) & (y <= hi + _BISECT_WIDTH * scale)
    ok &= np.abs(np.where(ok, flux(np.where(ok, y, x)), np.inf)) < np.abs(fx)
    return np.where(ok, y, x)


def _solve_sweeps(problem: DirichletProblem, tol: float, max_sweeps: int, initial,
                  method: str, start: int = 0) -> PotentialField:
    topo = problem.topology
    coef = problem.coefficients
    p = coef.p
    cond = coef.conductance
    free = problem.free
    if initial is None:
        u = problem.boundary_values.copy()
        if free.any():
            b = problem.boundary_values[problem.boundary]
            u[free] = 0.5 * (b.min() + b.max())
    else:
        u = np.where(free, initial, problem.boundary_values)
    stencils = _stencils(problem)
    res = float(np.max(np.abs(_imbalance(u, topo, cond, p)[free]))) if free.any() else 0.0
    best = (res, u.copy())
    sweeps = 0
    while res > tol and res > _FLOOR_FACTOR * rounding_floor(u, problem):
        if sweeps >= max_sweeps:
            field_ = PotentialField.evaluate(problem, best[1], start + sweeps)
            raise ConvergenceError(f"{method} exceeded {max_sweeps} sweeps", best[0], field_)
        sweeps += 1
        if method == "jacobi":
            new = u.copy()
            for st in stencils:
                new[st.vertices] = _local_solve(st, u, p)
            u = new
        else:
            for st in stencils:
                u[st.vertices] = _local_solve(st, u, p)
        res = float(np.max(np.abs(_imbalance(u, topo, cond, p)[free])))
        if res < best[0]:
            best = (res, u.copy())
    return PotentialField.evaluate(problem, u, start + sweeps)


def solve_dirichlet(problem: DirichletProblem, tol: float = DEFAULT_TOL,
                    max_sweeps: int | None = None, method: Method = "newton",
                    initial: np.ndarray | None = None) -> PotentialField:
    """Minimise the p-energy with the boundary values of ``problem`` held fixed.

    Stops once the largest free-vertex flux imbalance is ``<= tol``;
    raises :class:`ConvergenceError` (carrying the best field) when the
    iteration budget runs out first.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if method not in _DEFAULT_MAX:
        raise ValueError(f"unknown method {method!r}")
    budget = _DEFAULT_MAX[method] if max_sweeps is None else max_sweeps
    if not problem.free.any():
        return PotentialField.evaluate(problem, problem.boundary_values.copy())
    if method == "newton":
        return _solve_newton(problem, tol, budget, initial)
    return _solve_sweeps(problem, tol, budget, initial, method)


# ---------------------------------------------------------------------------
# verification helpers


def _values(x) -> np.ndarray:
    return np.asarray(getattr(x, "values", x), dtype=float)


def superharmonic_check(field_: PotentialField, problem: DirichletProblem, trial) -> bool:
    """Does adding the nonnegative bump ``trial - field`` leave the energy no smaller?

    Energies are compared on the edges touching the bump's support.
    """
    u = _values(field_)
    w = _values(trial)
    bump = w - u
    scale = max(1.0, float(np.max(np.abs(u))))
    if np.any(bump < -1e-14 * scale):
        raise PreconditionError("trial - field must be nonnegative")
    if np.any(np.abs(bump[problem.boundary]) > 1e-14 * scale):
        raise PreconditionError("trial must agree with the field on boundary vertices")
    topo = problem.topology
    support = bump > 0
    edges = support[1:] | support[topo.parents]
    if not edges.any():
        return True
    e_u = energy(u, problem.coefficients, edges)
    e_w = energy(w, problem.coefficients, edges)
    return e_u <= e_w * (1 + 1e-12) + 1e-300


def caccioppoli_check(f, phi, problem: DirichletProblem, tol: float = 1e-8
                      ) -> tuple[float, float, bool]:
    """Both sides of the weighted gradient estimate for a positive superharmonic ``f``.

    lhs = sum_e c_e |df|^p (phi_mid / f_mid)^p   (edge midpoints)
    rhs = (p/(p-1))^p * E(phi)

    ``phi`` must take values in [0, 1], vanish on the truncation leaves,
    and ``f`` must be positive with no net p-inflow on the support of ``phi``.
    """
    fv = _values(f)
    pv = _values(phi)
    topo = problem.topology
    coef = problem.coefficients
    p = coef.p
    if np.any(pv < 0) or np.any(pv > 1):
        raise PreconditionError("phi must take values in [0, 1]")
    leaves = topo.levels == topo.depth
    if np.any(pv[leaves] != 0):
        raise PreconditionError("phi must vanish on the outermost level (compact support)")
    support = pv > 0
    edges = support[1:] | support[topo.parents]
    touched = support.copy()
    touched[1:] |= edges
    touched[topo.parents[edges]] = True
    if np.any(fv[touched] <= 0):
        raise PreconditionError("f must be strictly positive on the support of phi")
    imb = _imbalance(fv, topo, coef.conductance, p)
    if np.any(imb[support] > tol):
        raise PreconditionError("f is not p-superharmonic on the support of phi")
    cond = coef.conductance
    df = fv[1:] - fv[topo.parents]
    f_mid = 0.5 * (fv[1:] + fv[topo.parents])
    phi_mid = 0.5 * (pv[1:] + pv[topo.parents])
    lhs = math.fsum((cond * np.abs(df) ** p * (phi_mid / f_mid) ** p)[edges])
    rhs = (p / (p - 1)) ** p * energy(pv, coef)
    return lhs, rhs, bool(lhs <= rhs * (1 + 1e-9))
