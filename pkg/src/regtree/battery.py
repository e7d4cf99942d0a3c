"""Invariant checks run against one weight config.

Each check builds small problems from the config (or random boundary
data on its networks), asserts a property the exact solution must
have, and reports PASS/FAIL with the worst deviation seen.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .capacity import (
    CondenserSpec,
    capacity_exhaustion,
    condenser_capacity,
    pair_capacity,
    radial_condenser_capacity,
)
from .solver import DEFAULT_TOL, DirichletProblem, caccioppoli_check, solve_dirichlet
from .tree import build_truncation
from .weights import EdgeCoefficients, WeightConfig, network_coefficients


@dataclass(frozen=True)
class PropertyResult:
    name: str
    passed: bool
    detail: str


def _depth(config: WeightConfig) -> int:
    return {1: 12, 2: 6, 3: 4}.get(config.K, 3)


def _random_problem(coef: EdgeCoefficients, rng: np.random.Generator) -> DirichletProblem:
    topo = coef.topology
    b = rng.random(topo.n_vertices) < 0.35
    b[0] = True
    b[topo.levels == topo.depth] |= rng.random(int(np.sum(topo.levels == topo.depth))) < 0.5
    return DirichletProblem(coef, b, rng.uniform(-1.0, 1.0, topo.n_vertices))


def _dense_p2(problem: DirichletProblem) -> np.ndarray:
    """Linear-network solution by a dense Laplacian solve."""
    topo = problem.topology
    c = np.exp(-problem.coefficients.log_r)
    N = topo.n_vertices
    L = np.zeros((N, N))
    for e in range(topo.n_edges):
        a, b = topo.parents[e], e + 1
        L[a, a] += c[e]
        L[b, b] += c[e]
        L[a, b] -= c[e]
        L[b, a] -= c[e]
    free = problem.free
    u = problem.boundary_values.copy()
    if free.any():
        rhs = -L[np.ix_(free, ~free)] @ u[~free]
        u[free] = np.linalg.solve(L[np.ix_(free, free)], rhs)
    return u


def check_closed_form(config, rng, count, tol) -> PropertyResult:
    if not config.radial:
        return PropertyResult("closed-form capacity", True, "skipped: config has overrides")
    worst = 0.0
    for m in range(1, _depth(config) + 1):
        value, _ = condenser_capacity(CondenserSpec.ball_to_level(config, 0, m), tol)
        exact = radial_condenser_capacity(config, 0, m)
        worst = max(worst, abs(value - exact) / exact)
    return PropertyResult("closed-form capacity", worst <= 1e-8, f"max relative error {worst:.3e}")


def check_linear_oracle(config, rng, count, tol) -> PropertyResult:
    topo = build_truncation(config.K, min(_depth(config), 4))
    worst = 0.0
    for _ in range(count):
        coef = EdgeCoefficients(topo, 2.0, rng.normal(0.0, 1.0, topo.n_edges), np.zeros(topo.n_edges))
        problem = _random_problem(coef, rng)
        u = solve_dirichlet(problem, tol).values
        worst = max(worst, float(np.max(np.abs(u - _dense_p2(problem)))))
    return PropertyResult("p=2 linear oracle", worst <= 1e-9, f"max vertex error {worst:.3e}")


def check_maximum_principle(config, rng, count, tol) -> PropertyResult:
    coef = network_coefficients(config, build_truncation(config.K, _depth(config)))
    worst = 0.0
    for _ in range(count):
        problem = _random_problem(coef, rng)
        u = solve_dirichlet(problem, tol).values
        b = problem.boundary_values[problem.boundary]
        worst = max(worst, float(np.max(u - b.max())), float(np.max(b.min() - u)))
    return PropertyResult("maximum principle", worst <= 1e-12, f"max excursion {max(worst, 0.0):.3e}")


def check_comparison(config, rng, count, tol) -> PropertyResult:
    coef = network_coefficients(config, build_truncation(config.K, _depth(config)))
    worst = 0.0
    for _ in range(count):
        lo = _random_problem(coef, rng)
        bump = np.where(lo.boundary, rng.uniform(0.0, 0.5, lo.boundary.size), 0.0)
        hi = lo.with_boundary_values(lo.boundary_values + bump)
        worst = max(worst, float(np.max(solve_dirichlet(lo, tol).values - solve_dirichlet(hi, tol).values)))
    return PropertyResult("comparison principle", worst <= 1e-9, f"max violation {max(worst, 0.0):.3e}")


def check_edge_monotone(config, rng, count, tol) -> PropertyResult:
    topo = build_truncation(config.K, _depth(config))
    coef = network_coefficients(config, topo)
    problem = DirichletProblem(coef, (topo.levels == 0) | (topo.levels == topo.depth),
                               (topo.levels == 0).astype(float))
    u = solve_dirichlet(problem, tol).values
    rise = float(np.max(u[1:] - u[topo.parents]))
    return PropertyResult("edge monotonicity", rise <= 1e-12, f"max increase along an edge {max(rise, 0.0):.3e}")


def check_caccioppoli(config, rng, count, tol) -> PropertyResult:
    topo = build_truncation(config.K, _depth(config))
    coef = network_coefficients(config, topo)
    problem = DirichletProblem(coef, (topo.levels == 0) | (topo.levels == topo.depth),
                               (topo.levels == 0).astype(float))
    u = solve_dirichlet(problem, tol).values
    f = problem.with_boundary_values(np.where(problem.boundary, 1.0 + problem.boundary_values, 0.0))
    f_values = 1.0 + u
    bad = 0
    for _ in range(count):
        phi = rng.random(topo.n_vertices) * (topo.levels < topo.depth)
        phi[0] = 0.0
        _, _, holds = caccioppoli_check(f_values, phi, f, tol=1e-8)
        bad += not holds
    return PropertyResult("Caccioppoli inequality", bad == 0, f"{bad} of {count} instances violated")


def check_exhaustion_monotone(config, rng, count, tol) -> PropertyResult:
    curve = capacity_exhaustion(config, 0, list(range(1, 9)), tol)
    ok = curve.nonincreasing
    return PropertyResult("exhaustion monotonicity", ok,
                          f"values {', '.join(f'{v:.6g}' for v in curve.values)}")


def check_pair_sequence(config, rng, count, tol) -> PropertyResult:
    if config.K < 2:
        return PropertyResult("pair capacities", True, "skipped: K = 1 has no subtree split")
    results = [pair_capacity(config, n, tol) for n in range(1, 5)]
    values = [r.value for r in results]
    monotone = all(b <= a * (1 + 1e-9) for a, b in zip(values, values[1:]))
    inside = all(r.within_bounds for r in results)
    lo, hi = results[0].bounds
    return PropertyResult("pair capacities", monotone and inside,
                          f"values {', '.join(f'{v:.6g}' for v in values)} in [{lo:.6g}, {hi:.6g}]")


CHECKS: tuple[Callable, ...] = (
    check_closed_form,
    check_linear_oracle,
    check_maximum_principle,
    check_comparison,
    check_edge_monotone,
    check_caccioppoli,
    check_exhaustion_monotone,
    check_pair_sequence,
)


def run_battery(config: WeightConfig, seed: int = 0, count: int = 20,
                tol: float = DEFAULT_TOL) -> list[PropertyResult]:
    rng = np.random.default_rng(seed)
    return [check(config, rng, count, tol) for check in CHECKS]
