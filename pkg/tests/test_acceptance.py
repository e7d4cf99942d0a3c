"""Acceptance criteria, one test each.

Every test records a PASS/FAIL line; the lines are printed together at
the end of the run (see conftest.py) and by ``python tests/test_acceptance.py``.
Reference values come from the independent oracles in ``oracles.py`` or
from closed forms written out here, never from the package itself.
"""

import math
import time
from fractions import Fraction

import numpy as np
import pytest

from oracles import dense_linear_solve, radial_potential, series_parallel_resistance
from regtree.capacity import capacity_exhaustion, limit_harmonic, pair_capacity
from regtree.classifier import classify, exp_family
from regtree.solver import DirichletProblem, caccioppoli_check, solve_dirichlet
from regtree.tree import build_truncation
from regtree.weights import (
    Constant,
    ExpLevel,
    Infinite,
    Override,
    PerLevelTable,
    PowLevelOfK,
    WeightConfig,
    network_coefficients,
)

RESULTS: dict[int, str] = {}

UNIT = WeightConfig(2, 2.0, Constant(1), Constant(1))
HALVING = WeightConfig(2, 2.0, Constant(1), PowLevelOfK(-1))
SPLIT = WeightConfig(2, 2.0, Constant(1), Constant(1),
                     (Override((1, 1), Constant(1), PowLevelOfK(-1)),))


def record(k: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}"
    RESULTS[k] = line
    print(line)
    assert ok, line


def test_criterion_1_unit_capacities():
    start = time.perf_counter()
    curve = capacity_exhaustion(UNIT, 0, list(range(1, 13)), lumped=False)
    elapsed = time.perf_counter() - start
    exact = [1.0 / (1.0 - 2.0**-m) for m in range(1, 13)]
    err = max(abs(a - b) for a, b in zip(curve.values, exact))
    limit = capacity_exhaustion(UNIT, 0).limit
    ok = err <= 1e-8 and abs(limit - 1.0) <= 1e-6 and elapsed < 1.0
    record(1, ok, f"max error {err:.2e} over m=1..12, limit {limit!r}, {elapsed:.3f} s")


def test_criterion_2_halving_mass():
    start = time.perf_counter()
    curve = capacity_exhaustion(HALVING, 0, list(range(1, 13)), lumped=False)
    result = classify(HALVING)
    elapsed = time.perf_counter() - start
    for m in range(1, 13):
        # each level of the network carries total resistance 1
        assert series_parallel_resistance(2, lambda k: 2**k, 0, m) == m
    err = max(abs(v - 1.0 / m) for m, v in zip(range(1, 13), curve.values))
    ok = (err <= 1e-8 and result.verdict == "parabolic" and isinstance(result.rp, Infinite)
          and curve.verdict == "vanishing" and elapsed < 1.0)
    record(2, ok, f"max error {err:.2e}, verdict {result.verdict}, R_p {result.rp}, {elapsed:.3f} s")


def test_criterion_3_phase_grid():
    total = bad = boundary = boundary_bad = 0
    for K in (2, 3):
        for p in (1.5, 2.0, 3.0):
            for eps in (0.05, 0.1, 0.25, 0.5, 1.0):
                line = math.log(K) + eps * p
                for delta in (-0.5, -0.1, -1e-3, 0.0, 1e-3, 0.1, 0.5):
                    beta = line + delta
                    expected = "hyperbolic" if beta < line else "parabolic"
                    got = classify(exp_family(K, p, eps, beta)).verdict
                    total += 1
                    bad += got != expected
                    if delta == 0.0:
                        boundary += 1
                        boundary_bad += got != "parabolic"
    ok = bad == 0 and boundary_bad == 0
    record(3, ok, f"{total - bad}/{total} grid points agree, {boundary - boundary_bad}/{boundary} "
                  "equality points parabolic")


def test_criterion_4_split_branches():
    result = classify(SPLIT)
    # T_1 branch alone: one unit edge, then a binary tree with level resistances 1/2, 1/4, ...
    branch_resistance = 1 + sum(Fraction(1, 2**k) for k in range(1, 60))
    branch_limit = float(1 / branch_resistance)
    curve = capacity_exhaustion(SPLIT, 0, list(range(1, 21)))
    explicit = capacity_exhaustion(SPLIT, 0, list(range(1, 11)), lumped=False)
    consistent = np.allclose(curve.values[:10], explicit.values, rtol=1e-9)
    worst = min(curve.values)
    ok = (isinstance(result.rp, Infinite) and result.verdict == "hyperbolic"
          and worst >= 0.9 * branch_limit and consistent)
    record(4, ok, f"total R_p {result.rp}, verdict {result.verdict}, min capacity {worst:.6f} "
                  f">= 0.9 * {branch_limit:.6f} up to horizon 20")


def test_criterion_5_linear_oracle():
    rng = np.random.default_rng(20240601)
    worst, trees = 0.0, 0
    for _ in range(240):
        K = int(rng.integers(1, 4))
        depth = int(rng.integers(1, 6))
        cfg = WeightConfig(K, 2.0, PerLevelTable(rng.uniform(0.2, 3.0, depth)),
                           PerLevelTable(rng.uniform(0.2, 3.0, depth)))
        topo = build_truncation(K, depth)
        coef = network_coefficients(cfg, topo)
        b = rng.random(topo.n_vertices) < 0.4
        b[0] = True
        vals = rng.uniform(-1, 1, topo.n_vertices)
        field = solve_dirichlet(DirichletProblem(coef, b, vals))
        # level-k edge conductance for p = 2 is mu_k / lambda_k**2
        cond = {(n, i): cfg.mu.values[n - 1] / cfg.lam.values[n - 1] ** 2
                for n in range(1, depth + 1) for i in range(K**n)}
        bd = {tuple(topo.vertex(f)): float(vals[f]) for f in np.flatnonzero(b)}
        exact = dense_linear_solve(K, depth, cond, bd)
        worst = max(worst, max(abs(field[v] - x) for v, x in exact.items()))
        trees += 1
    record(5, trees >= 200 and worst <= 1e-9, f"{trees} random trees, max vertex error {worst:.2e}")


def test_criterion_6_radial_closed_form():
    depth = 8
    worst = 0.0
    cases = 0
    for p in (1.5, 3.0):
        for K, eps, beta in ((2, 0.0, 0.0), (2, 0.1, 0.5), (3, 0.2, 0.3), (2, 0.05, 1.2)):
            cfg = WeightConfig(K, p, ExpLevel(eps), ExpLevel(beta))
            topo = build_truncation(K, depth)
            problem = DirichletProblem(network_coefficients(cfg, topo),
                                       (topo.levels == 0) | (topo.levels == depth),
                                       (topo.levels == 0).astype(float))
            u = solve_dirichlet(problem).values
            closed = radial_potential(lambda k: math.exp(k * (beta - eps * p) / (p - 1)), K, p, depth)
            worst = max(worst, float(np.max(np.abs(u - np.asarray(closed)[topo.levels]))))
            cases += 1
    record(6, worst <= 1e-6, f"{cases} depth-8 radial solves, max deviation {worst:.2e}")


def _random_config(rng, K=None):
    K = K or int(rng.integers(1, 4))
    p = float(rng.choice([1.5, 2.0, 2.5, 3.0]))
    n = int(rng.integers(1, 6))
    return WeightConfig(K, p, PerLevelTable(rng.uniform(0.3, 3.0, n)), PerLevelTable(rng.uniform(0.3, 3.0, n)))


def test_criterion_7_property_suites():
    rng = np.random.default_rng(7)
    count = 50
    violations = {"maximum": 0, "comparison": 0, "edge": 0, "caccioppoli": 0, "pair": 0}
    for _ in range(count):
        cfg = _random_config(rng)
        depth = {1: 8, 2: 5, 3: 4}[cfg.K]
        topo = build_truncation(cfg.K, depth)
        coef = network_coefficients(cfg, topo)

        b = rng.random(topo.n_vertices) < 0.35
        b[0] = True
        problem = DirichletProblem(coef, b, rng.uniform(-1, 1, topo.n_vertices))
        u = solve_dirichlet(problem).values
        bv = problem.boundary_values[b]
        violations["maximum"] += bool(u.max() > bv.max() + 1e-12 or u.min() < bv.min() - 1e-12)

        bump = np.where(b, rng.uniform(0, 0.5, topo.n_vertices), 0.0)
        hi = solve_dirichlet(problem.with_boundary_values(problem.boundary_values + bump)).values
        violations["comparison"] += bool(np.any(u > hi + 1e-9))

        radial = DirichletProblem(coef, (topo.levels == 0) | (topo.levels == depth),
                                  (topo.levels == 0).astype(float))
        w = solve_dirichlet(radial).values
        violations["edge"] += bool(np.any(w[1:] > w[topo.parents] + 1e-12))

        phi = rng.random(topo.n_vertices) * (topo.levels < depth)
        phi[0] = 0.0
        _, _, holds = caccioppoli_check(1.0 + w, phi, radial, tol=1e-8)
        violations["caccioppoli"] += not holds

    for _ in range(count):
        cfg = _random_config(rng, K=int(rng.integers(2, 4)))
        ns = range(1, 7) if cfg.K == 2 else range(1, 6)
        results = [pair_capacity(cfg, n) for n in ns]
        values = [r.value for r in results]
        monotone = all(b <= a * (1 + 1e-9) for a, b in zip(values, values[1:]))
        inside = all(r.lower_certified and r.within_bounds for r in results)
        violations["pair"] += not (monotone and inside)

    total = sum(violations.values())
    record(7, total == 0, f"{count} instances per suite, violations {violations}")


def test_criterion_8_limit_harmonic():
    field, diag = limit_harmonic(UNIT, 10, 3)
    v = field.values
    spread = float(v.max() - v.min())
    energy = diag.energies[-1]
    ok = (diag.ns == tuple(range(3, 11)) and diag.deltas_decreasing
          and v.min() >= 0.0 and v.max() <= 1.0 and spread > 1e-3
          and field.residual < 1e-8 and 0 < energy < math.inf)
    deltas = ", ".join(f"{d:.2e}" for d in diag.sup_deltas)
    record(8, ok, f"sup-differences {deltas}; range [{v.min():.4f}, {v.max():.4f}], "
                  f"residual {field.residual:.1e}, energy {energy:.6f}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
