"""Reference computations that share no code with the package.

Trees are rebuilt here from scratch as explicit adjacency lists, so a bug
in the package's flat layout cannot hide in both sides of a comparison.
"""

from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np
from scipy.optimize import minimize


def tree_edges(K: int, depth: int) -> tuple[list[tuple[int, int]], list[tuple[int, int]]]:
    """``(vertices, edges)``: vertices as (level, index), edges as (parent_pos, child_pos)."""
    vertices = [(n, i) for n in range(depth + 1) for i in range(K**n)]
    pos = {v: k for k, v in enumerate(vertices)}
    edges = [(pos[(n - 1, i // K)], pos[(n, i)]) for (n, i) in vertices if n > 0]
    return vertices, edges


def dense_linear_solve(K: int, depth: int, conductance: dict, boundary: dict) -> dict:
    """p = 2 solution by a dense Laplacian solve.

    ``conductance`` maps each child vertex ``(level, index)`` to the
    conductance of its incoming edge; ``boundary`` maps vertices to values.
    """
    vertices, edges = tree_edges(K, depth)
    N = len(vertices)
    L = np.zeros((N, N))
    for a, b in edges:
        c = conductance[vertices[b]]
        L[a, a] += c
        L[b, b] += c
        L[a, b] -= c
        L[b, a] -= c
    fixed = np.array([v in boundary for v in vertices])
    u = np.array([boundary.get(v, 0.0) for v in vertices], dtype=float)
    free = ~fixed
    if free.any():
        u[free] = np.linalg.solve(L[np.ix_(free, free)], -L[np.ix_(free, fixed)] @ u[fixed])
    return dict(zip(vertices, u))


def fraction_solve(A: list[list[Fraction]], b: list[Fraction]) -> list[Fraction]:
    """Exact Gaussian elimination."""
    n = len(b)
    M = [row[:] + [b[i]] for i, row in enumerate(A)]
    for col in range(n):
        piv = next(r for r in range(col, n) if M[r][col] != 0)
        M[col], M[piv] = M[piv], M[col]
        for r in range(n):
            if r != col and M[r][col] != 0:
                f = M[r][col] / M[col][col]
                M[r] = [x - f * y for x, y in zip(M[r], M[col])]
    return [M[i][n] / M[i][i] for i in range(n)]


def fraction_network(K: int, depth: int, resistance, boundary: dict) -> tuple[dict, Fraction]:
    """Exact p = 2 solution and energy; ``resistance(level)`` gives a Fraction per edge level."""
    vertices, edges = tree_edges(K, depth)
    free = [k for k, v in enumerate(vertices) if v not in boundary]
    idx = {k: j for j, k in enumerate(free)}
    val = {k: Fraction(boundary[v]) for k, v in enumerate(vertices) if v in boundary}
    A = [[Fraction(0)] * len(free) for _ in free]
    b = [Fraction(0)] * len(free)
    for a, c in edges:
        g = 1 / Fraction(resistance(vertices[c][0]))
        for x, y in ((a, c), (c, a)):
            if x in idx:
                A[idx[x]][idx[x]] += g
                if y in idx:
                    A[idx[x]][idx[y]] -= g
                else:
                    b[idx[x]] += g * val[y]
    sol = fraction_solve(A, b) if free else []
    for k, x in zip(free, sol):
        val[k] = x
    energy = sum((val[a] - val[c]) ** 2 / Fraction(resistance(vertices[c][0])) for a, c in edges)
    return {vertices[k]: x for k, x in val.items()}, energy


def series_parallel_resistance(K: int, level_resistance, n: int, m: int) -> Fraction:
    """Root-ball to level-m resistance of a radial K-ary tree, by series/parallel reduction.

    Level k holds K**k identical edges; with X^n shorted they act in
    parallel per level, and levels add in series.
    """
    return sum((Fraction(level_resistance(k)) / K**k for k in range(n + 1, m + 1)), Fraction(0))


def p_energy(values, edges, conductance, p):
    return sum(c * abs(values[a] - values[b]) ** p for (a, b), c in zip(edges, conductance))


def brute_force_minimum(K: int, depth: int, conductance: dict, boundary: dict, p: float,
                        grid: int = 21) -> float:
    """Least p-energy over the free vertices: coarse grid search, then Nelder-Mead polish.

    Only for problems with at most three free vertices.
    """
    vertices, edges = tree_edges(K, depth)
    free = [k for k, v in enumerate(vertices) if v not in boundary]
    if len(free) > 3:
        raise ValueError("brute force is limited to three free vertices")
    base = np.array([boundary.get(v, 0.0) for v in vertices], dtype=float)
    cond = [conductance[vertices[b]] for _, b in edges]
    lo, hi = min(boundary.values()), max(boundary.values())

    def energy(x):
        u = base.copy()
        u[free] = x
        return p_energy(u, edges, cond, p)

    if not free:
        return energy(np.array([]))
    axis = np.linspace(lo, hi, grid)
    start = min(itertools.product(axis, repeat=len(free)), key=lambda x: energy(np.array(x)))
    res = minimize(energy, np.array(start), method="Nelder-Mead",
                   options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 20000, "maxfev": 40000})
    return float(min(res.fun, energy(np.array(start))))


def radial_potential(level_resistance, K: int, p: float, m: int) -> list[float]:
    """Values per level of the radial root-to-leaves potential (root 1, level m 0).

    Flux conservation through the K**k edges of level k gives a per-level
    drop proportional to ``(r_k**(p-1) / K**k)**(1/(p-1))``.
    """
    drops = [(level_resistance(k) ** (p - 1) / K**k) ** (1.0 / (p - 1)) for k in range(1, m + 1)]
    total = sum(drops)
    out, acc = [1.0], 0.0
    for d in drops:
        acc += d
        out.append(1.0 - acc / total)
    return out
