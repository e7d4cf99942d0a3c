from fractions import Fraction

import numpy as np
import pytest

from oracles import fraction_network, series_parallel_resistance
from regtree import capacity as capmod
from regtree.capacity import (
    CURVE_SCHEMA,
    MAX_HORIZON,
    CondenserSpec,
    capacity_exhaustion,
    condenser_capacity,
    default_horizons,
    exhaustion_network,
    limit_harmonic,
    pair_capacity,
    pair_lower_bound,
    pair_upper_bound,
    radial_condenser_capacity,
    symbolic_ball_capacity,
)
from regtree.errors import ConfigError, ConvergenceError, PreconditionError, TopologyError
from regtree.solver import solve_dirichlet
from regtree.tree import VertexSet, ball, build_truncation, level_set
from regtree.weights import Constant, ExpLevel, NumericSampled, Override, PowLevelOfK, WeightConfig

UNIT = WeightConfig(2, 2.0, Constant(1), Constant(1))
HALVING = WeightConfig(2, 2.0, Constant(1), PowLevelOfK(-1))
SPLIT = WeightConfig(2, 2.0, Constant(1), Constant(1),
                     (Override((1, 1), Constant(1), PowLevelOfK(-1)),))
UNKNOWN = WeightConfig(2, 2.0, Constant(1), NumericSampled(lambda t: 1.0 + 0.5 * np.sin(t)))


def test_radial_small_values():
    assert radial_condenser_capacity(UNIT, 0, 1) == pytest.approx(2.0)
    assert radial_condenser_capacity(UNIT, 0, 2) == pytest.approx(4 / 3)
    for m in range(1, 8):
        exact = 1 / series_parallel_resistance(2, lambda k: 1, 0, m)
        assert radial_condenser_capacity(UNIT, 0, m) == pytest.approx(float(exact), rel=1e-14)
        halving = 1 / series_parallel_resistance(2, lambda k: 2**k, 0, m)
        assert halving == Fraction(1, m)
        assert radial_condenser_capacity(HALVING, 0, m) == pytest.approx(1 / m, rel=1e-14)


def test_radial_rejects_bad_levels():
    with pytest.raises(ValueError):
        radial_condenser_capacity(UNIT, 2, 2)
    with pytest.raises(ValueError):
        CondenserSpec.ball_to_level(UNIT, -1, 2)


def test_exact_network_energy_matches():
    bd = {(0, 0): 1, **{(3, i): 0 for i in range(8)}}
    _, e = fraction_network(2, 3, lambda k: 1, bd)
    assert e == Fraction(8, 7)
    value, f = condenser_capacity(CondenserSpec.ball_to_level(UNIT, 0, 3))
    assert value == pytest.approx(8 / 7, rel=1e-14)
    assert f.residual < 1e-12


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
@pytest.mark.parametrize("K", [2, 3])
def test_condenser_matches_closed_form(K, p):
    cfg = WeightConfig(K, p, ExpLevel(0.05), ExpLevel(0.3))
    for n, m in ((0, 1), (0, 4), (1, 4), (2, 5)):
        value, _ = condenser_capacity(CondenserSpec.ball_to_level(cfg, n, m))
        assert value == pytest.approx(radial_condenser_capacity(cfg, n, m), rel=1e-9)


def test_condenser_spec_validation():
    t = build_truncation(2, 3)
    with pytest.raises(PreconditionError):
        CondenserSpec(UNIT, ball(t, 1), ball(t, 2), 3)
    with pytest.raises(PreconditionError):
        CondenserSpec(UNIT, VertexSet(t, np.zeros(t.n_vertices, bool)), level_set(t, 3), 3)
    with pytest.raises(TopologyError):
        CondenserSpec(UNIT, ball(t, 0), level_set(t, 3), 4)
    with pytest.raises(TopologyError):
        CondenserSpec(WeightConfig(3, 2.0, Constant(1), Constant(1)), ball(t, 0), level_set(t, 3), 3)


def test_no_free_vertices():
    t = build_truncation(2, 1)
    value, f = condenser_capacity(CondenserSpec(UNIT, ball(t, 0), level_set(t, 1), 1))
    assert value == pytest.approx(2.0)
    assert f.residual == 0.0


# exhaustion


def test_lumped_network_matches_full_tree():
    for cfg in (SPLIT, WeightConfig(3, 1.5, ExpLevel(0.1), ExpLevel(0.2),
                                   (Override((2, 4), Constant(2.0), ExpLevel(1.0)),))):
        for n, m in ((0, 3), (1, 4), (0, 5)):
            lumped = solve_dirichlet(exhaustion_network(cfg, n, m)).energy
            full, _ = condenser_capacity(CondenserSpec.ball_to_level(cfg, n, m))
            assert lumped == pytest.approx(full, rel=1e-9)


def test_unit_curve_converges_to_one():
    curve = capacity_exhaustion(UNIT, 0, list(range(1, 13)), lumped=False)
    for m, v in zip(curve.horizons, curve.values):
        assert v == pytest.approx(1 / (1 - 2.0**-m), rel=1e-8)
    assert curve.verdict == "converged"
    assert curve.limit == pytest.approx(1.0, abs=1e-12)
    lo, hi = curve.bracket
    assert lo <= 1.0 + 1e-12 <= hi + 2e-12
    assert curve.nonincreasing


def test_halving_mass_vanishes():
    curve = capacity_exhaustion(HALVING, 0, list(range(1, 13)))
    assert np.allclose(curve.values, [1 / m for m in range(1, 13)], rtol=1e-8)
    assert curve.verdict == "vanishing"
    assert curve.limit == 0.0
    assert curve.bracket == (0.0, curve.values[-1])


def test_unknown_tail_is_undetermined():
    curve = capacity_exhaustion(UNKNOWN, 0, [1, 2, 4])
    assert curve.verdict == "undetermined"
    assert curve.limit is None
    assert "unknown" in curve.note


def test_split_branches_limit_half():
    curve = capacity_exhaustion(SPLIT, 0)
    assert curve.verdict == "converged"
    assert curve.limit == pytest.approx(0.5, rel=1e-12)
    assert symbolic_ball_capacity(SPLIT, 0) == pytest.approx(0.5, rel=1e-12)
    assert all(v >= 0.5 for v in curve.values)


def test_symbolic_limit_for_larger_balls():
    # the tail integral beyond level n is 2**-n
    for n in range(4):
        assert symbolic_ball_capacity(UNIT, n) == pytest.approx(2.0**n)
        assert symbolic_ball_capacity(HALVING, n) == 0.0


def test_capacity_decreases_with_horizon_and_grows_with_n():
    cfg = WeightConfig(3, 3.0, ExpLevel(0.2), ExpLevel(0.1))
    prev = None
    for n in range(4):
        curve = capacity_exhaustion(cfg, n, [n + 1, n + 2, n + 4, n + 8])
        assert curve.nonincreasing
        if prev is not None:
            assert curve.values[0] > prev
        prev = curve.values[0]


def test_default_horizons():
    assert default_horizons(0) == [1, 2, 4, 8, 16, 32, MAX_HORIZON]
    assert default_horizons(5)[:2] == [6, 12]
    assert default_horizons(5)[-1] == MAX_HORIZON
    with pytest.raises(ValueError):
        default_horizons(MAX_HORIZON)


def test_auto_schedule_stops_early():
    cfg = WeightConfig(2, 2.0, Constant(1), ExpLevel(-1.0))
    curve = capacity_exhaustion(cfg, 0)
    assert curve.horizons[-1] < MAX_HORIZON
    assert curve.verdict == "converged"


@pytest.mark.parametrize("horizons,n", [([], 0), ([3, 2], 0), ([2, 2], 0), ([1, 2], 1)])
def test_horizon_validation(horizons, n):
    with pytest.raises(ValueError):
        capacity_exhaustion(UNIT, n, horizons)


def test_negative_n():
    with pytest.raises(ValueError):
        capacity_exhaustion(UNIT, -1, [1])


def test_convergence_failure_keeps_partial(monkeypatch):
    real = capmod.solve_dirichlet

    def flaky(problem, tol=1e-10, method="newton", **kw):
        if problem.topology.depth >= 3:
            f = real(problem, tol=tol)
            raise ConvergenceError("budget exhausted", 1.0, f)
        return real(problem, tol=tol, method=method)

    monkeypatch.setattr(capmod, "solve_dirichlet", flaky)
    with pytest.raises(ConvergenceError) as info:
        capacity_exhaustion(UNIT, 0, [1, 2, 3, 4], lumped=False)
    assert [s.horizon for s in info.value.partial] == [1, 2]
    assert info.value.horizon == 3


def test_csv_output():
    text = capacity_exhaustion(UNIT, 0, [1, 2]).csv_text()
    lines = text.splitlines()
    assert lines[0] == f"# schema: {CURVE_SCHEMA}"
    assert lines[1] == "horizon,value,residual"
    h, v, _ = lines[2].split(",")
    assert (h, float(v)) == ("1", 2.0)


# pair capacities


def test_pair_capacity_first_level():
    bd = {**{(2, i): 1 for i in (0, 1)}, **{(2, i): 0 for i in (2, 3)}}
    exact, e = fraction_network(2, 2, lambda k: 1, bd)
    assert e == Fraction(1, 3)
    assert (exact[(0, 0)], exact[(1, 0)], exact[(1, 1)]) == (Fraction(1, 2), Fraction(5, 6), Fraction(1, 6))
    res = pair_capacity(UNIT, 1)
    f = res.minimizer
    assert res.value == pytest.approx(1 / 3, rel=1e-14)
    assert f[(0, 0)] == pytest.approx(0.5)
    assert f[(1, 0)] == pytest.approx(5 / 6)
    assert f[(1, 1)] == pytest.approx(1 / 6)


def test_pair_bounds_unit():
    assert pair_upper_bound(UNIT) == pytest.approx(0.5)
    assert pair_lower_bound(UNIT) == (pytest.approx(0.125), True)


def test_pair_sequence_monotone_within_bounds():
    values = []
    for n in range(1, 7):
        r = pair_capacity(UNIT, n)
        assert r.within_bounds and r.lower_certified
        values.append(r.value)
    assert all(b <= a for a, b in zip(values, values[1:]))


def test_pair_lower_bound_uncertified():
    assert pair_lower_bound(UNKNOWN) == (0.0, False)
    assert pair_lower_bound(SPLIT) == (0.0, True)


def test_pair_capacity_preconditions():
    with pytest.raises(ConfigError):
        pair_capacity(WeightConfig(1, 2.0, Constant(1), Constant(1)), 1)
    with pytest.raises(ValueError):
        pair_capacity(UNIT, 0)


# limit of the minimizers


def test_limit_harmonic_unit():
    f, diag = limit_harmonic(UNIT, 8, 3)
    assert diag.ns == tuple(range(3, 9))
    assert len(diag.sup_deltas) == 5
    assert diag.deltas_decreasing
    assert diag.energies_within_bounds
    assert f.residual < 1e-8
    assert 0.0 <= f.values.min() and f.values.max() <= 1.0
    assert f.values.max() - f.values.min() > 1e-3
    assert f.problem.topology.depth == 3


def test_limit_harmonic_refuses_degenerate():
    for cfg in (HALVING, SPLIT, UNKNOWN):
        with pytest.raises(PreconditionError):
            limit_harmonic(cfg, 6, 2)


def test_limit_harmonic_arguments():
    with pytest.raises(ValueError):
        limit_harmonic(UNIT, 3, 3)
    with pytest.raises(ValueError):
        limit_harmonic(UNIT, 5, 0)
