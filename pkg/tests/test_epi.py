"""Theorem checkers: positive schemes, counterexamples, and the epi-distance."""

from __future__ import annotations

import numpy as np
import pytest

from epikit.envelope import pasch_hausdorff
from epikit.epi import (ApproximationScheme, attouch_wets_distance,
                        check_epi_convergence, check_minimizer_transfer,
                        epi_convergence_expectations, epi_convergence_weak,
                        fatou_extended, fatou_upper, fatou_weak,
                        parametric_fatou_envelope_route)
from epikit.extreal import INF, NEG_INF
from epikit.integrand import Integrand, IntegrandSequence
from epikit.schedules import Schedules
from epikit.space import DiscreteMeasure, MetricGrid


def make_scheme(xi, x, tables, limit_table, measures, limit_measure,
                **sched_overrides):
    items = tuple(Integrand(xi, x, t) for t in tables)
    seq = IntegrandSequence(items, Integrand(xi, x, limit_table))
    sched = Schedules.defaults(x, xi, len(tables))
    for key, val in sched_overrides.items():
        sched = sched.__class__(**{**sched.__dict__, key: val})
    return ApproximationScheme(seq, tuple(measures), limit_measure, sched)


def stationary_scheme(n_levels=16, n_xi=5, n_x=9):
    xi = MetricGrid.uniform_1d(0.0, 1.0, n_xi)
    x = MetricGrid.uniform_1d(-1.0, 1.0, n_x)
    base = np.add.outer(xi.points[:, 0], np.abs(x.points[:, 0]))
    p = DiscreteMeasure.uniform(xi, range(n_xi))
    return make_scheme(xi, x, [base] * n_levels, base, [p] * n_levels, p)


def decaying_scheme(seed=0, n_levels=64, n_xi=8, n_x=11):
    """Finite Lipschitz data, geometric perturbations, mixing measures."""
    rng = np.random.default_rng(seed)
    xi = MetricGrid.uniform_1d(0.0, 1.0, n_xi)
    x = MetricGrid.uniform_1d(-1.0, 1.0, n_x)
    slope = rng.uniform(0.5, 2.0)
    base = (np.add.outer(np.sin(3 * xi.points[:, 0]),
                         slope * np.abs(x.points[:, 0]))
            + rng.uniform(-1, 1))
    direction = rng.choice([-1.0, 1.0])
    tables = [base + direction * 2.0 ** -(nu + 1) for nu in range(n_levels)]
    w = rng.dirichlet(np.ones(n_xi))
    p = DiscreteMeasure(xi, range(n_xi), w / w.sum())
    r_w = rng.dirichlet(np.ones(n_xi))
    r = DiscreteMeasure(xi, range(n_xi), r_w / r_w.sum())
    measures = []
    for nu in range(n_levels):
        t = 2.0 ** -(nu + 1)
        measures.append(DiscreteMeasure.from_dense(
            xi, (1 - t) * p.weight_vector() + t * r.weight_vector()))
    return make_scheme(xi, x, tables, base, measures, p)


def escaping_mass_scheme(n_levels=16):
    """The expectation mass marches along the sample grid to ever lower values."""
    n_xi = n_levels + 1
    xi = MetricGrid.uniform_1d(0.0, 1.0, n_xi)
    x = MetricGrid.uniform_1d(-1.0, 1.0, 5)
    base = np.tile(-4.0 * np.arange(n_xi)[:, None], (1, 5))
    measures = [DiscreteMeasure.dirac(xi, nu + 1) for nu in range(n_levels)]
    p = DiscreteMeasure.dirac(xi, 0)
    return make_scheme(xi, x, [base] * n_levels, base, measures, p)


# --- check_epi_convergence ---------------------------------------------------


def test_constant_lsc_sequence_epi_converges():
    grid = MetricGrid.uniform_1d(-1.0, 1.0, 11)
    h = np.abs(grid.points[:, 0])
    sched = Schedules.defaults(grid, grid, 16)
    report = check_epi_convergence(np.tile(h, (16, 1)), h, grid, sched)
    assert report.verdict == "pass"


def test_classic_parabola_cap_sequence():
    # pointwise limit differs from the epi-limit only at the dip; the
    # sequence epi-converges to the function with the dip kept at zero
    grid = MetricGrid.uniform_1d(-1.0, 1.0, 21)
    xs = grid.points[:, 0]
    items = np.stack([np.minimum((nu + 1) * xs ** 2, 1.0) for nu in range(160)])
    limit = np.where(xs == 0.0, 0.0, 1.0)
    sched = Schedules.defaults(grid, grid, 160)
    report = check_epi_convergence(items, limit, grid, sched)
    assert report.verdict == "pass"


def test_oscillation_breaks_recovery_leg():
    grid = MetricGrid.uniform_1d(-1.0, 1.0, 9)
    xs = grid.points[:, 0]
    items = np.stack([((-1.0) ** nu) * xs for nu in range(32)])
    limit = -np.abs(xs)  # the genuine lower limit, so leg (i) holds
    sched = Schedules.defaults(grid, grid, 32)
    report = check_epi_convergence(items, limit, grid, sched)
    assert report.verdict == "fail"
    assert report.stage("liminf-leg").ok
    assert not report.stage("recovery-leg").ok
    assert report.witnesses


# --- envelope route ----------------------------------------------------------


def test_envelope_route_stationary_scheme_passes():
    report = parametric_fatou_envelope_route(stationary_scheme())
    assert report.verdict == "pass"
    assert report.margin >= -1e-9
    for st in report.stages[:3]:
        assert st.ok


def test_envelope_route_decaying_scheme_passes():
    report = parametric_fatou_envelope_route(decaying_scheme(seed=5))
    assert report.verdict == "pass"


def test_envelope_route_escaping_mass_trips_hypothesis_and_conclusion():
    report = parametric_fatou_envelope_route(escaping_mass_scheme())
    assert report.verdict == "fail"
    assert not report.stage("enveloped-expectation-bound").ok
    assert not report.stage("lower-epi-limit-bound").ok
    assert report.witnesses


def test_epi_convergence_expectations_positive_and_limsup_counterexample():
    assert epi_convergence_expectations(stationary_scheme()).verdict == "pass"
    assert epi_convergence_expectations(decaying_scheme(seed=9)).verdict == "pass"

    # one fixed positive-weight atom pushed up by a constant breaks the
    # pointwise limsup hypothesis and the epi conclusion
    scheme = stationary_scheme()
    bumped = [t.copy() for t in (f.values for f in scheme.integrands.items)]
    for t in bumped:
        t[2, :] += 1.0
    xi, x = scheme.xi_grid, scheme.x_grid
    report = epi_convergence_expectations(make_scheme(
        xi, x, bumped, scheme.integrands.limit.values,
        list(scheme.measures), scheme.limit_measure))
    assert report.verdict == "fail"
    assert not report.stage("pointwise-limsup-bound").ok


# --- weak route ----------------------------------------------------------------


def clamp_table(grid, g):
    """f[xi, x] = g(clamp(x + xi)) tabulated over the shared grid."""
    xs = grid.points[:, 0]
    n = len(xs)
    table = np.empty((n, n))
    for i, shift in enumerate(xs):
        targets = np.clip(xs + shift, xs[0], xs[-1])
        idx = np.searchsorted(xs, targets)
        idx = np.clip(idx, 0, n - 1)
        left = np.clip(idx - 1, 0, n - 1)
        pick = np.where(np.abs(xs[left] - targets) <= np.abs(xs[idx] - targets),
                        left, idx)
        table[i] = g[pick]
    return table


def mollifier_scheme(n_levels=8, n=65):
    grid = MetricGrid.uniform_1d(-1.0, 1.0, n)
    g = (grid.points[:, 0] > 0.0).astype(float)  # lsc step
    table = clamp_table(grid, g)
    center = n // 2
    from epikit.space import mollifier_family
    radii = [2.0 ** -(nu + 1) for nu in range(n_levels)]
    measures = mollifier_family(grid, center, radii)
    p = DiscreteMeasure.dirac(grid, center)
    return make_scheme(grid, grid, [table] * n_levels, table, measures, p)


def test_fatou_weak_stationary_classical_direction():
    scheme = stationary_scheme()
    report = fatou_weak(scheme, x_index=4)
    assert report.verdict == "pass"
    for st in report.stages:
        assert st.ok


def test_fatou_weak_mollifier_scheme_passes():
    scheme = mollifier_scheme()
    for x_index in (32, 16, 48):
        report = fatou_weak(scheme, x_index)
        assert report.verdict == "pass", report.to_json_dict()


def test_fatou_weak_uniform_integrability_violation():
    # shrinking-probability dips with constant product: weight 2^-nu on a
    # value of -2^nu keeps every expectation at -1 while the measures
    # still converge weakly to the dirac at the first atom
    n_levels = 16
    n_xi = n_levels + 2
    xi = MetricGrid.uniform_1d(0.0, 1.0, n_xi)
    x = MetricGrid.uniform_1d(-1.0, 1.0, 5)
    tables, measures = [], []
    for nu in range(1, n_levels + 1):
        t = np.zeros((n_xi, 5))
        t[nu + 1, :] = -float(2 ** nu)
        tables.append(t)
        measures.append(DiscreteMeasure(
            xi, [0, nu + 1], [1.0 - 2.0 ** -nu, 2.0 ** -nu]))
    limit = np.zeros((n_xi, 5))
    p = DiscreteMeasure.dirac(xi, 0)
    scheme = make_scheme(xi, x, tables, limit, measures, p)
    report = fatou_weak(scheme, x_index=2)
    assert report.verdict == "fail"
    assert report.stage("weak-convergence").ok
    assert not report.stage("uniform-integrability-below").ok
    assert not report.stage("lower-epi-limit-bound").ok
    assert report.lhs == pytest.approx(-1.0)


def test_epi_convergence_weak_positive_schemes():
    assert epi_convergence_weak(stationary_scheme()).verdict == "pass"
    assert epi_convergence_weak(mollifier_scheme()).verdict == "pass"


def test_epi_convergence_weak_limsup_leg_counterexample():
    scheme = stationary_scheme()
    bumped = [f.values.copy() for f in scheme.integrands.items]
    for t in bumped:
        t[2, :] += 1.0
    report = epi_convergence_weak(make_scheme(
        scheme.xi_grid, scheme.x_grid, bumped, scheme.integrands.limit.values,
        list(scheme.measures), scheme.limit_measure))
    assert report.verdict == "fail"
    assert not report.stage("recovery-hypotheses").ok
    bad_atoms = {w.get("atom") for w in report.stage("recovery-hypotheses").witnesses}
    assert 2 in bad_atoms


def test_epi_convergence_weak_vacuous_for_infinite_limit():
    scheme = stationary_scheme(n_levels=8, n_xi=3, n_x=5)
    lifted = scheme.integrands.limit.values.copy()
    lifted[:, 2] = INF
    tables = []
    for f in scheme.integrands.items:
        t = f.values.copy()
        t[:, 2] = INF
        tables.append(t)
    report = epi_convergence_weak(make_scheme(
        scheme.xi_grid, scheme.x_grid, tables, lifted,
        list(scheme.measures), scheme.limit_measure))
    assert report.verdict == "pass"
    assert report.stage("recovery-hypotheses").detail["sources"]["2"] == "vacuous(+inf)"


# --- extended Fatou --------------------------------------------------------------


def extended_instance(seed, n_levels=64, n_xi=12):
    rng = np.random.default_rng(seed)
    xi = MetricGrid.uniform_1d(0.0, 1.0, n_xi)
    base = rng.uniform(-3.0, 3.0, size=n_xi)
    h_items = np.stack([
        base + rng.choice([-1.0, 1.0]) * 2.0 ** -(nu + 1)
        for nu in range(n_levels)
    ])
    w = rng.dirichlet(np.ones(n_xi))
    p = DiscreteMeasure(xi, range(n_xi), w / w.sum())
    r_w = rng.dirichlet(np.ones(n_xi))
    r = DiscreteMeasure(xi, range(n_xi), r_w / r_w.sum())
    measures = [
        DiscreteMeasure.from_dense(
            xi, (1 - 2.0 ** -(nu + 1)) * p.weight_vector()
            + 2.0 ** -(nu + 1) * r.weight_vector())
        for nu in range(n_levels)
    ]
    sched = Schedules.defaults(MetricGrid([[0.0]]), xi, n_levels)
    return h_items, measures, p, xi, sched


@pytest.mark.parametrize("seed", [1, 2, 3, 4])
def test_fatou_extended_randomized_pass(seed):
    h_items, measures, p, xi, sched = extended_instance(seed)
    report = fatou_extended(h_items, measures, p, xi, sched)
    assert report.stage("uniform-integrability-below").ok
    assert report.verdict == "pass"
    assert report.margin >= -1e-6


def escaping_mass_instance(depth):
    n_levels = 16
    n_xi = n_levels + 2
    xi = MetricGrid.uniform_1d(0.0, 1.0, n_xi)
    h_items = np.zeros((n_levels, n_xi))
    measures = []
    for nu in range(1, n_levels + 1):
        d = float(depth(nu))
        h_items[nu - 1, nu + 1] = -d
        measures.append(DiscreteMeasure(
            xi, [0, nu + 1], [1.0 - 1.0 / d, 1.0 / d]))
    p = DiscreteMeasure.dirac(xi, 0)
    sched = Schedules.defaults(MetricGrid([[0.0]]), xi, n_levels)
    return h_items, measures, p, xi, sched


def test_fatou_extended_escaping_mass_counterexample():
    h_items, measures, p, xi, sched = escaping_mass_instance(lambda nu: 2 ** nu)
    report = fatou_extended(h_items, measures, p, xi, sched)
    assert report.verdict == "fail"
    assert not report.stage("uniform-integrability-below").ok
    assert not report.stage("fatou-inequality").ok
    assert report.lhs == pytest.approx(-1.0)
    assert report.rhs == pytest.approx(0.0)


def test_fatou_extended_slow_escape_trips_depth_guard():
    # dips deepen only linearly, so the top cutoff sees vacuously empty
    # events; the depth-escape guard still fails the gate
    h_items, measures, p, xi, sched = escaping_mass_instance(lambda nu: nu + 1)
    report = fatou_extended(h_items, measures, p, xi, sched)
    assert report.verdict == "fail"
    gate = report.stage("uniform-integrability-below")
    assert not gate.ok
    assert gate.detail["depth_escaping"]
    assert not report.stage("fatou-inequality").ok


def test_fatou_extended_dichotomy_with_infinite_lhs():
    n_levels = 8
    xi = MetricGrid.uniform_1d(0.0, 1.0, 4)
    h_items = np.full((n_levels, 4), INF)
    p = DiscreteMeasure.uniform(xi, range(4))
    sched = Schedules.defaults(MetricGrid([[0.0]]), xi, n_levels)
    report = fatou_extended(h_items, [p] * n_levels, p, xi, sched)
    assert report.lhs == INF
    assert report.verdict == "pass"
    assert report.stage("finite-positive-part-dichotomy").ok


def test_fatou_upper_mirrors_lower_on_negated_data():
    h_items, measures, p, xi, sched = extended_instance(7)
    lower = fatou_extended(h_items, measures, p, xi, sched)
    upper = fatou_upper(-h_items, measures, p, xi, sched)
    assert upper.verdict == lower.verdict == "pass"
    assert upper.lhs == pytest.approx(-lower.lhs)
    assert upper.rhs == pytest.approx(-lower.rhs)
    assert upper.margin == pytest.approx(lower.margin)


# --- cross-validation and minimizer transfer ---------------------------------


def test_routes_agree_on_cross_eligible_schemes():
    for seed in range(12):
        scheme = decaying_scheme(seed=seed, n_levels=64, n_xi=6, n_x=9)
        env = epi_convergence_expectations(scheme)
        weak = epi_convergence_weak(scheme)
        assert env.verdict == weak.verdict == "pass", (seed, env.verdict,
                                                       weak.verdict)


def test_minimizer_transfer_on_passing_scheme():
    scheme = decaying_scheme(seed=3)
    expect = scheme.expectation_matrix()
    limit = scheme.limit_expectation()
    report = check_minimizer_transfer(expect, limit, scheme.x_grid,
                                      scheme.schedules)
    assert report.verdict == "pass"


def test_minimizer_transfer_unverified_for_infinite_limit():
    grid = MetricGrid.uniform_1d(0.0, 1.0, 4)
    sched = Schedules.defaults(grid, grid, 4)
    items = np.zeros((4, 4))
    limit = np.full(4, INF)
    report = check_minimizer_transfer(items, limit, grid, sched)
    assert report.verdict == "hypothesis-unverified"


def test_minimizer_transfer_detects_displaced_minimum():
    grid = MetricGrid.uniform_1d(-1.0, 1.0, 21)
    xs = grid.points[:, 0]
    limit = xs ** 2
    items = np.tile((xs - 0.5) ** 2, (16, 1))
    sched = Schedules.defaults(grid, grid, 16)
    report = check_minimizer_transfer(items, limit, grid, sched)
    assert report.verdict == "fail"
    assert report.witnesses


# --- Attouch-Wets distance -----------------------------------------------------


def test_attouch_wets_zero_on_equal_functions():
    grid = MetricGrid.uniform_1d(-2.0, 2.0, 17)
    h = np.abs(grid.points[:, 0])
    assert attouch_wets_distance(h, h, grid, rho=2.0) == 0.0


def test_attouch_wets_vertical_shift_bounded_by_shift():
    grid = MetricGrid.uniform_1d(-2.0, 2.0, 33)
    h = np.abs(grid.points[:, 0])
    for c in (0.25, 0.5, 1.0):
        d = attouch_wets_distance(h, h + c, grid, rho=2.0)
        assert 0.0 < d <= c + 1e-12


def test_attouch_wets_step_vs_envelope_decreases_in_modulus():
    grid = MetricGrid.uniform_1d(-2.0, 2.0, 33)
    h = (grid.points[:, 0] >= 0.0).astype(float)
    dists = []
    for kappa in (1.0, 4.0, 16.0, 64.0):
        env = pasch_hausdorff(h, grid, kappa).values
        dists.append(attouch_wets_distance(h, env, grid, rho=2.0))
    assert all(b <= a + 1e-12 for a, b in zip(dists, dists[1:]))
    assert dists[-1] < dists[0]
    assert dists[-1] < 0.05


def test_attouch_wets_empty_epigraph_saturates():
    grid = MetricGrid.uniform_1d(-1.0, 1.0, 9)
    h = np.zeros(9)
    empty = np.full(9, INF)
    assert attouch_wets_distance(h, empty, grid, rho=2.0) == 4.0
    assert attouch_wets_distance(empty, empty, grid, rho=2.0) == 0.0


def test_attouch_wets_decays_after_epi_convergence_pass():
    grid = MetricGrid.uniform_1d(-1.0, 1.0, 17)
    h = np.abs(grid.points[:, 0])
    items = np.stack([h + 2.0 ** -(nu + 1) for nu in range(64)])
    sched = Schedules.defaults(grid, grid, 64)
    assert check_epi_convergence(items, h, grid, sched).verdict == "pass"
    dists = [attouch_wets_distance(items[nu], h, grid, rho=1.5)
             for nu in (0, 8, 16, 32)]
    assert all(b <= a for a, b in zip(dists, dists[1:]))
    assert dists[-1] <= 2.0 ** -32 + 1e-9
