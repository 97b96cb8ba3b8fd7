"""Theorem checkers: epi-convergence, parametric and extended Fatou bounds.

Every checker is three-stage: hypotheses are verified with scheduled
surrogates, the conclusion is computed regardless, and the verdict keeps
the stages apart.  A failing conclusion yields ``"fail"`` (hypothesis
outcomes stay visible in the stages); failing hypotheses with a holding
conclusion yield ``"hypothesis-unverified"``.  Desk-scale tail statistics
are necessary-condition checks over finite prefixes; reports echo the
schedules and carry tail trends so the evidence is inspectable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .envelope import envelope_of_integrand, pasch_hausdorff
from .extreal import (INF, NEG_INF, ext_close, ge_with_tol, plus_part,
                      sub_conv)
from .integrand import (Integrand, IntegrandSequence, expectation_function,
                        expectation_values, check_lsc)
from .report import (FAIL, HYPOTHESIS_UNVERIFIED, PASS, DiagnosticReport,
                     Stage, combine_verdict)
from .schedules import (Schedules, escaping_downward, escaping_upward,
                        joint_liminf, joint_limsup, stage_radius_for_level,
                        tail_inf, tail_sup, tail_trend, triple_liminf,
                        window_infima)
from .space import (DiscreteMeasure, MetricGrid, bounded_lipschitz_distance)


@dataclass(frozen=True)
class ApproximationScheme:
    """The quadruple (limit integrand, sequence, limit measure, sequence).

    All components share the same pair of grids and the same length;
    schedules are carried along so reports are reproducible.
    """

    integrands: IntegrandSequence
    measures: tuple[DiscreteMeasure, ...]
    limit_measure: DiscreteMeasure
    schedules: Schedules

    def __post_init__(self) -> None:
        if len(self.measures) != len(self.integrands):
            raise ValueError("need one measure per integrand level")
        for k, m in enumerate(self.measures):
            if m.grid is not self.integrands.xi_grid:
                raise ValueError(f"measure {k} lives off the sample grid")
        if self.limit_measure.grid is not self.integrands.xi_grid:
            raise ValueError("limit measure lives off the sample grid")

    def __len__(self) -> int:
        return len(self.integrands)

    @property
    def x_grid(self) -> MetricGrid:
        return self.integrands.x_grid

    @property
    def xi_grid(self) -> MetricGrid:
        return self.integrands.xi_grid

    def expectation_matrix(self) -> np.ndarray:
        """Rows: levels; columns: decision points."""
        return np.stack([
            expectation_function(f, p)
            for f, p in zip(self.integrands.items, self.measures)
        ])

    def limit_expectation(self) -> np.ndarray:
        return expectation_function(self.integrands.limit, self.limit_measure)

    def positive_atoms(self) -> np.ndarray:
        sup = self.limit_measure.support
        return sup[self.limit_measure.weights > 0.0]

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "xi_grid": self.xi_grid.to_json_dict(),
            "x_grid": self.x_grid.to_json_dict(),
            "integrands": [f.to_json_dict(include_grids=False)
                           for f in self.integrands.items],
            "limit_integrand": self.integrands.limit.to_json_dict(
                include_grids=False),
            "measures": [m.to_json_dict() for m in self.measures],
            "limit_measure": self.limit_measure.to_json_dict(),
            "schedules": self.schedules.to_json_dict(),
        }

    @classmethod
    def from_json_dict(cls, obj: dict[str, Any]) -> "ApproximationScheme":
        xi = MetricGrid.from_json_dict(obj["xi_grid"])
        x = MetricGrid.from_json_dict(obj["x_grid"])
        items = tuple(
            Integrand.from_json_dict(d, xi_grid=xi, x_grid=x)
            for d in obj["integrands"]
        )
        limit = Integrand.from_json_dict(obj["limit_integrand"], xi_grid=xi,
                                         x_grid=x)
        measures = tuple(
            DiscreteMeasure.from_json_dict(xi, d) for d in obj["measures"]
        )
        return cls(
            integrands=IntegrandSequence(items, limit),
            measures=measures,
            limit_measure=DiscreteMeasure.from_json_dict(xi, obj["limit_measure"]),
            schedules=Schedules.from_json_dict(obj["schedules"]),
        )


# --- epi-convergence of grid-function sequences -----------------------------


def _diverges_to(values: Sequence[float], sign: float,
                 tail_starts: Sequence[int]) -> bool:
    """Desk surrogate for a sequence tending to a signed infinity.

    A finite prefix never reaches an infinite limit literally; divergence
    is accepted when the tail is already at the infinity or the windowed
    trend escapes in that direction.
    """
    arr = np.asarray(values, dtype=float)
    tail0 = min(max(tail_starts), arr.size - 1)
    if sign > 0:
        if bool(np.all(arr[tail0:] == INF)):
            return True
        return escaping_upward(arr, tail_starts)
    if bool(np.all(arr[tail0:] == NEG_INF)):
        return True
    return escaping_downward(window_infima(arr, tail_starts))


def _finest_ball_minima(items: np.ndarray, grid: MetricGrid, x: int,
                        schedules: Schedules) -> np.ndarray:
    members = grid.ball(x, schedules.x_radii[-1])
    return items[:, members].min(axis=1)


def check_epi_convergence(items: np.ndarray, limit: np.ndarray,
                          grid: MetricGrid, schedules: Schedules,
                          name: str = "epi-convergence",
                          recovery_radius_floor: float | None = None,
                          ) -> DiagnosticReport:
    """Both epi-convergence legs for a sequence of grid functions.

    Leg (i): the joint lower limit at every point dominates the limit
    function; where the limit is ``+inf`` the ball values must diverge
    upward (trend surrogate).  Leg (ii): a recovery sequence is searched
    per point by minimizing the deviation from the limit value over
    scheduled balls; its tail values must approach the limit value within
    tolerance.  Recovery balls never shrink below one grid spacing (the
    resolution limit of "a sequence converging to x" on a finite grid);
    ``recovery_radius_floor`` widens that floor.
    """
    items = np.asarray(items, dtype=float)
    limit = np.asarray(limit, dtype=float)
    tol = schedules.tol
    n_levels, n_points = items.shape
    floor = grid.spacing if recovery_radius_floor is None else recovery_radius_floor

    liminf_witnesses = []
    worst_margin = INF
    for x in range(n_points):
        if limit[x] == INF:
            if not _diverges_to(_finest_ball_minima(items, grid, x, schedules),
                                1.0, schedules.tail_starts):
                liminf_witnesses.append({"point": x, "limit": INF,
                                         "issue": "no-upward-divergence"})
            continue
        lhs = joint_liminf(items, grid, x, schedules.x_radii,
                           schedules.tail_starts)
        margin = sub_conv(lhs, limit[x])
        worst_margin = min(worst_margin, margin)
        if not ge_with_tol(lhs, limit[x], tol):
            liminf_witnesses.append({"point": x, "liminf": lhs,
                                     "limit": float(limit[x])})
    stage_liminf = Stage("liminf-leg", not liminf_witnesses,
                         {"worst_margin": worst_margin},
                         tuple(liminf_witnesses))

    recovery_witnesses = []
    tail0 = min(schedules.last_tail_start, n_levels - 1)
    for x in range(n_points):
        target = float(limit[x])
        if np.isinf(target):
            seq = _finest_ball_minima(items, grid, x, schedules)
            if not _diverges_to(seq, np.sign(target), schedules.tail_starts):
                recovery_witnesses.append({"point": x, "limit": target,
                                           "issue": "no-divergence"})
            continue
        path, deviations = _recovery_search(items, grid, x, target, schedules,
                                            floor)
        tail_dev = max(deviations[tail0:])
        if tail_dev > tol:
            bad_level = tail0 + int(np.argmax(deviations[tail0:]))
            recovery_witnesses.append({
                "point": x, "limit": target,
                "worst_tail_value": float(items[bad_level, path[bad_level]]),
                "tail_deviation": tail_dev,
            })
    stage_recovery = Stage("recovery-leg", not recovery_witnesses,
                           {"radius_floor": floor},
                           tuple(recovery_witnesses))

    ok = stage_liminf.ok and stage_recovery.ok
    return DiagnosticReport(
        name=name,
        verdict=combine_verdict(True, ok),
        lhs=worst_margin,
        rhs=0.0,
        margin=worst_margin,
        witnesses=tuple(liminf_witnesses) + tuple(recovery_witnesses),
        schedules_used=schedules.to_json_dict(),
        stages=(stage_liminf, stage_recovery),
    )


def _deviation(value: float, target: float) -> float:
    if np.isinf(target):
        return 0.0 if value == target else INF
    if np.isinf(value):
        return INF
    return abs(value - target)


def _recovery_search(items: np.ndarray, grid: MetricGrid, x: int,
                     target: float, schedules: Schedules,
                     radius_floor: float = 0.0,
                     ) -> tuple[list[int], list[float]]:
    """Per level, the ball point whose value is nearest the target."""
    path, deviations = [], []
    for level in range(items.shape[0]):
        radius = max(stage_radius_for_level(level, schedules.tail_starts,
                                            schedules.x_radii), radius_floor)
        members = grid.ball(x, radius)
        devs = [_deviation(float(items[level, m]), target) for m in members]
        best = int(np.argmin(devs))
        path.append(int(members[best]))
        deviations.append(devs[best])
    return path, deviations


# --- envelope route (Suslin-space assumptions) -------------------------------


def parametric_fatou_envelope_route(scheme: ApproximationScheme,
                                    dense_subset: Sequence[int] | None = None,
                                    ) -> DiagnosticReport:
    """Lower epi-limit bound with hypotheses on enveloped expectations.

    Stage 1 certifies, for each subset point and every scheduled modulus
    from some starting modulus on, that the tail infimum of the enveloped
    approximate expectations dominates the finite enveloped limit
    expectation.  Stage 2 checks lower semicontinuity of the limit
    integrand per positive atom.  Stage 3 asserts the conclusion: the
    joint lower limit of the expectation functions dominates the limit
    expectation everywhere.  The conclusion is always computed, also when
    hypotheses fail.
    """
    sched = scheme.schedules
    subset = list(dense_subset) if dense_subset is not None else list(
        range(len(scheme.x_grid)))
    if not subset:
        raise ValueError("dense subset must be nonempty")
    n = len(scheme)
    tail0 = min(sched.last_tail_start, n - 1)

    env_expect = {}
    limit_env_expect = {}
    for kappa in sched.moduli:
        env_expect[kappa] = np.stack([
            expectation_function(envelope_of_integrand(f, kappa), p)
            for f, p in zip(scheme.integrands.items, scheme.measures)
        ])
        limit_env_expect[kappa] = expectation_function(
            envelope_of_integrand(scheme.integrands.limit, kappa),
            scheme.limit_measure)

    failures_by_kappa: dict[float, list[dict]] = {}
    for kappa in sched.moduli:
        bad = []
        for x0 in subset:
            lhs = tail_inf(env_expect[kappa][:, x0], tail0)
            rhs = float(limit_env_expect[kappa][x0])
            if rhs == NEG_INF or not ge_with_tol(lhs, rhs, sched.tol):
                bad.append({"modulus": float(kappa), "point": int(x0),
                            "tail_inf": lhs, "limit_value": rhs})
        failures_by_kappa[kappa] = bad
    start_modulus = None
    for i, kappa in enumerate(sched.moduli):
        if all(not failures_by_kappa[k] for k in sched.moduli[i:]):
            start_modulus = float(kappa)
            break
    hyp_witnesses = [w for bad in failures_by_kappa.values() for w in bad]
    stage1 = Stage(
        "enveloped-expectation-bound", start_modulus is not None,
        {"start_modulus": start_modulus},
        tuple(hyp_witnesses) if start_modulus is None else (),
    )

    lsc_bad = []
    for atom in scheme.positive_atoms():
        rep = check_lsc(scheme.integrands.limit.values[int(atom)], scheme.x_grid)
        if rep.verdict != PASS:
            lsc_bad.append({"atom": int(atom)})
    stage2 = Stage("limit-integrand-lsc", not lsc_bad, {}, tuple(lsc_bad))

    expect = scheme.expectation_matrix()
    limit_expect = scheme.limit_expectation()
    concl_witnesses = []
    worst = INF
    for x in range(len(scheme.x_grid)):
        lhs = joint_liminf(expect, scheme.x_grid, x, sched.x_radii,
                           sched.tail_starts)
        margin = sub_conv(lhs, float(limit_expect[x]))
        worst = min(worst, margin)
        if not ge_with_tol(lhs, float(limit_expect[x]), sched.tol):
            concl_witnesses.append({"point": x, "liminf": lhs,
                                    "limit": float(limit_expect[x])})
    stage3 = Stage("lower-epi-limit-bound", not concl_witnesses,
                   {"worst_margin": worst}, tuple(concl_witnesses))

    finite_clause = _finite_rhs_clause(expect, limit_expect, scheme.x_grid, sched)

    hypotheses_ok = stage1.ok and stage2.ok
    conclusion_ok = stage3.ok
    witnesses = () if conclusion_ok else (
        tuple(concl_witnesses) or tuple(hyp_witnesses))
    return DiagnosticReport(
        name="parametric-fatou-envelope-route",
        verdict=combine_verdict(hypotheses_ok, conclusion_ok),
        lhs=worst,
        rhs=0.0,
        margin=worst,
        witnesses=witnesses,
        schedules_used=sched.to_json_dict(),
        stages=(stage1, stage2, stage3, finite_clause),
    )


def _finite_rhs_clause(expect: np.ndarray, limit_expect: np.ndarray,
                       grid: MetricGrid, sched: Schedules) -> Stage:
    """Search for a point witnessing a finite joint lower limit.

    When found, the limit expectation must exceed ``-inf`` everywhere; when
    no witness exists on the grid the clause is reported as unexercised
    rather than asserted.
    """
    witness = None
    for x in range(len(grid)):
        lhs = joint_liminf(expect, grid, x, sched.x_radii, sched.tail_starts)
        if lhs < INF:
            witness = int(x)
            break
    if witness is None:
        return Stage("finite-rhs-clause", True,
                     {"note": "no witness found on the grid"})
    ok = bool(np.all(limit_expect > NEG_INF))
    return Stage("finite-rhs-clause", ok, {"witness_point": witness},
                 () if ok else tuple(
                     {"point": int(i)} for i in
                     np.flatnonzero(limit_expect == NEG_INF)))


def epi_convergence_expectations(scheme: ApproximationScheme,
                                 dense_subset: Sequence[int] | None = None,
                                 ) -> DiagnosticReport:
    """Envelope-route epi-convergence of the expectation functions."""
    sched = scheme.schedules
    subset = list(dense_subset) if dense_subset is not None else list(
        range(len(scheme.x_grid)))
    fatou = parametric_fatou_envelope_route(scheme, subset)

    expect = scheme.expectation_matrix()
    limit_expect = scheme.limit_expectation()
    n = len(scheme)
    tail0 = min(sched.last_tail_start, n - 1)
    limsup_witnesses = []
    for x0 in subset:
        lhs = tail_sup(expect[:, x0], tail0)
        rhs = float(limit_expect[x0])
        if not ge_with_tol(rhs, lhs, sched.tol):
            limsup_witnesses.append({"point": int(x0), "tail_sup": lhs,
                                     "limit": rhs})
    stage_limsup = Stage("pointwise-limsup-bound", not limsup_witnesses, {},
                         tuple(limsup_witnesses))

    epi = check_epi_convergence(expect, limit_expect, scheme.x_grid, sched)

    hypotheses_ok = all(st.ok for st in fatou.stages[:2]) and stage_limsup.ok
    conclusion_ok = epi.verdict == PASS
    witnesses = epi.witnesses or tuple(limsup_witnesses) or fatou.witnesses
    return DiagnosticReport(
        name="epi-convergence-envelope-route",
        verdict=combine_verdict(hypotheses_ok, conclusion_ok),
        lhs=epi.lhs,
        rhs=epi.rhs,
        margin=epi.margin,
        witnesses=witnesses if not conclusion_ok else (),
        schedules_used=sched.to_json_dict(),
        stages=fatou.stages[:2] + (stage_limsup,) + epi.stages,
    )


# --- weak-convergence route ---------------------------------------------------


def _weak_convergence_stage(scheme: ApproximationScheme) -> Stage:
    dists = [bounded_lipschitz_distance(p, scheme.limit_measure)
             for p in scheme.measures]
    sched = scheme.schedules
    tail0 = min(sched.last_tail_start, len(dists) - 1)
    final = tail_sup(dists, tail0)
    ok = final <= sched.weak_tol
    return Stage(
        "weak-convergence", ok,
        {"tail_max": final, "weak_tol": sched.weak_tol,
         "trend": [tail_sup(dists, min(t, len(dists) - 1))
                   for t in sched.tail_starts]},
        () if ok else ({"tail_max": final, "weak_tol": sched.weak_tol},),
    )


def _below_gate(per_cutoff: dict[float, float], depth_seq: Sequence[float],
                sched: Schedules) -> tuple[bool, dict[str, Any]]:
    """Assess a below-tail gate with the depth-escape guard.

    The surrogate holds when the statistic vanishes at the top cutoff,
    except when the per-level depth escapes downward while the largest
    cutoff with nonvacuous events still shows mass: a finite prefix then
    carries positive evidence of escaping mass and the gate fails.
    """
    cutoffs = sched.cutoffs
    top = per_cutoff[cutoffs[-1]]
    ok_top = ge_with_tol(top, 0.0, sched.tol)
    escape = escaping_downward(window_infima(depth_seq, sched.tail_starts))
    tail0 = min(sched.last_tail_start, len(depth_seq) - 1)
    tail_depth = min(depth_seq[tail0:])
    k_nonvacuous = None
    for c in cutoffs:
        if tail_depth <= -c:
            k_nonvacuous = c
    guard_trip = (escape and k_nonvacuous is not None
                  and not ge_with_tol(per_cutoff[k_nonvacuous], 0.0, sched.tol))
    detail = {
        "per_cutoff": {str(c): v for c, v in per_cutoff.items()},
        "value_at_top_cutoff": top,
        "depth_escaping": escape,
        "nonvacuous_cutoff": k_nonvacuous,
    }
    return ok_top and not guard_trip, detail


def _above_gate(per_cutoff: dict[float, float], height_seq: Sequence[float],
                sched: Schedules) -> tuple[bool, dict[str, Any]]:
    """Upper mirror of :func:`_below_gate`."""
    cutoffs = sched.cutoffs
    top = per_cutoff[cutoffs[-1]]
    ok_top = ge_with_tol(0.0, top, sched.tol)
    escape = escaping_upward(height_seq, sched.tail_starts)
    tail0 = min(sched.last_tail_start, len(height_seq) - 1)
    tail_height = max(height_seq[tail0:])
    k_nonvacuous = None
    for c in cutoffs:
        if tail_height >= c:
            k_nonvacuous = c
    guard_trip = (escape and k_nonvacuous is not None
                  and not ge_with_tol(0.0, per_cutoff[k_nonvacuous], sched.tol))
    detail = {
        "per_cutoff": {str(c): v for c, v in per_cutoff.items()},
        "value_at_top_cutoff": top,
        "height_escaping": escape,
        "nonvacuous_cutoff": k_nonvacuous,
    }
    return ok_top and not guard_trip, detail


def _tails_by_cutoff(scheme: ApproximationScheme) -> dict[float, np.ndarray]:
    """Per cutoff, the (levels, x) matrix of below-tail expectations."""
    return {
        cutoff: np.stack([
            _tail_expectation_matrix(f, p, cutoff, below=True)
            for f, p in zip(scheme.integrands.items, scheme.measures)
        ])
        for cutoff in scheme.schedules.cutoffs
    }


def _uniform_integrability_below_stage(scheme: ApproximationScheme,
                                       x_index: int,
                                       tails_by_cutoff: dict[float, np.ndarray]
                                       | None = None) -> Stage:
    """Condition: the tail expectations below every cutoff vanish jointly.

    The outer limit over cutoffs is evaluated at the largest cutoff, valid
    because the inner statistic is nondecreasing in the cutoff.
    """
    sched = scheme.schedules
    if tails_by_cutoff is None:
        tails_by_cutoff = _tails_by_cutoff(scheme)
    per_cutoff = {
        cutoff: joint_liminf(tails, scheme.x_grid, x_index, sched.x_radii,
                             sched.tail_starts)
        for cutoff, tails in tails_by_cutoff.items()
    }
    ball = scheme.x_grid.ball(x_index, sched.x_radii[0])
    atoms = scheme.positive_atoms()
    depth_seq = [
        float(f.values[np.ix_(atoms, ball)].min())
        for f in scheme.integrands.items
    ]
    ok, detail = _below_gate(per_cutoff, depth_seq, sched)
    return Stage(
        "uniform-integrability-below", ok, detail,
        () if ok else ({"point": x_index,
                        "value": per_cutoff[sched.cutoffs[-1]]},),
    )


def _tail_expectation_matrix(f: Integrand, p: DiscreteMeasure, cutoff: float,
                             below: bool) -> np.ndarray:
    vals = f.values[p.support, :]
    w = p.weights[:, None]
    if below:
        event = (vals <= -cutoff) & (w > 0.0)
    else:
        event = (vals >= cutoff) & (w > 0.0)
    contrib = np.where(event, vals, 0.0) * w
    return contrib.sum(axis=0)


def _lower_joint_continuity_stage(scheme: ApproximationScheme,
                                  x_index: int) -> Stage:
    """At every positive atom the triple lower limit dominates the limit."""
    sched = scheme.schedules
    witnesses = []
    for atom in scheme.positive_atoms():
        lhs = triple_liminf(scheme.integrands.matrices(), scheme.xi_grid,
                            scheme.x_grid, int(atom), x_index,
                            sched.xi_radii, sched.x_radii, sched.tail_starts)
        rhs = scheme.integrands.limit.value(int(atom), x_index)
        if not ge_with_tol(lhs, rhs, sched.tol):
            witnesses.append({"atom": int(atom), "liminf": lhs, "limit": rhs})
    return Stage("joint-lower-limit-at-atoms", not witnesses, {},
                 tuple(witnesses))


def fatou_weak(scheme: ApproximationScheme, x_index: int) -> DiagnosticReport:
    """Parametric Fatou bound at one point, weak-convergence route."""
    sched = scheme.schedules
    stage_weak = _weak_convergence_stage(scheme)
    stage_ui = _uniform_integrability_below_stage(scheme, x_index)
    stage_joint = _lower_joint_continuity_stage(scheme, x_index)

    expect = scheme.expectation_matrix()
    limit_at_x = float(scheme.limit_expectation()[x_index])
    lhs = joint_liminf(expect, scheme.x_grid, x_index, sched.x_radii,
                       sched.tail_starts)
    if limit_at_x == INF:
        conclusion_ok = _diverges_to(
            _finest_ball_minima(expect, scheme.x_grid, x_index, sched),
            1.0, sched.tail_starts)
    else:
        conclusion_ok = ge_with_tol(lhs, limit_at_x, sched.tol)
    margin = sub_conv(lhs, limit_at_x)
    stage_concl = Stage(
        "lower-epi-limit-bound", conclusion_ok,
        {"liminf": lhs, "limit": limit_at_x,
         "trend": tail_trend(expect[:, x_index], sched.tail_starts)},
        () if conclusion_ok else ({"point": x_index, "liminf": lhs,
                                   "limit": limit_at_x},),
    )

    hypotheses_ok = stage_weak.ok and stage_ui.ok and stage_joint.ok
    return DiagnosticReport(
        name="parametric-fatou-weak-route",
        verdict=combine_verdict(hypotheses_ok, conclusion_ok),
        lhs=lhs,
        rhs=limit_at_x,
        margin=margin,
        witnesses=stage_concl.witnesses if not conclusion_ok else (),
        schedules_used=sched.to_json_dict(),
        stages=(stage_weak, stage_ui, stage_joint, stage_concl),
    )


# --- extended Fatou for sequences of sample-space functions -------------------


def fatou_extended(h_items: np.ndarray, measures: Sequence[DiscreteMeasure],
                   limit_measure: DiscreteMeasure, xi_grid: MetricGrid,
                   schedules: Schedules) -> DiagnosticReport:
    """Lower limit of expectations versus expectation of the joint liminf.

    Gate: asymptotic uniform integrability from below over the cutoff
    schedule.  Also asserts the dichotomy: a finite left side forces the
    positive part of the joint lower limit to integrate finitely.
    """
    h_items = np.asarray(h_items, dtype=float)
    n = h_items.shape[0]
    tail0 = min(schedules.last_tail_start, n - 1)

    gate_vals = {}
    for cutoff in schedules.cutoffs:
        seq = [_scalar_tail_expectation(h_items[k], measures[k], cutoff,
                                        below=True) for k in range(n)]
        gate_vals[cutoff] = tail_inf(seq, tail0)
    depth_seq = [
        float(h_items[k][measures[k].support[measures[k].weights > 0]].min())
        for k in range(n)
    ]
    gate_ok, gate_detail = _below_gate(gate_vals, depth_seq, schedules)
    stage_gate = Stage(
        "uniform-integrability-below", gate_ok, gate_detail,
        () if gate_ok else ({"value": gate_vals[schedules.cutoffs[-1]]},),
    )

    e_seq = [float(expectation_values(h_items[k][:, None], measures[k])[0])
             for k in range(n)]
    lhs = tail_inf(e_seq, tail0)
    joint = np.array([
        joint_liminf(h_items, xi_grid, atom, schedules.xi_radii,
                     schedules.tail_starts)
        for atom in range(len(xi_grid))
    ])
    rhs = float(expectation_values(joint[:, None], limit_measure)[0])
    conclusion_ok = ge_with_tol(lhs, rhs, schedules.tol)
    stage_concl = Stage(
        "fatou-inequality", conclusion_ok,
        {"lhs": lhs, "rhs": rhs, "trend": tail_trend(e_seq, schedules.tail_starts)},
        () if conclusion_ok else ({"lhs": lhs, "rhs": rhs},),
    )

    plus = np.array([plus_part(v) for v in joint])
    plus_expect = float(expectation_values(plus[:, None], limit_measure)[0])
    dichotomy_ok = (lhs == INF) or (plus_expect < INF)
    stage_dich = Stage(
        "finite-positive-part-dichotomy", dichotomy_ok,
        {"lhs": lhs, "positive_part_expectation": plus_expect},
        () if dichotomy_ok else ({"lhs": lhs,
                                  "positive_part_expectation": plus_expect},),
    )

    conclusion = conclusion_ok and dichotomy_ok
    return DiagnosticReport(
        name="extended-fatou-lower",
        verdict=combine_verdict(gate_ok, conclusion),
        lhs=lhs,
        rhs=rhs,
        margin=sub_conv(lhs, rhs),
        witnesses=stage_concl.witnesses + stage_dich.witnesses
        if not conclusion else (),
        schedules_used=schedules.to_json_dict(),
        stages=(stage_gate, stage_concl, stage_dich),
    )


def fatou_upper(h_items: np.ndarray, measures: Sequence[DiscreteMeasure],
                limit_measure: DiscreteMeasure, xi_grid: MetricGrid,
                schedules: Schedules) -> DiagnosticReport:
    """Upper mirror: limsup of expectations below expectation of the limsup."""
    h_items = np.asarray(h_items, dtype=float)
    n = h_items.shape[0]
    tail0 = min(schedules.last_tail_start, n - 1)

    gate_vals = {}
    for cutoff in schedules.cutoffs:
        seq = [_scalar_tail_expectation(h_items[k], measures[k], cutoff,
                                        below=False) for k in range(n)]
        gate_vals[cutoff] = tail_sup(seq, tail0)
    height_seq = [
        float(h_items[k][measures[k].support[measures[k].weights > 0]].max())
        for k in range(n)
    ]
    gate_ok, gate_detail = _above_gate(gate_vals, height_seq, schedules)
    stage_gate = Stage(
        "uniform-integrability-above", gate_ok, gate_detail,
        () if gate_ok else ({"value": gate_vals[schedules.cutoffs[-1]]},),
    )

    e_seq = [float(expectation_values(h_items[k][:, None], measures[k])[0])
             for k in range(n)]
    lhs = tail_sup(e_seq, tail0)
    joint = np.array([
        joint_limsup(h_items, xi_grid, atom, schedules.xi_radii,
                     schedules.tail_starts)
        for atom in range(len(xi_grid))
    ])
    rhs = float(expectation_values(joint[:, None], limit_measure)[0])
    conclusion_ok = ge_with_tol(rhs, lhs, schedules.tol)
    stage_concl = Stage(
        "fatou-inequality", conclusion_ok,
        {"lhs": lhs, "rhs": rhs},
        () if conclusion_ok else ({"lhs": lhs, "rhs": rhs},),
    )

    minus_expect = float(expectation_values(
        np.minimum(joint, 0.0)[:, None], limit_measure)[0])
    dichotomy_ok = (lhs == NEG_INF) or (minus_expect > NEG_INF)
    stage_dich = Stage(
        "finite-negative-part-dichotomy", dichotomy_ok,
        {"lhs": lhs, "negative_part_expectation": minus_expect},
        () if dichotomy_ok else ({"lhs": lhs},),
    )

    conclusion = conclusion_ok and dichotomy_ok
    return DiagnosticReport(
        name="extended-fatou-upper",
        verdict=combine_verdict(gate_ok, conclusion),
        lhs=lhs,
        rhs=rhs,
        margin=sub_conv(rhs, lhs),
        witnesses=stage_concl.witnesses + stage_dich.witnesses
        if not conclusion else (),
        schedules_used=schedules.to_json_dict(),
        stages=(stage_gate, stage_concl, stage_dich),
    )


def _scalar_tail_expectation(values: np.ndarray, p: DiscreteMeasure,
                             cutoff: float, below: bool) -> float:
    vals = values[p.support]
    event = (vals <= -cutoff) if below else (vals >= cutoff)
    event &= p.weights > 0.0
    if not event.any():
        return 0.0
    return float((p.weights[event] * vals[event]).sum())


# --- epi-convergence, weak route ----------------------------------------------


def epi_convergence_weak(scheme: ApproximationScheme,
                         recovery: np.ndarray | None = None,
                         ) -> DiagnosticReport:
    """Epi-convergence of expectation functions, weak-convergence route.

    Liminf hypotheses are those of the weak-route Fatou bound at every
    point.  For each point with a finite limit expectation a recovery
    sequence must satisfy the upper tail condition and the joint upper
    limit bound at every positive atom; the constant sequence is tried
    first, then a scheduled ball search.  The conclusion is the two-leg
    epi-convergence check of the expectation functions.
    """
    sched = scheme.schedules
    n_x = len(scheme.x_grid)
    expect = scheme.expectation_matrix()
    limit_expect = scheme.limit_expectation()

    stage_weak = _weak_convergence_stage(scheme)

    tails = _tails_by_cutoff(scheme)
    ui_witnesses: list[dict] = []
    joint_witnesses: list[dict] = []
    liminf_witnesses: list[dict] = []
    for x in range(n_x):
        st = _uniform_integrability_below_stage(scheme, x, tails)
        ui_witnesses.extend(st.witnesses)
        st = _lower_joint_continuity_stage(scheme, x)
        joint_witnesses.extend(st.witnesses)
        if float(limit_expect[x]) == INF:
            ok_here = _diverges_to(
                _finest_ball_minima(expect, scheme.x_grid, x, sched),
                1.0, sched.tail_starts)
            if not ok_here:
                liminf_witnesses.append({"point": x, "limit": INF,
                                         "issue": "no-upward-divergence"})
            continue
        lhs = joint_liminf(expect, scheme.x_grid, x, sched.x_radii,
                           sched.tail_starts)
        if not ge_with_tol(lhs, float(limit_expect[x]), sched.tol):
            liminf_witnesses.append({"point": x, "liminf": lhs,
                                     "limit": float(limit_expect[x])})
    stage_ui = Stage("uniform-integrability-below", not ui_witnesses, {},
                     tuple(ui_witnesses))
    stage_joint = Stage("joint-lower-limit-at-atoms", not joint_witnesses, {},
                        tuple(joint_witnesses))

    recovery_witnesses: list[dict] = []
    recovery_sources: dict[int, str] = {}
    for x in range(n_x):
        if float(limit_expect[x]) == INF:
            recovery_sources[x] = "vacuous(+inf)"
            continue
        if recovery is not None:
            paths = [np.asarray(recovery)[x]]
            labels = ["supplied"]
        else:
            constant = np.full(len(scheme), x, dtype=int)
            searched, _ = _recovery_search(expect, scheme.x_grid, x,
                                           float(limit_expect[x]), sched,
                                           scheme.x_grid.spacing)
            paths = [constant, np.asarray(searched, dtype=int)]
            labels = ["constant", "ball-search"]
        problems = None
        for path, label in zip(paths, labels):
            problems = _recovery_leg_problems(scheme, x, path)
            if not problems:
                recovery_sources[x] = label
                break
        if problems:
            recovery_sources[x] = "none"
            recovery_witnesses.extend(problems)
    stage_recovery = Stage(
        "recovery-hypotheses", not recovery_witnesses,
        {"sources": {str(k): v for k, v in recovery_sources.items()}},
        tuple(recovery_witnesses),
    )

    epi = check_epi_convergence(expect, limit_expect, scheme.x_grid, sched)
    conclusion_ok = epi.verdict == PASS

    hypotheses_ok = (stage_weak.ok and stage_ui.ok and stage_joint.ok
                     and stage_recovery.ok and not liminf_witnesses)
    witnesses = epi.witnesses or tuple(
        ui_witnesses + joint_witnesses + recovery_witnesses + liminf_witnesses)
    return DiagnosticReport(
        name="epi-convergence-weak-route",
        verdict=combine_verdict(hypotheses_ok, conclusion_ok),
        lhs=epi.lhs,
        rhs=epi.rhs,
        margin=epi.margin,
        witnesses=witnesses if not conclusion_ok else (),
        schedules_used=sched.to_json_dict(),
        stages=(stage_weak, stage_ui, stage_joint, stage_recovery) + epi.stages,
    )


def _recovery_leg_problems(scheme: ApproximationScheme, x: int,
                           path: np.ndarray) -> list[dict]:
    """Both recovery hypotheses along a candidate sequence of points."""
    sched = scheme.schedules
    n = len(scheme)
    tail0 = min(sched.last_tail_start, n - 1)
    problems = []

    per_cutoff = {}
    for cutoff in sched.cutoffs:
        seq = [
            _scalar_tail_expectation(
                scheme.integrands.items[k].values[:, int(path[k])],
                scheme.measures[k], cutoff, below=False)
            for k in range(n)
        ]
        per_cutoff[cutoff] = tail_sup(seq, tail0)
    top = per_cutoff[sched.cutoffs[-1]]
    if not ge_with_tol(0.0, top, sched.tol):
        problems.append({"point": x, "issue": "upper-tail-condition",
                         "value": top})

    moved = np.stack([
        scheme.integrands.items[k].values[:, int(path[k])] for k in range(n)
    ])
    for atom in scheme.positive_atoms():
        lhs = joint_limsup(moved, scheme.xi_grid, int(atom), sched.xi_radii,
                           sched.tail_starts)
        rhs = scheme.integrands.limit.value(int(atom), x)
        if not ge_with_tol(rhs, lhs, sched.tol):
            problems.append({"point": x, "issue": "joint-upper-limit",
                             "atom": int(atom), "limsup": lhs, "limit": rhs})
    return problems


# --- epi-distance and minimizer transfer ---------------------------------------


def attouch_wets_distance(h1: np.ndarray, h2: np.ndarray, grid: MetricGrid,
                          rho: float, origin_index: int | None = None,
                          alpha_step: float | None = None) -> float:
    """Bounded-region sup difference of distances to the two epigraphs.

    Test points are grid points within ``rho`` of the origin crossed with
    a value grid on [-rho, rho]; epigraph distances combine horizontal
    grid distance and vertical exceedance in quadrature.  An empty
    epigraph sits at distance ``+inf``; the difference then saturates at
    ``2 * rho``.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    h1 = np.asarray(h1, dtype=float)
    h2 = np.asarray(h2, dtype=float)
    if origin_index is None:
        norms = np.sqrt((grid.points ** 2).sum(axis=1))
        origin_index = int(np.argmin(norms))
    test_points = grid.ball(origin_index, rho)

    finite_vals = np.concatenate([h1[np.isfinite(h1)], h2[np.isfinite(h2)]])
    if alpha_step is None:
        span = float(np.ptp(finite_vals)) if finite_vals.size else 0.0
        alpha_step = min(span / 200.0, rho) if span > 0 else rho / 100.0
    n_alpha = max(2, int(np.floor(2 * rho / alpha_step)) + 1)
    alphas = np.linspace(-rho, rho, n_alpha)

    dist_rows = grid.distances[test_points, :]
    worst = 0.0
    for alpha in alphas:
        d1 = _epigraph_distances(dist_rows, h1, alpha)
        d2 = _epigraph_distances(dist_rows, h2, alpha)
        both_inf = np.isinf(d1) & np.isinf(d2)
        one_inf = np.isinf(d1) ^ np.isinf(d2)
        gap = np.zeros_like(d1)
        finite = ~np.isinf(d1) & ~np.isinf(d2)
        gap[finite] = np.abs(d1[finite] - d2[finite])
        gap[one_inf] = 2.0 * rho
        gap[both_inf] = 0.0
        worst = max(worst, float(gap.max(initial=0.0)))
    return worst


def _epigraph_distances(dist_rows: np.ndarray, h: np.ndarray,
                        alpha: float) -> np.ndarray:
    vertical = np.maximum(h - alpha, 0.0)  # -inf values clamp to 0
    vertical = np.where(h == INF, INF, vertical)
    with np.errstate(invalid="ignore"):
        cand = np.hypot(dist_rows, vertical[None, :])
    return cand.min(axis=1)


def check_minimizer_transfer(items: np.ndarray, limit: np.ndarray,
                             grid: MetricGrid, schedules: Schedules,
                             value_tol: float | None = None,
                             ) -> DiagnosticReport:
    """Minimum values and minimizers transfer along the sequence.

    At the last level the minimum must match the limit minimum within
    tolerance, and every tail argmin must lie within one grid spacing of
    the limit's argmin set.  Reported as hypothesis-unverified when the
    limit has no finite minimum.
    """
    items = np.asarray(items, dtype=float)
    limit = np.asarray(limit, dtype=float)
    tol = schedules.tol if value_tol is None else value_tol
    limit_min = float(limit.min())
    if not np.isfinite(limit_min):
        return DiagnosticReport(
            name="minimizer-transfer",
            verdict=HYPOTHESIS_UNVERIFIED,
            lhs=limit_min, rhs=limit_min, margin=0.0,
            schedules_used=schedules.to_json_dict(),
            stages=(Stage("finite-limit-minimum", False,
                          {"limit_min": limit_min}),),
        )
    limit_argmin = np.flatnonzero(limit <= limit_min + 1e-12)

    tail0 = min(schedules.last_tail_start, items.shape[0] - 1)
    last_min = float(items[-1].min())
    value_ok = ext_close(last_min, limit_min, tol)

    cluster_witnesses = []
    spacing = grid.spacing or 0.0
    for level in range(tail0, items.shape[0]):
        level_min = items[level].min()
        argmins = np.flatnonzero(items[level] <= level_min + 1e-12)
        for am in argmins:
            gap = float(grid.distances[am, limit_argmin].min())
            if gap > spacing + 1e-12:
                cluster_witnesses.append({"level": int(level),
                                          "argmin": int(am), "gap": gap})
    cluster_ok = not cluster_witnesses
    stages = (
        Stage("finite-limit-minimum", True, {"limit_min": limit_min}),
        Stage("minimum-value-transfer", value_ok,
              {"last_min": last_min, "limit_min": limit_min}),
        Stage("argmin-cluster-containment", cluster_ok, {},
              tuple(cluster_witnesses)),
    )
    ok = value_ok and cluster_ok
    witnesses = tuple(cluster_witnesses)
    if not value_ok:
        witnesses += ({"issue": "minimum-gap", "last_min": last_min,
                       "limit_min": limit_min},)
    return DiagnosticReport(
        name="minimizer-transfer",
        verdict=combine_verdict(True, ok),
        lhs=last_min,
        rhs=limit_min,
        margin=-abs(sub_conv(last_min, limit_min)) if ok else
        sub_conv(last_min, limit_min),
        witnesses=witnesses if not ok else (),
        schedules_used=schedules.to_json_dict(),
        stages=stages,
    )
