"""Expectation constraints handled by a growing penalty.

Reference instance: minimize ``x^2`` subject to ``E[xi - x] <= 0`` where
the sample law has mean ``m``, so the constraint is ``x >= m`` and the
solution is ``max(0, m)`` in closed form.  The penalized objectives
``x^2 + theta_nu * max(0, E_nu[xi - x])`` are checked for epi-convergence
to the indicator-constrained objective, including the two-case recovery
construction through strictly feasible neighbors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..epi import (ApproximationScheme, check_epi_convergence,
                   check_minimizer_transfer)
from ..extreal import INF
from ..integrand import Integrand, IntegrandSequence, expectation_function
from ..report import DiagnosticReport, Stage, combine_verdict
from ..schedules import Schedules, window_infima
from ..space import DiscreteMeasure, MetricGrid, bounded_lipschitz_distance
from .common import AppResult, substream

_APP_TAG = 44


@dataclass(frozen=True)
class PenaltyProblem:
    """Configuration of the expectation-constraint reference problem."""

    mean: float = 1.0
    x_min: float = -2.0
    x_max: float = 2.0
    n_x: int = 81
    atom_offsets: tuple[float, ...] = (-0.5, 0.0, 0.5)
    atom_weights: tuple[float, ...] = (0.25, 0.5, 0.25)
    nus: tuple[int, ...] = tuple(2 ** k for k in range(13))
    seed: int = 0
    exact_measures: bool = False

    def __post_init__(self) -> None:
        if len(self.atom_offsets) != len(self.atom_weights):
            raise ValueError("offsets and weights must pair up")
        if abs(sum(self.atom_weights) - 1.0) > 1e-12:
            raise ValueError("atom weights must sum to 1")
        mean_offset = sum(w * o for w, o in zip(self.atom_weights,
                                                self.atom_offsets))
        if abs(mean_offset) > 1e-12:
            raise ValueError("atom offsets must center the law on the mean")
        if any(nu <= 0 for nu in self.nus):
            raise ValueError("penalty levels must be positive")


def run_penalty(problem: PenaltyProblem) -> AppResult:
    x_grid = MetricGrid.uniform_1d(problem.x_min, problem.x_max, problem.n_x)
    xs = x_grid.points[:, 0]
    spacing = x_grid.spacing
    xi_grid = MetricGrid(
        np.asarray([problem.mean + o for o in problem.atom_offsets])[:, None])
    p = DiscreteMeasure(xi_grid, range(len(xi_grid)),
                        np.asarray(problem.atom_weights))

    constraint = Integrand.from_callable(
        xi_grid, x_grid, lambda xi, x: xi[0] - x[0])
    n_levels = len(problem.nus)
    measures = []
    for k, nu in enumerate(problem.nus):
        if problem.exact_measures:
            measures.append(p)
        else:
            rng = substream(_APP_TAG, problem.seed, nu)
            draws = rng.choice(len(xi_grid), size=nu, p=p.weights)
            measures.append(DiscreteMeasure.empirical(xi_grid, draws))

    sched = Schedules.defaults(x_grid, xi_grid, n_levels,
                               lipschitz_estimate=1.0)
    scheme = ApproximationScheme(
        IntegrandSequence(tuple([constraint] * n_levels), constraint),
        tuple(measures), p, sched)

    objective = xs ** 2
    e_limit = expectation_function(constraint, p)
    e_matrix = np.stack([expectation_function(constraint, m)
                         for m in measures])
    phi_limit = np.where(e_limit <= 0.0, objective, INF)
    phi_matrix = np.stack([
        objective + nu * np.maximum(0.0, e_matrix[k])
        for k, nu in enumerate(problem.nus)
    ])

    phi_sched = Schedules.defaults(
        x_grid, xi_grid, n_levels,
        lipschitz_estimate=float(np.max(np.abs(2 * xs))))
    feas_tol = 1e-9
    cq_stage = _constraint_qualification_stage(e_limit, x_grid, feas_tol)
    recovery_stage = _boundary_recovery_stage(
        phi_matrix, phi_limit, e_matrix, e_limit, x_grid, phi_sched, feas_tol)
    epi_report = check_epi_convergence(
        phi_matrix, phi_limit, x_grid, phi_sched,
        name="penalty-epi-convergence",
        recovery_radius_floor=2.0 * spacing)
    transfer = check_minimizer_transfer(phi_matrix, phi_limit, x_grid,
                                        phi_sched)

    trace = []
    for k, nu in enumerate(problem.nus):
        minimizer_idx = int(np.argmin(phi_matrix[k]))
        violation = float(max(0.0, e_matrix[k][minimizer_idx]))
        trace.append({
            "nu": nu,
            "theta": float(nu),
            "minimizer": float(xs[minimizer_idx]),
            "value": float(phi_matrix[k][minimizer_idx]),
            "violation": violation,
            "bl_distance": bounded_lipschitz_distance(measures[k], p),
            "empirical_mean": float(np.dot(
                measures[k].weights,
                xi_grid.points[measures[k].support, 0])),
        })

    solution = max(0.0, problem.mean)
    final = trace[-1]
    near_ok = abs(final["minimizer"] - solution) <= 2 * spacing + 1e-12
    violations = [row["violation"] for row in trace]
    v_windows = window_infima([-v for v in violations], sched.tail_starts)
    trend_ok = all(b >= a - 1e-9 for a, b in zip(v_windows, v_windows[1:]))
    decay_stage = Stage(
        "violation-decay", trend_ok and final["violation"] <= 1e-3,
        {"violations": violations, "closed_form_solution": solution,
         "final_minimizer": final["minimizer"]},
        () if trend_ok and final["violation"] <= 1e-3 else (
            {"final_violation": final["violation"]},),
    )
    minimizer_stage = Stage(
        "minimizer-near-solution", near_ok,
        {"solution": solution, "final_minimizer": final["minimizer"],
         "spacing": spacing},
        () if near_ok else ({"final_minimizer": final["minimizer"]},),
    )

    hypotheses_ok = cq_stage.ok
    conclusion_ok = (epi_report.verdict == "pass" and recovery_stage.ok
                     and decay_stage.ok and near_ok)
    headline = DiagnosticReport(
        name="penalty-app",
        verdict=combine_verdict(hypotheses_ok, conclusion_ok),
        lhs=final["minimizer"],
        rhs=solution,
        margin=2 * spacing - abs(final["minimizer"] - solution),
        witnesses=() if conclusion_ok else (
            {"final_minimizer": final["minimizer"], "solution": solution,
             "final_violation": final["violation"]},),
        schedules_used=phi_sched.to_json_dict(),
        stages=(cq_stage, recovery_stage, decay_stage, minimizer_stage)
        + epi_report.stages,
        seed=problem.seed,
    )
    return AppResult(
        name="penalty",
        report=headline,
        reports={"epi": epi_report, "minimizer_transfer": transfer},
        trace=tuple(trace),
        scheme=scheme,
        config_used=_config_dict(problem),
    )


def _constraint_qualification_stage(e_limit: np.ndarray, x_grid: MetricGrid,
                                    tol: float) -> Stage:
    """Boundary-feasible points need a strictly feasible grid neighbor."""
    spacing = x_grid.spacing
    witnesses = []
    boundary = []
    for i in np.flatnonzero(np.abs(e_limit) <= tol):
        boundary.append(int(i))
        neighbors = [j for j in x_grid.ball(int(i), 1.5 * spacing)
                     if j != i]
        if not any(e_limit[j] < -tol for j in neighbors):
            witnesses.append({"point": int(i), "issue": "no-feasible-neighbor"})
    return Stage("constraint-qualification", not witnesses,
                 {"boundary_points": boundary}, tuple(witnesses))


def _boundary_recovery_stage(phi_matrix: np.ndarray, phi_limit: np.ndarray,
                             e_matrix: np.ndarray, e_limit: np.ndarray,
                             x_grid: MetricGrid, sched: Schedules,
                             feas_tol: float) -> Stage:
    """The two-case recovery construction, searched on the grid.

    Interior-feasible points are their own first candidate; boundary
    points walk through the nearest strictly feasible point.  At every
    tail level the chosen point must also be accepted by that level's
    empirical constraint, keeping the penalty term silent.
    """
    n_levels, n_points = phi_matrix.shape
    tail0 = min(sched.last_tail_start, n_levels - 1)
    tol = sched.tol
    strictly = np.flatnonzero(e_limit < -feas_tol)
    witnesses = []
    cases = {}
    for x in range(n_points):
        if phi_limit[x] == INF:
            continue
        cases[x] = "interior" if e_limit[x] < -feas_tol else "boundary"
        if strictly.size == 0:
            witnesses.append({"point": x, "case": cases[x],
                              "issue": "no-strictly-feasible-point"})
            continue
        order = strictly[np.argsort(x_grid.distances[x, strictly],
                                    kind="stable")]
        bad_level = None
        for level in range(tail0, n_levels):
            accepted = [j for j in order if e_matrix[level, j] <= feas_tol]
            if not accepted:
                bad_level = {"point": x, "case": cases[x], "level": level,
                             "issue": "no-accepted-neighbor"}
                break
            y = int(accepted[0])
            if phi_matrix[level, y] > phi_limit[x] + tol:
                bad_level = {"point": x, "case": cases[x], "level": level,
                             "via": y,
                             "value": float(phi_matrix[level, y]),
                             "limit": float(phi_limit[x])}
                break
        if bad_level:
            witnesses.append(bad_level)
    return Stage("two-case-recovery", not witnesses,
                 {"cases": {str(k): v for k, v in cases.items()}},
                 tuple(witnesses))


def _config_dict(problem: PenaltyProblem) -> dict:
    return {
        "mean": problem.mean,
        "x_min": problem.x_min,
        "x_max": problem.x_max,
        "n_x": problem.n_x,
        "atom_offsets": list(problem.atom_offsets),
        "atom_weights": list(problem.atom_weights),
        "nus": list(problem.nus),
        "seed": problem.seed,
        "exact_measures": problem.exact_measures,
    }
