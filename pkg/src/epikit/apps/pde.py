"""Two-point boundary-value problem under mesh refinement and sampling.

The state solves ``-u'' = xi * sin(pi t)`` on [0, 1] with Dirichlet data
scaled by the control; the quantity of interest integrates the squared
state plus a control cost.  Numerical solutions on refining meshes give
the approximating integrands; the reference solution lives on a mesh four
times finer than the finest scheduled one, and the single analytic case
pins the discretization order independently.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import pi
from typing import Sequence

import numpy as np
from scipy.linalg import solve_banded

from ..epi import (ApproximationScheme, attouch_wets_distance,
                   check_epi_convergence, check_minimizer_transfer)
from ..integrand import Integrand, IntegrandSequence, expectation_function
from ..report import DiagnosticReport, Stage, combine_verdict
from ..schedules import Schedules
from ..space import DiscreteMeasure, MetricGrid
from .common import AppResult, stratified_counts, substream

_APP_TAG = 43


@dataclass(frozen=True)
class PdeProblem:
    """Meshes, sample law, control grid, and sampling mode."""

    mesh_sizes: tuple[int, ...] = (8, 16, 32, 64)
    reference_refinement: int = 4
    atom_values: tuple[float, ...] = (0.5, 1.0, 1.5)
    atom_weights: tuple[float, ...] = (0.25, 0.5, 0.25)
    sample_counts: tuple[int, ...] = (256, 1024, 4096, 16384)
    x_min: float = 0.0
    x_max: float = 2.0
    n_x: int = 21
    control_cost: float = 0.1
    lift: tuple[float, float] = (0.0, 0.0)
    sampling: str = "stratified"
    seed: int = 0
    rho: float = 2.0

    def __post_init__(self) -> None:
        if any(b <= a for a, b in zip(self.mesh_sizes, self.mesh_sizes[1:])):
            raise ValueError("mesh sizes must be strictly increasing")
        if any(n < 4 for n in self.mesh_sizes):
            raise ValueError("meshes need at least 3 interior points")
        if len(self.sample_counts) != len(self.mesh_sizes):
            raise ValueError("one sample count per mesh")
        if self.sampling not in ("stratified", "iid"):
            raise ValueError("sampling must be 'stratified' or 'iid'")


def solve_state(n: int, xi: float, x: float,
                lift: tuple[float, float] = (0.0, 0.0)) -> np.ndarray:
    """Second-order finite differences for the reference two-point problem."""
    h = 1.0 / n
    t = np.linspace(0.0, 1.0, n + 1)
    rhs = xi * np.sin(pi * t[1:-1]) * h * h
    left, right = x * lift[0], x * lift[1]
    rhs[0] += left
    rhs[-1] += right
    bands = np.zeros((3, n - 1))
    bands[0, 1:] = -1.0
    bands[1, :] = 2.0
    bands[2, :-1] = -1.0
    interior = solve_banded((1, 1), bands, rhs)
    return np.concatenate([[left], interior, [right]])


def exact_state(xi: float, t: np.ndarray) -> np.ndarray:
    return xi * np.sin(pi * t) / (pi * pi)


def _trapezoid_of_square(u: np.ndarray) -> float:
    h = 1.0 / (u.size - 1)
    sq = u * u
    return float(h * (0.5 * sq[0] + sq[1:-1].sum() + 0.5 * sq[-1]))


def run_pde(problem: PdeProblem) -> AppResult:
    x_grid = MetricGrid.uniform_1d(problem.x_min, problem.x_max, problem.n_x)
    xs = x_grid.points[:, 0]
    xi_grid = MetricGrid(np.asarray(problem.atom_values)[:, None])
    weights = np.asarray(problem.atom_weights, dtype=float)
    p = DiscreteMeasure(xi_grid, range(len(xi_grid)), weights)
    n_levels = len(problem.mesh_sizes)
    ref_n = problem.reference_refinement * problem.mesh_sizes[-1]
    ref_t = np.linspace(0.0, 1.0, ref_n + 1)

    def table_for_mesh(n: int) -> np.ndarray:
        out = np.empty((len(xi_grid), len(xs)))
        for i, xi in enumerate(xi_grid.points[:, 0]):
            for j, x in enumerate(xs):
                u = solve_state(n, float(xi), float(x), problem.lift)
                out[i, j] = (_trapezoid_of_square(u)
                             + problem.control_cost * x * x)
        return out

    tables = [table_for_mesh(n) for n in problem.mesh_sizes]
    limit_table = table_for_mesh(ref_n)

    measures = []
    for k, (n, count) in enumerate(zip(problem.mesh_sizes,
                                       problem.sample_counts)):
        rng = substream(_APP_TAG, problem.seed, n)
        if problem.sampling == "stratified":
            counts = stratified_counts(weights, count, rng)
        else:
            draws = rng.choice(len(xi_grid), size=count, p=weights)
            counts = np.bincount(draws, minlength=len(xi_grid))
        measures.append(DiscreteMeasure.from_dense(xi_grid, counts / count))

    sched = Schedules.defaults(
        x_grid, xi_grid, n_levels,
        lipschitz_estimate=2 * problem.control_cost * problem.x_max + 0.5)
    scheme = ApproximationScheme(
        IntegrandSequence(tuple(Integrand(xi_grid, x_grid, t) for t in tables),
                          Integrand(xi_grid, x_grid, limit_table)),
        tuple(measures), p, sched)

    # hypothesis: solutions converge continuously to the reference solution
    solution_gaps = {}
    for i, xi in enumerate(xi_grid.points[:, 0]):
        ref_u = solve_state(ref_n, float(xi), float(xs[0]), problem.lift)
        gaps = []
        for n in problem.mesh_sizes:
            u = solve_state(n, float(xi), float(xs[0]), problem.lift)
            interp = np.interp(ref_t, np.linspace(0.0, 1.0, n + 1), u)
            gaps.append(float(np.max(np.abs(interp - ref_u))))
        solution_gaps[float(xi)] = gaps
    gap_orders = [
        float(np.log2(g[k] / g[k + 1]))
        for g in solution_gaps.values() if min(g) > 0
        for k in range(len(g) - 1)
    ]
    cc_ok = all(g[-1] <= g[0] for g in solution_gaps.values()) and (
        not gap_orders or min(gap_orders) >= 1.5)
    stage_cc = Stage("continuous-convergence-of-solutions", cc_ok,
                     {"gaps": {str(k): v for k, v in solution_gaps.items()},
                      "orders": gap_orders})

    # hypotheses (ii)/(iv): tails vacuous for a bounded quantity of interest
    all_values = np.concatenate([t.ravel() for t in tables])
    lo, hi = float(all_values.min()), float(all_values.max())
    vacuous = lo > -sched.cutoffs[0] and hi < sched.cutoffs[0]
    stage_tails = Stage(
        "tail-conditions", vacuous or (hi < sched.cutoffs[-1]
                                       and lo > -sched.cutoffs[-1]),
        {"value_range": [lo, hi], "vacuously_zero": vacuous},
    )

    # analytic order at the unit parameter
    analytic_errors = []
    for n in problem.mesh_sizes:
        t = np.linspace(0.0, 1.0, n + 1)
        u = solve_state(n, 1.0, 0.0, problem.lift)
        analytic_errors.append(float(np.max(np.abs(u - exact_state(1.0, t)))))
    analytic_orders = [
        float(np.log2(a / b))
        for a, b in zip(analytic_errors, analytic_errors[1:])
    ]
    order_ok = min(analytic_orders) >= 1.9
    stage_order = Stage("analytic-discretization-order", order_ok,
                        {"errors": analytic_errors, "orders": analytic_orders},
                        () if order_ok else (
                            {"orders": analytic_orders},))

    expect = scheme.expectation_matrix()
    limit_expect = scheme.limit_expectation()
    epi_report = check_epi_convergence(expect, limit_expect, x_grid, sched,
                                       name="pde-epi-convergence")
    transfer = check_minimizer_transfer(expect, limit_expect, x_grid, sched)

    aw = [attouch_wets_distance(expect[k], limit_expect, x_grid, problem.rho)
          for k in range(n_levels)]
    aw_ok = all(b < a for a, b in zip(aw, aw[1:]))
    stage_aw = Stage("epi-distance-decay", aw_ok, {"distances": aw},
                     () if aw_ok else ({"distances": aw},))

    trace = []
    for k, n in enumerate(problem.mesh_sizes):
        trace.append({
            "mesh": n,
            "samples": problem.sample_counts[k],
            "analytic_error": analytic_errors[k],
            "observed_order": analytic_orders[k - 1] if k else float("nan"),
            "aw_distance": aw[k],
            "expectation_gap": float(np.max(np.abs(expect[k] - limit_expect))),
            "minimizer": float(xs[int(np.argmin(expect[k]))]),
        })

    hypotheses_ok = stage_cc.ok and stage_tails.ok
    conclusion_ok = (order_ok and aw_ok and epi_report.verdict == "pass"
                     and transfer.verdict == "pass")
    headline = DiagnosticReport(
        name="pde-app",
        verdict=combine_verdict(hypotheses_ok, conclusion_ok),
        lhs=float(min(analytic_orders)),
        rhs=1.9,
        margin=float(min(analytic_orders)) - 1.9,
        witnesses=() if conclusion_ok else (
            {"orders": analytic_orders, "aw_distances": aw},),
        schedules_used=sched.to_json_dict(),
        stages=(stage_cc, stage_tails, stage_order, stage_aw)
        + epi_report.stages,
        seed=problem.seed,
    )
    return AppResult(
        name="pde",
        report=headline,
        reports={"epi": epi_report, "minimizer_transfer": transfer},
        trace=tuple(trace),
        scheme=scheme,
        config_used={
            "mesh_sizes": list(problem.mesh_sizes),
            "reference_mesh": ref_n,
            "sample_counts": list(problem.sample_counts),
            "sampling": problem.sampling,
            "seed": problem.seed,
            "rho": problem.rho,
        },
    )
