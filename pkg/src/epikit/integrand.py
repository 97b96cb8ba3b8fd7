"""Integrands, expectation functions, and semicontinuity diagnostics.

An integrand is a total map (sample point, decision point) -> extended
real, tabulated over a pair of grids.  Expectations follow the integral
convention: positive and negative parts are accumulated separately (in
fixed atom order) and combined once, so a measure putting mass on both
``+inf`` and ``-inf`` values integrates to ``+inf``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

from .extreal import (INF, NEG_INF, ge_with_tol, require_no_nan, sub_conv,
                      values_from_json, values_to_json)
from .report import DiagnosticReport, Stage, combine_verdict
from .schedules import (Schedules, joint_limsup, tail_inf, tail_trend)
from .space import SET_EPS_FRACTIONS, DiscreteMeasure, MetricGrid


class Integrand:
    """Tabulated integrand over a sample grid and a decision grid."""

    def __init__(self, xi_grid: MetricGrid, x_grid: MetricGrid,
                 values: np.ndarray | Sequence[Sequence[float]]) -> None:
        vals = require_no_nan(np.asarray(values, dtype=float), "integrand values")
        if vals.shape != (len(xi_grid), len(x_grid)):
            raise ValueError(
                f"values must be ({len(xi_grid)}, {len(x_grid)}), got {vals.shape}"
            )
        self.xi_grid = xi_grid
        self.x_grid = x_grid
        self.values = vals
        self.values.setflags(write=False)

    def value(self, xi_index: int, x_index: int) -> float:
        return float(self.values[xi_index, x_index])

    @classmethod
    def from_callable(cls, xi_grid: MetricGrid, x_grid: MetricGrid,
                      fn: Callable[[np.ndarray, np.ndarray], float]) -> "Integrand":
        """Tabulate ``fn(xi_coords, x_coords)`` over the grid product."""
        vals = np.empty((len(xi_grid), len(x_grid)))
        for i, xi in enumerate(xi_grid.points):
            for j, x in enumerate(x_grid.points):
                vals[i, j] = float(fn(xi, x))
        return cls(xi_grid, x_grid, vals)

    def to_json_dict(self, include_grids: bool = True) -> dict[str, Any]:
        out: dict[str, Any] = {"values": values_to_json(self.values)}
        if include_grids:
            out["xi_grid"] = self.xi_grid.to_json_dict()
            out["x_grid"] = self.x_grid.to_json_dict()
        return out

    @classmethod
    def from_json_dict(cls, obj: dict[str, Any],
                       xi_grid: MetricGrid | None = None,
                       x_grid: MetricGrid | None = None) -> "Integrand":
        xi = xi_grid if xi_grid is not None else MetricGrid.from_json_dict(obj["xi_grid"])
        x = x_grid if x_grid is not None else MetricGrid.from_json_dict(obj["x_grid"])
        return cls(xi, x, values_from_json(obj["values"]))


@dataclass(frozen=True)
class IntegrandSequence:
    """Approximating integrands plus their limit, on shared grids."""

    items: tuple[Integrand, ...]
    limit: Integrand

    def __post_init__(self) -> None:
        if not self.items:
            raise ValueError("need at least one approximating integrand")
        for k, f in enumerate(self.items):
            if f.xi_grid is not self.limit.xi_grid or f.x_grid is not self.limit.x_grid:
                raise ValueError(f"integrand {k} does not share the limit's grids")

    def __len__(self) -> int:
        return len(self.items)

    @property
    def xi_grid(self) -> MetricGrid:
        return self.limit.xi_grid

    @property
    def x_grid(self) -> MetricGrid:
        return self.limit.x_grid

    def matrices(self) -> list[np.ndarray]:
        return [f.values for f in self.items]


def expectation_values(values: np.ndarray, p: DiscreteMeasure) -> np.ndarray:
    """Expectation of each column of ``values`` (rows = sample atoms).

    Positive and negative parts are weighted and summed separately in atom
    order, then combined with the +inf-dominant subtraction.  Atoms of
    weight zero are dropped first, so they contribute nothing even where
    the integrand is infinite.
    """
    values = np.asarray(values, dtype=float)
    alive = p.weights > 0.0
    w = p.weights[alive][:, None]
    rows = values[p.support[alive], :]
    s_plus = (w * np.maximum(rows, 0.0)).sum(axis=0)
    s_minus = (w * np.maximum(-rows, 0.0)).sum(axis=0)
    out = np.where(s_plus == INF, INF, np.where(s_minus == INF, NEG_INF, 0.0))
    finite = (s_plus < INF) & (s_minus < INF)
    out[finite] = s_plus[finite] - s_minus[finite]
    return out


def expectation_function(f: Integrand, p: DiscreteMeasure) -> np.ndarray:
    """The expectation function over the whole decision grid."""
    if p.grid is not f.xi_grid:
        raise ValueError("measure must live on the integrand's sample grid")
    return expectation_values(f.values, p)


def expectation(f: Integrand, p: DiscreteMeasure, x_index: int) -> float:
    """Expectation of ``f(., x)`` under ``p``."""
    return float(expectation_function(f, p)[x_index])


def tail_expectation_below(f: Integrand, p: DiscreteMeasure, x_index: int,
                           cutoff: float) -> float:
    """Expectation restricted to the event ``f <= -cutoff`` (always <= 0)."""
    if cutoff <= 0:
        raise ValueError("cutoff must be positive")
    return _tail_expectation(f.values[:, x_index], p, cutoff, below=True)


def tail_expectation_above(f: Integrand, p: DiscreteMeasure, x_index: int,
                           cutoff: float) -> float:
    """Expectation restricted to the event ``f >= cutoff`` (always >= 0)."""
    if cutoff <= 0:
        raise ValueError("cutoff must be positive")
    return _tail_expectation(f.values[:, x_index], p, cutoff, below=False)


def _tail_expectation(column: np.ndarray, p: DiscreteMeasure, cutoff: float,
                      below: bool) -> float:
    vals = column[p.support]
    event = vals <= -cutoff if below else vals >= cutoff
    event &= p.weights > 0.0
    if not event.any():
        return 0.0
    contrib = p.weights[event] * vals[event]
    return float(contrib.sum())


def lower_regularize(h: np.ndarray, grid: MetricGrid,
                     radii: Sequence[float] | None = None) -> np.ndarray:
    """Scheduled surrogate of the largest lower-semicontinuous minorant.

    For each point, the minimum over the closed ball (center included) is
    taken for every scheduled radius and the largest such minimum kept.
    With the default sub-spacing schedule every grid point is isolated, so
    the operator is the identity; coarser schedules erode local minima.
    """
    h = require_no_nan(np.asarray(h, dtype=float), "grid function")
    if radii is None:
        spacing = grid.spacing or 1.0
        radii = [f * spacing for f in SET_EPS_FRACTIONS]
    out = np.full_like(h, -np.inf)
    for r in radii:
        for i in range(len(grid)):
            ball_min = float(h[grid.ball(i, r)].min())
            if ball_min > out[i]:
                out[i] = ball_min
    return out


def check_lsc(h: np.ndarray, grid: MetricGrid,
              radii: Sequence[float] | None = None) -> DiagnosticReport:
    """Whether ``h`` equals its scheduled lower regularization."""
    h = np.asarray(h, dtype=float)
    reg = lower_regularize(h, grid, radii)
    gaps = np.where(h == reg, 0.0, h - reg)
    witnesses = tuple(
        {"point": int(i), "value": float(h[i]), "regularized": float(reg[i])}
        for i in np.flatnonzero(gaps != 0.0)
    )
    ok = not witnesses
    return DiagnosticReport(
        name="lsc-check",
        verdict=combine_verdict(True, ok),
        lhs=float(np.max(gaps, initial=0.0)),
        rhs=0.0,
        margin=-float(np.max(gaps, initial=0.0)),
        witnesses=witnesses,
        schedules_used={"radii": list(radii) if radii is not None else "default"},
        stages=(Stage("regularization-fixed-point", ok),),
    )


def check_equi_lsc(fs: IntegrandSequence, p: DiscreteMeasure, x_index: int,
                   eps_list: Sequence[float], delta_list: Sequence[float],
                   tail_start: int = 0) -> DiagnosticReport:
    """Equi-lower-semicontinuity of ``f_k(., x)`` at every positive atom.

    For each tolerance in ``eps_list`` some neighborhood size in
    ``delta_list`` must satisfy ``f_k(zeta, x) > f_k(xi, x) - eps`` for all
    ``zeta`` in the open ball and all levels past the tail start.
    """
    mats = [f.values[:, x_index] for f in fs.items]
    n = len(mats)
    tail = range(min(tail_start, n - 1), n)
    witnesses = []
    for atom, weight in zip(p.support, p.weights):
        if weight <= 0.0:
            continue
        for eps in eps_list:
            found = False
            for delta in delta_list:
                members = fs.xi_grid.ball(int(atom), delta, open_ball=True)
                ok = all(
                    bool(np.all(mats[k][members] > mats[k][atom] - eps))
                    for k in tail
                )
                if ok:
                    found = True
                    break
            if not found:
                witnesses.append({"atom": int(atom), "eps": float(eps)})
    ok = not witnesses
    return DiagnosticReport(
        name="equi-lsc",
        verdict=combine_verdict(True, ok),
        lhs=float(len(witnesses)),
        rhs=0.0,
        margin=-float(len(witnesses)),
        witnesses=tuple(witnesses),
        schedules_used={"eps_list": list(eps_list), "delta_list": list(delta_list),
                        "tail_start": tail_start},
        stages=(Stage("equi-lsc", ok),),
    )


def semiconvergence_in_probability(fs: IntegrandSequence, p: DiscreteMeasure,
                                   x_index: int, eps: float,
                                   direction: str = "below") -> np.ndarray:
    """Probability of an eps-sized gap below (or above) the limit, per level.

    Lower semiconvergence in probability holds when the returned sequence
    decays to zero.  The gap event at an atom where the limit is ``+inf``
    (resp. ``-inf``) is "value finite or below" (resp. "value finite or
    above"); matching infinities are not gaps.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if direction not in ("below", "above"):
        raise ValueError("direction must be 'below' or 'above'")
    limit = fs.limit.values[p.support, x_index]
    weights = p.weights
    out = np.empty(len(fs))
    for k, f in enumerate(fs.items):
        vals = f.values[p.support, x_index]
        if direction == "below":
            event = np.where(limit == INF, vals < INF,
                             np.where(limit == NEG_INF, False, vals <= limit - eps))
        else:
            event = np.where(limit == NEG_INF, vals > NEG_INF,
                             np.where(limit == INF, False, vals >= limit + eps))
        out[k] = float(weights[event].sum())
    return out


def check_minorant_condition(fs: IntegrandSequence, gs: np.ndarray,
                             ps: Sequence[DiscreteMeasure], p: DiscreteMeasure,
                             x_center: int, rho: float,
                             schedules: Schedules) -> DiagnosticReport:
    """Sufficient condition for asymptotic uniform integrability from below.

    Stage (a): ``min(0, inf over the closed rho-ball in x of f_k(xi, .))``
    dominates ``g_k(xi)`` for all levels past the tail start and every
    sample point.  Stage (b): the limit-expectation sandwich
    ``-inf < E[limsup g_k] <= liminf E_k[g_k]`` with scheduled surrogates.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    gs = require_no_nan(np.asarray(gs, dtype=float), "minorant values")
    n = len(fs)
    if gs.shape != (n, len(fs.xi_grid)):
        raise ValueError("minorants must be (levels, xi points)")

    ball = fs.x_grid.ball(x_center, rho)
    tail0 = min(schedules.last_tail_start, n - 1)
    dominated_margin = INF
    witnesses_a = []
    for k in range(tail0, n):
        inf_over_ball = fs.items[k].values[:, ball].min(axis=1)
        lhs = np.minimum(0.0, inf_over_ball)
        gap = lhs - gs[k]
        gap = np.where(np.isnan(gap), 0.0, gap)  # matching infinities
        worst = float(gap.min())
        dominated_margin = min(dominated_margin, worst)
        if worst < -schedules.tol:
            bad = int(np.argmin(gap))
            witnesses_a.append({"level": k, "atom": bad, "gap": worst})
    stage_a = Stage("ball-infimum-dominates-minorant", not witnesses_a,
                    {"margin": dominated_margin, "x_center": x_center, "rho": rho},
                    tuple(witnesses_a))

    upper = np.array([
        joint_limsup(gs, fs.xi_grid, int(atom), schedules.xi_radii,
                     schedules.tail_starts)
        for atom in range(len(fs.xi_grid))
    ])
    lhs_b = float(expectation_values(upper[:, None], p)[0])
    e_seq = [float(expectation_values(gs[k][:, None], ps[k])[0]) for k in range(n)]
    rhs_b = tail_inf(e_seq, tail0)
    ok_b = lhs_b > NEG_INF and ge_with_tol(rhs_b, lhs_b, schedules.tol)
    stage_b = Stage(
        "expectation-sandwich", ok_b,
        {"lhs": lhs_b, "rhs": rhs_b, "trend": tail_trend(e_seq, schedules.tail_starts)},
        () if ok_b else ({"lhs": lhs_b, "rhs": rhs_b},),
    )

    ok = stage_a.ok and stage_b.ok
    witnesses = tuple(witnesses_a) + stage_b.witnesses
    return DiagnosticReport(
        name="minorant-condition",
        verdict=combine_verdict(True, ok),
        lhs=lhs_b,
        rhs=rhs_b,
        margin=sub_conv(rhs_b, lhs_b),
        witnesses=witnesses if not ok else (),
        schedules_used=schedules.to_json_dict(),
        stages=(stage_a, stage_b),
    )
