"""Finite schedules that make the limit quantifiers decidable.

Every lower/upper limit over an unbounded index set is replaced by a
scheduled surrogate: tail infima over declared tail starts and minima over
shrinking closed balls.  A joint lower limit over (level, point) pairs is
the best bound over the scheduled (tail start, radius) stages; since each
stage scans a subset of the true directed tail, the surrogate never
overstates a failing conclusion.  Reports echo the schedules they used.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Sequence

import numpy as np

from .space import MetricGrid, default_tail_starts

#: Ball radii for joint limits, as multiples of the grid spacing.  The last
#: stage sits below the spacing so the ball degenerates to the point itself.
JOINT_EPS_FRACTIONS = (2.0, 1.0, 0.5, 0.25)

DEFAULT_MODULUS_FRACTIONS = tuple(float(2 ** k) for k in range(11))
DEFAULT_CUTOFFS = (1.0, 4.0, 16.0, 64.0, 256.0)


@dataclass(frozen=True)
class Schedules:
    """Concrete, validated schedules for one approximation scheme.

    ``moduli`` are envelope Lipschitz parameters (nondecreasing),
    ``cutoffs`` the tail-expectation thresholds (increasing), ``x_radii``
    and ``xi_radii`` the shrinking ball radii on the decision and sample
    grids, ``deltas`` the candidate neighborhood sizes for equi-lower-
    semicontinuity, and ``tail_starts`` the nondecreasing tail indices.
    """

    moduli: tuple[float, ...]
    cutoffs: tuple[float, ...]
    x_radii: tuple[float, ...]
    xi_radii: tuple[float, ...]
    deltas: tuple[float, ...]
    tail_starts: tuple[int, ...]
    tol: float
    weak_tol: float

    def __post_init__(self) -> None:
        _require_monotone(self.moduli, increasing=True, name="moduli",
                          strict=False, positive=False)
        _require_monotone(self.cutoffs, increasing=True, name="cutoffs")
        _require_monotone(self.x_radii, increasing=False, name="x_radii")
        _require_monotone(self.xi_radii, increasing=False, name="xi_radii")
        _require_monotone(self.deltas, increasing=False, name="deltas")
        if not self.tail_starts or any(t < 0 for t in self.tail_starts):
            raise ValueError("tail_starts must be nonnegative and nonempty")
        if list(self.tail_starts) != sorted(self.tail_starts):
            raise ValueError("tail_starts must be nondecreasing")
        if len(self.tail_starts) != len(self.x_radii):
            raise ValueError("tail_starts and x_radii must pair up")
        if len(self.xi_radii) != len(self.x_radii):
            raise ValueError("xi_radii and x_radii must pair up")
        if self.tol < 0 or self.weak_tol < 0:
            raise ValueError("tolerances must be nonnegative")

    @property
    def last_tail_start(self) -> int:
        return self.tail_starts[-1]

    def stages(self) -> list[tuple[int, float, float]]:
        """(tail start, x-radius, xi-radius) triples, coarse to fine."""
        return list(zip(self.tail_starts, self.x_radii, self.xi_radii))

    def with_tol(self, tol: float) -> "Schedules":
        return replace(self, tol=float(tol))

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "moduli": list(self.moduli),
            "cutoffs": list(self.cutoffs),
            "x_radii": list(self.x_radii),
            "xi_radii": list(self.xi_radii),
            "deltas": list(self.deltas),
            "tail_starts": list(self.tail_starts),
            "tol": self.tol,
            "weak_tol": self.weak_tol,
        }

    @classmethod
    def from_json_dict(cls, obj: dict[str, Any]) -> "Schedules":
        return cls(
            moduli=tuple(float(v) for v in obj["moduli"]),
            cutoffs=tuple(float(v) for v in obj["cutoffs"]),
            x_radii=tuple(float(v) for v in obj["x_radii"]),
            xi_radii=tuple(float(v) for v in obj["xi_radii"]),
            deltas=tuple(float(v) for v in obj["deltas"]),
            tail_starts=tuple(int(v) for v in obj["tail_starts"]),
            tol=float(obj["tol"]),
            weak_tol=float(obj["weak_tol"]),
        )

    @classmethod
    def defaults(cls, x_grid: MetricGrid, xi_grid: MetricGrid, n_terms: int,
                 data_scale: float = 1.0, lipschitz_estimate: float = 0.0,
                 ) -> "Schedules":
        """Schedule defaults derived from the grids and sequence length.

        The default tolerance separates float error from discretization
        error: ``1e-6 + spacing * lipschitz_estimate``.
        """
        x_spacing = x_grid.spacing or 1.0
        xi_spacing = xi_grid.spacing or 1.0
        tails = default_tail_starts(n_terms)
        k = len(tails)
        fractions = JOINT_EPS_FRACTIONS[:k] if k <= len(JOINT_EPS_FRACTIONS) else (
            JOINT_EPS_FRACTIONS + JOINT_EPS_FRACTIONS[-1:] * (k - len(JOINT_EPS_FRACTIONS)))
        scale = max(abs(data_scale), 1e-12)
        return cls(
            moduli=tuple(f * scale for f in DEFAULT_MODULUS_FRACTIONS),
            cutoffs=DEFAULT_CUTOFFS,
            x_radii=tuple(f * x_spacing for f in fractions),
            xi_radii=tuple(f * xi_spacing for f in fractions),
            deltas=tuple(f * xi_spacing for f in (2.0, 1.0, 0.5)),
            tail_starts=tuple(tails),
            tol=1e-6 + x_spacing * lipschitz_estimate,
            weak_tol=max(1e-8, 0.01 * xi_grid.diameter),
        )


def _require_monotone(values: Sequence[float], increasing: bool, name: str,
                      strict: bool = False, positive: bool = True) -> None:
    vals = [float(v) for v in values]
    if not vals:
        raise ValueError(f"{name} must be nonempty")
    if positive and any(v <= 0 for v in vals):
        raise ValueError(f"{name} must be positive")
    if not positive and any(v < 0 for v in vals):
        raise ValueError(f"{name} must be nonnegative")
    pairs = zip(vals, vals[1:])
    if increasing:
        bad = any(b <= a if strict else b < a for a, b in pairs)
    else:
        bad = any(b >= a if strict else b > a for a, b in pairs)
    if bad:
        direction = "increasing" if increasing else "decreasing"
        raise ValueError(f"{name} must be {direction}")


def tail_inf(values: Sequence[float] | np.ndarray, start: int) -> float:
    """Infimum of the tail from ``start`` (lower-limit surrogate)."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0 or not 0 <= start < arr.size:
        raise ValueError("tail start out of range")
    return float(arr[start:].min())


def tail_sup(values: Sequence[float] | np.ndarray, start: int) -> float:
    """Supremum of the tail from ``start`` (upper-limit surrogate)."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0 or not 0 <= start < arr.size:
        raise ValueError("tail start out of range")
    return float(arr[start:].max())


def tail_trend(values: Sequence[float] | np.ndarray,
               tail_starts: Sequence[int]) -> list[float]:
    """Tail infima across the schedule; nondecreasing by construction."""
    arr = np.asarray(values, dtype=float)
    return [tail_inf(arr, min(t, arr.size - 1)) for t in tail_starts]


def joint_liminf(values: np.ndarray, grid: MetricGrid, point: int,
                 radii: Sequence[float], tail_starts: Sequence[int]) -> float:
    """Scheduled surrogate of the joint lower limit over (level, point).

    ``values`` has shape (levels, points).  Each scheduled stage takes the
    infimum over a level tail and a closed ball; the result is the best
    stage, a lower bound for the true joint lower limit on any extension
    of the data.
    """
    values = np.asarray(values, dtype=float)
    best = -np.inf
    for start, radius in zip(tail_starts, radii):
        start = min(start, values.shape[0] - 1)
        members = grid.ball(point, radius)
        stage = float(values[start:, members].min())
        best = max(best, stage)
    return best


def joint_limsup(values: np.ndarray, grid: MetricGrid, point: int,
                 radii: Sequence[float], tail_starts: Sequence[int]) -> float:
    """Upper mirror of :func:`joint_liminf`."""
    values = np.asarray(values, dtype=float)
    best = np.inf
    for start, radius in zip(tail_starts, radii):
        start = min(start, values.shape[0] - 1)
        members = grid.ball(point, radius)
        stage = float(values[start:, members].max())
        best = min(best, stage)
    return best


def triple_liminf(matrices: Sequence[np.ndarray], xi_grid: MetricGrid,
                  x_grid: MetricGrid, xi_point: int, x_point: int,
                  xi_radii: Sequence[float], x_radii: Sequence[float],
                  tail_starts: Sequence[int]) -> float:
    """Joint lower limit over (level, x, xi) with per-level matrices.

    ``matrices[k]`` has shape (xi points, x points); stage infima run over
    a level tail and shrinking balls on both grids simultaneously.
    """
    n = len(matrices)
    best = -np.inf
    for start, r_x, r_xi in zip(tail_starts, x_radii, xi_radii):
        start = min(start, n - 1)
        xi_members = xi_grid.ball(xi_point, r_xi)
        x_members = x_grid.ball(x_point, r_x)
        stage = min(
            float(matrices[k][np.ix_(xi_members, x_members)].min())
            for k in range(start, n)
        )
        best = max(best, stage)
    return best


def stage_radius_for_level(level: int, tail_starts: Sequence[int],
                           radii: Sequence[float]) -> float:
    """Radius of the finest scheduled stage whose tail contains ``level``."""
    chosen = radii[0]
    for start, radius in zip(tail_starts, radii):
        if level >= start:
            chosen = radius
    return chosen


def window_infima(seq: np.ndarray | Sequence[float],
                  tail_starts: Sequence[int]) -> list[float]:
    """Infima over the windows between consecutive scheduled tail starts."""
    arr = np.asarray(seq, dtype=float)
    n = arr.shape[0]
    starts = sorted({min(int(t), n - 1) for t in tail_starts})
    edges = starts + [n]
    return [float(arr[a:b].min()) for a, b in zip(edges, edges[1:]) if b > a]


def escaping_downward(windows: Sequence[float],
                      guard: float | None = None) -> bool:
    """Heuristic for a tail statistic diverging to ``-inf``.

    A finite prefix can never refute boundedness below outright; we flag
    divergence when the final window infimum strictly undercuts the
    previous one and the total drop from the first window exceeds the
    guard (default: the first window's own scale).  Only the last window
    pair must be strictly ordered, so noisy early windows cannot mask a
    clear downward tail.
    """
    if len(windows) < 2:
        return windows[-1] == float("-inf")
    if windows[-1] == float("-inf"):
        return True
    if not windows[-1] < windows[-2]:
        return False
    drop = windows[0] - windows[-1]
    if guard is None:
        guard = max(1.0, abs(windows[0]))
    return drop > guard


def escaping_upward(seq: np.ndarray | Sequence[float],
                    tail_starts: Sequence[int],
                    guard: float | None = None) -> bool:
    """Mirror of :func:`escaping_downward` for divergence to ``+inf``."""
    negated = [-float(v) for v in np.asarray(seq, dtype=float)]
    return escaping_downward(window_infima(negated, tail_starts), guard)
