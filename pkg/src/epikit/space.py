"""Finite metric grids, discrete measures, and set limits.

These are the desk-scale stand-ins for the metric spaces, probability
collections, and sieve sets that the diagnostics quantify over.  Grids are
immutable after construction; distances are precomputed into a matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .extreal import INF, require_no_nan
from .report import PASS, DiagnosticReport, Stage, combine_verdict

_METRIC_TOL = 1e-9

#: Default fractions of the grid spacing used as set-limit tolerances.
SET_EPS_FRACTIONS = (0.5, 0.25, 0.1, 0.05)

#: Default fractions of the sequence length used as tail starts.
TAIL_FRACTIONS = (0.0, 0.25, 0.5, 0.75)


class MetricGrid:
    """A finite point set with coordinates and a distance function.

    Points are identified by their index.  The metric is Euclidean by
    default or an explicit symmetric matrix, validated on construction
    (zero diagonal, symmetry, nonnegativity, triangle inequality).
    """

    def __init__(self, points: Sequence[Sequence[float]] | np.ndarray,
                 metric: str | np.ndarray = "euclidean") -> None:
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ValueError("points must be a nonempty (n, dim) array")
        require_no_nan(pts, "grid coordinates")
        if not np.isfinite(pts).all():
            raise ValueError("grid coordinates must be finite")
        self._points = pts
        self._points.setflags(write=False)

        if isinstance(metric, str):
            if metric != "euclidean":
                raise ValueError(f"unknown metric {metric!r}")
            self._metric_name = "euclidean"
            diff = pts[:, None, :] - pts[None, :, :]
            dist = np.sqrt((diff * diff).sum(axis=-1))
        else:
            self._metric_name = "matrix"
            dist = np.asarray(metric, dtype=float)
            _validate_distance_matrix(dist, len(pts))
        self._dist = dist
        self._dist.setflags(write=False)

    def __len__(self) -> int:
        return self._points.shape[0]

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def dim(self) -> int:
        return self._points.shape[1]

    @property
    def distances(self) -> np.ndarray:
        return self._dist

    def distance(self, i: int, j: int) -> float:
        return float(self._dist[i, j])

    @property
    def spacing(self) -> float:
        """Smallest positive pairwise distance (grid resolution)."""
        off = self._dist[~np.eye(len(self), dtype=bool)]
        positive = off[off > 0.0]
        return float(positive.min()) if positive.size else 0.0

    @property
    def diameter(self) -> float:
        return float(self._dist.max())

    def ball(self, center: int, radius: float, open_ball: bool = False) -> np.ndarray:
        """Indices within ``radius`` of ``center`` (closed ball by default)."""
        row = self._dist[center]
        mask = row < radius if open_ball else row <= radius
        return np.flatnonzero(mask)

    def nearest_index(self, coords: Sequence[float]) -> int:
        """Index of the grid point closest to ``coords`` (ties: smallest)."""
        target = np.asarray(coords, dtype=float)
        gaps = np.sqrt(((self._points - target[None, :]) ** 2).sum(axis=1))
        return int(np.argmin(gaps))

    def is_uniform_1d(self, rel_tol: float = 1e-12) -> bool:
        """Whether this is a 1-D Euclidean grid with equal, sorted steps."""
        if self._metric_name != "euclidean" or self.dim != 1 or len(self) < 2:
            return False
        xs = self._points[:, 0]
        steps = np.diff(xs)
        if (steps <= 0).any():
            return False
        scale = max(abs(float(xs[0])), abs(float(xs[-1])), 1.0)
        return float(np.ptp(steps)) <= rel_tol * scale

    def to_json_dict(self) -> dict[str, Any]:
        metric: Any = "euclidean" if self._metric_name == "euclidean" else {
            "matrix": self._dist.tolist()
        }
        return {"points": self._points.tolist(), "metric": metric}

    @classmethod
    def from_json_dict(cls, obj: dict[str, Any]) -> "MetricGrid":
        metric = obj["metric"]
        if isinstance(metric, dict):
            return cls(obj["points"], np.asarray(metric["matrix"], dtype=float))
        return cls(obj["points"], metric)

    @classmethod
    def uniform_1d(cls, start: float, stop: float, n: int) -> "MetricGrid":
        return cls(np.linspace(start, stop, n)[:, None])


def _validate_distance_matrix(dist: np.ndarray, n: int) -> None:
    if dist.shape != (n, n):
        raise ValueError(f"distance matrix must be {n}x{n}, got {dist.shape}")
    require_no_nan(dist, "distance matrix")
    if not np.isfinite(dist).all():
        raise ValueError("distances must be finite")
    if (dist < 0).any():
        raise ValueError("distances must be nonnegative")
    if np.abs(np.diagonal(dist)).max(initial=0.0) > 0.0:
        raise ValueError("distance matrix must have a zero diagonal")
    if np.abs(dist - dist.T).max(initial=0.0) > _METRIC_TOL:
        raise ValueError("distance matrix must be symmetric")
    for k in range(n):
        slack = dist[:, k, None] + dist[None, k, :] - dist
        if slack.min() < -_METRIC_TOL:
            i, j = np.unravel_index(int(np.argmin(slack)), slack.shape)
            raise ValueError(
                f"triangle inequality violated for ({i}, {k}, {j})"
            )


class DiscreteMeasure:
    """Atoms-with-weights probability measure on a :class:`MetricGrid`."""

    def __init__(self, grid: MetricGrid, support: Sequence[int],
                 weights: Sequence[float]) -> None:
        sup = np.asarray(support, dtype=int)
        w = np.asarray(weights, dtype=float)
        if sup.ndim != 1 or sup.shape != w.shape or sup.size == 0:
            raise ValueError("support and weights must be matching 1-D arrays")
        if len(np.unique(sup)) != sup.size:
            raise ValueError("support points must be distinct")
        if sup.min() < 0 or sup.max() >= len(grid):
            raise ValueError("support indices outside the grid")
        require_no_nan(w, "weights")
        if (w < 0).any() or not np.isfinite(w).all():
            raise ValueError("weights must be finite and nonnegative")
        total = float(w.sum())
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {total}, expected 1 within 1e-12")
        self.grid = grid
        self.support = sup
        self.weights = w
        self.support.setflags(write=False)
        self.weights.setflags(write=False)

    def __len__(self) -> int:
        return self.support.size

    def weight_vector(self) -> np.ndarray:
        """Dense weights over the whole grid (zeros off the support)."""
        dense = np.zeros(len(self.grid))
        dense[self.support] = self.weights
        return dense

    def equals(self, other: "DiscreteMeasure") -> bool:
        return self.grid is other.grid and np.array_equal(
            self.weight_vector(), other.weight_vector()
        )

    def to_json_dict(self) -> dict[str, Any]:
        return {"support": self.support.tolist(), "weights": self.weights.tolist()}

    @classmethod
    def from_json_dict(cls, grid: MetricGrid, obj: dict[str, Any]) -> "DiscreteMeasure":
        return cls(grid, obj["support"], obj["weights"])

    @classmethod
    def dirac(cls, grid: MetricGrid, index: int) -> "DiscreteMeasure":
        return cls(grid, [index], [1.0])

    @classmethod
    def uniform(cls, grid: MetricGrid, indices: Sequence[int]) -> "DiscreteMeasure":
        idx = np.asarray(indices, dtype=int)
        return cls(grid, idx, np.full(idx.size, 1.0 / idx.size))

    @classmethod
    def from_dense(cls, grid: MetricGrid, dense: Sequence[float]) -> "DiscreteMeasure":
        dense = np.asarray(dense, dtype=float)
        sup = np.flatnonzero(dense > 0)
        return cls(grid, sup, dense[sup])

    @classmethod
    def empirical(cls, grid: MetricGrid, draws: Sequence[int]) -> "DiscreteMeasure":
        """Empirical measure of grid-index draws (weights = frequencies)."""
        draws = np.asarray(draws, dtype=int)
        sup, counts = np.unique(draws, return_counts=True)
        return cls(grid, sup, counts / draws.size)


def bounded_lipschitz_distance(p: DiscreteMeasure, q: DiscreteMeasure) -> float:
    """Dudley's bounded-Lipschitz distance, solved exactly as a finite LP.

    Maximizes ``sum_i h_i (p_i - q_i)`` over functions with sup-norm <= 1
    and Lipschitz modulus <= 1 on the union support.  The objective sign is
    canonicalized so that the two argument orders solve the same LP and the
    result is bitwise symmetric.
    """
    if p.grid is not q.grid:
        raise ValueError("measures must live on the same grid")
    diff = p.weight_vector() - q.weight_vector()
    support = np.flatnonzero((p.weight_vector() > 0) | (q.weight_vector() > 0))
    c = diff[support]
    nz = np.flatnonzero(c)
    if nz.size == 0:
        return 0.0
    if c[nz[0]] < 0:
        c = -c

    m = support.size
    dist = p.grid.distances[np.ix_(support, support)]
    ii, jj = np.triu_indices(m, k=1)
    # h_i - h_j <= d_ij and h_j - h_i <= d_ij for every pair.
    n_pairs = ii.size
    rows = np.repeat(np.arange(2 * n_pairs), 2)
    cols = np.concatenate([np.column_stack([ii, jj]).ravel(),
                           np.column_stack([jj, ii]).ravel()])
    vals = np.tile([1.0, -1.0], 2 * n_pairs)
    a_ub = sparse.csr_matrix((vals, (rows, cols)), shape=(2 * n_pairs, m))
    b_ub = np.concatenate([dist[ii, jj], dist[ii, jj]])

    res = linprog(-c, A_ub=a_ub, b_ub=b_ub, bounds=(-1.0, 1.0), method="highs")
    if not res.success:
        raise RuntimeError(f"bounded-Lipschitz LP failed: {res.message}")
    return max(0.0, float(-res.fun))


def wasserstein1_1d(p: DiscreteMeasure, q: DiscreteMeasure) -> float:
    """Exact 1-D Wasserstein-1 via sorted transport (oracle use only)."""
    if p.grid is not q.grid:
        raise ValueError("measures must live on the same grid")
    if p.grid.dim != 1:
        raise ValueError("sorted-transport oracle requires a 1-D grid")
    xs = p.grid.points[:, 0]
    order = np.argsort(xs, kind="stable")
    gaps = np.diff(xs[order])
    cdf_gap = np.cumsum((p.weight_vector() - q.weight_vector())[order])[:-1]
    return float(np.sum(np.abs(cdf_gap) * gaps))


def mollifier_family(grid: MetricGrid, center: int,
                     radius_schedule: Sequence[float]) -> list[DiscreteMeasure]:
    """Uniform measures on shrinking balls around ``center``.

    The family converges weakly to the Dirac measure at the center; the
    bounded-Lipschitz distance to it is at most the current radius.
    """
    radii = [float(r) for r in radius_schedule]
    if not radii or any(r <= 0 for r in radii):
        raise ValueError("radii must be positive")
    if any(radii[k + 1] > radii[k] for k in range(len(radii) - 1)):
        raise ValueError("radii must be nonincreasing")
    family = []
    for r in radii:
        members = grid.ball(center, r)
        if members.size == 0:
            raise ValueError(f"empty ball of radius {r} around point {center}")
        family.append(DiscreteMeasure.uniform(grid, members))
    return family


@dataclass(frozen=True)
class PointSetSequence:
    """A sequence of grid subsets, indexed by the approximation level."""

    grid: MetricGrid
    sets: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        if not self.sets:
            raise ValueError("need at least one set")
        n = len(self.grid)
        for k, s in enumerate(self.sets):
            if any(not 0 <= i < n for i in s):
                raise ValueError(f"set {k} contains indices outside the grid")

    @classmethod
    def from_lists(cls, grid: MetricGrid,
                   sets: Iterable[Iterable[int]]) -> "PointSetSequence":
        return cls(grid, tuple(tuple(sorted(set(map(int, s)))) for s in sets))


def _dist_to_set(grid: MetricGrid, point: int, members: tuple[int, ...]) -> float:
    if not members:
        return INF
    return float(grid.distances[point, list(members)].min())


def _default_radii(grid: MetricGrid) -> list[float]:
    spacing = grid.spacing or 1.0
    return [f * spacing for f in SET_EPS_FRACTIONS]


def default_tail_starts(n: int) -> list[int]:
    """Tail-start schedule: fixed fractions of the sequence length."""
    return sorted({min(int(f * n), n - 1) for f in TAIL_FRACTIONS})


def outer_limit(seq: PointSetSequence, radii: Sequence[float] | None = None,
                tail_starts: Sequence[int] | None = None) -> list[int]:
    """Points approached by the sets along a subsequence.

    Desk surrogate: for every tolerance, at least one index beyond every
    scheduled tail start has a set member within that tolerance.
    """
    radii = list(radii) if radii is not None else _default_radii(seq.grid)
    tails = list(tail_starts) if tail_starts is not None else default_tail_starts(
        len(seq.sets))
    hits = []
    for point in range(len(seq.grid)):
        gaps = [_dist_to_set(seq.grid, point, s) for s in seq.sets]
        ok = all(
            any(g <= r for g in gaps[start:])
            for r in radii for start in tails
        )
        if ok:
            hits.append(point)
    return hits


def inner_limit(seq: PointSetSequence, radii: Sequence[float] | None = None,
                tail_starts: Sequence[int] | None = None) -> list[int]:
    """Points approached by the sets along the full sequence.

    Desk surrogate: for every tolerance, some scheduled tail start has all
    later sets within that tolerance.  Always a subset of the outer limit.
    """
    radii = list(radii) if radii is not None else _default_radii(seq.grid)
    tails = list(tail_starts) if tail_starts is not None else default_tail_starts(
        len(seq.sets))
    hits = []
    for point in range(len(seq.grid)):
        gaps = [_dist_to_set(seq.grid, point, s) for s in seq.sets]
        ok = all(
            any(all(g <= r for g in gaps[start:]) for start in tails)
            for r in radii
        )
        if ok:
            hits.append(point)
    return hits


def set_converges(seq: PointSetSequence, target: Iterable[int],
                  radii: Sequence[float] | None = None,
                  tail_starts: Sequence[int] | None = None) -> DiagnosticReport:
    """Report whether inner limit = outer limit = ``target``."""
    radii = list(radii) if radii is not None else _default_radii(seq.grid)
    tails = list(tail_starts) if tail_starts is not None else default_tail_starts(
        len(seq.sets))
    inner = set(inner_limit(seq, radii, tails))
    outer = set(outer_limit(seq, radii, tails))
    want = set(int(t) for t in target)

    witnesses = []
    for point in sorted(outer - inner):
        witnesses.append({"point": point, "issue": "outer-only"})
    for point in sorted(want ^ outer):
        witnesses.append({"point": point, "issue": "target-vs-outer"})
    for point in sorted(want ^ inner):
        witnesses.append({"point": point, "issue": "target-vs-inner"})

    ok = inner == outer == want
    stage = Stage(
        name="set-limits",
        ok=ok,
        detail={"inner": sorted(inner), "outer": sorted(outer),
                "target": sorted(want)},
        witnesses=tuple(witnesses),
    )
    return DiagnosticReport(
        name="set-convergence",
        verdict=combine_verdict(True, ok),
        lhs=float(len(inner)),
        rhs=float(len(want)),
        margin=0.0 if ok else -float(len(witnesses)),
        witnesses=tuple(witnesses) if not ok else (),
        schedules_used={"radii": radii, "tail_starts": tails},
        stages=(stage,),
    )
