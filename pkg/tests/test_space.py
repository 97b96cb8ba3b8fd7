"""Grids, measures, the bounded-Lipschitz LP, and set limits."""

from __future__ import annotations

import numpy as np
import pytest

from epikit.space import (DiscreteMeasure, MetricGrid, PointSetSequence,
                          bounded_lipschitz_distance, inner_limit,
                          mollifier_family, outer_limit, set_converges,
                          wasserstein1_1d)


def line_grid(start=-1.0, stop=1.0, n=9):
    return MetricGrid.uniform_1d(start, stop, n)


# --- grids ---------------------------------------------------------------


def test_grid_metric_axioms_euclidean():
    grid = MetricGrid([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]])
    d = grid.distances
    assert np.all(np.diagonal(d) == 0.0)
    assert np.array_equal(d, d.T)
    assert d[1, 2] == pytest.approx(np.sqrt(5.0))
    assert grid.spacing == pytest.approx(1.0)


def test_explicit_matrix_validation():
    ok = np.array([[0.0, 1.0], [1.0, 0.0]])
    MetricGrid([[0.0], [1.0]], ok)
    bad_triangle = np.array([[0.0, 1.0, 5.0],
                             [1.0, 0.0, 1.0],
                             [5.0, 1.0, 0.0]])
    with pytest.raises(ValueError, match="triangle"):
        MetricGrid([[0.0], [1.0], [2.0]], bad_triangle)
    with pytest.raises(ValueError, match="symmetric"):
        MetricGrid([[0.0], [1.0]], np.array([[0.0, 1.0], [2.0, 0.0]]))
    with pytest.raises(ValueError, match="diagonal"):
        MetricGrid([[0.0], [1.0]], np.array([[0.5, 1.0], [1.0, 0.0]]))


def test_grid_json_round_trip():
    grid = line_grid(n=5)
    clone = MetricGrid.from_json_dict(grid.to_json_dict())
    assert np.array_equal(grid.points, clone.points)
    assert np.array_equal(grid.distances, clone.distances)

    explicit = MetricGrid([[0.0], [1.0]], np.array([[0.0, 0.7], [0.7, 0.0]]))
    clone = MetricGrid.from_json_dict(explicit.to_json_dict())
    assert np.array_equal(explicit.distances, clone.distances)


def test_uniform_1d_detection():
    assert line_grid(n=11).is_uniform_1d()
    ragged = MetricGrid(np.array([0.0, 0.1, 0.3])[:, None])
    assert not ragged.is_uniform_1d()
    assert not MetricGrid([[0.0, 0.0], [1.0, 1.0]]).is_uniform_1d()


# --- measures ------------------------------------------------------------


def test_measure_validation():
    grid = line_grid(n=5)
    with pytest.raises(ValueError, match="sum"):
        DiscreteMeasure(grid, [0, 1], [0.5, 0.6])
    with pytest.raises(ValueError, match="distinct"):
        DiscreteMeasure(grid, [0, 0], [0.5, 0.5])
    with pytest.raises(ValueError, match="grid"):
        DiscreteMeasure(grid, [0, 7], [0.5, 0.5])
    m = DiscreteMeasure(grid, [1, 3], [0.25, 0.75])
    assert m.weight_vector()[3] == 0.75


def test_measure_json_round_trip():
    grid = line_grid(n=5)
    m = DiscreteMeasure(grid, [0, 2, 4], [0.2, 0.3, 0.5])
    clone = DiscreteMeasure.from_json_dict(grid, m.to_json_dict())
    assert m.equals(clone)


# --- bounded-Lipschitz distance ------------------------------------------


def two_point_oracle(dist: float) -> float:
    # Hand-solved two-point LP: max (h_a - h_b) with |h| <= 1 and
    # |h_a - h_b| <= d gives min(d, 2).
    return min(dist, 2.0)


def test_bl_identity_of_indiscernibles():
    grid = line_grid(n=9)
    p = DiscreteMeasure(grid, [0, 4], [0.5, 0.5])
    assert bounded_lipschitz_distance(p, p) == 0.0


@pytest.mark.parametrize("gap", [0.3, 1.0, 5.0])
def test_bl_between_diracs_matches_two_point_oracle(gap):
    grid = MetricGrid([[0.0], [gap]])
    p = DiscreteMeasure.dirac(grid, 0)
    q = DiscreteMeasure.dirac(grid, 1)
    assert bounded_lipschitz_distance(p, q) == pytest.approx(
        two_point_oracle(gap), abs=1e-9)


def test_bl_metric_axioms_on_random_triples():
    rng = np.random.default_rng(7)
    grid = MetricGrid(rng.uniform(-1, 1, size=(12, 2)))
    for _ in range(8):
        measures = []
        for _ in range(3):
            k = int(rng.integers(2, 6))
            sup = rng.choice(12, size=k, replace=False)
            w = rng.dirichlet(np.ones(k))
            w = w / w.sum()
            measures.append(DiscreteMeasure(grid, sup, w))
        p, q, r = measures
        dpq = bounded_lipschitz_distance(p, q)
        dqp = bounded_lipschitz_distance(q, p)
        assert dpq == dqp  # bitwise symmetry via canonical objective sign
        assert dpq >= 0.0
        dpr = bounded_lipschitz_distance(p, r)
        drq = bounded_lipschitz_distance(r, q)
        assert dpq <= dpr + drq + 1e-9


def test_bl_empirical_measures_concentrate():
    grid = line_grid(0.0, 1.0, 11)
    p = DiscreteMeasure(grid, [2, 5, 8], [0.3, 0.4, 0.3])
    medians = []
    for n in (10, 100, 1000):
        dists = []
        for seed in range(11):
            rng = np.random.default_rng([seed, n])
            draws = rng.choice(p.support, size=n, p=p.weights)
            emp = DiscreteMeasure.empirical(grid, draws)
            dists.append(bounded_lipschitz_distance(emp, p))
        medians.append(float(np.median(dists)))
    assert medians[0] > medians[1] > medians[2]


def test_wasserstein_1d_oracle_agrees_on_diracs():
    grid = MetricGrid([[0.0], [0.4]])
    p = DiscreteMeasure.dirac(grid, 0)
    q = DiscreteMeasure.dirac(grid, 1)
    assert wasserstein1_1d(p, q) == pytest.approx(0.4)
    # below the sup-norm cap the two metrics agree on close diracs
    assert bounded_lipschitz_distance(p, q) == pytest.approx(0.4, abs=1e-9)


def test_bl_requires_shared_grid():
    a, b = line_grid(n=3), line_grid(n=3)
    with pytest.raises(ValueError):
        bounded_lipschitz_distance(DiscreteMeasure.dirac(a, 0),
                                   DiscreteMeasure.dirac(b, 0))


# --- mollifiers -----------------------------------------------------------


def test_mollifier_family_matches_enumerated_balls():
    grid = line_grid(-1.0, 1.0, 5)  # spacing 0.5
    center = 2
    fam = mollifier_family(grid, center, [1.0, 0.5])
    assert len(fam[0]) == 5 and len(fam[1]) == 3
    singleton = mollifier_family(grid, center, [0.1])[0]
    assert singleton.equals(DiscreteMeasure.dirac(grid, center))


def test_mollifier_bl_distance_bounded_by_radius():
    grid = line_grid(-1.0, 1.0, 17)
    center = 8
    delta = DiscreteMeasure.dirac(grid, center)
    for r, measure in zip([0.5, 0.25, 0.125],
                          mollifier_family(grid, center, [0.5, 0.25, 0.125])):
        assert bounded_lipschitz_distance(measure, delta) <= r + 1e-9


def test_mollifier_validates_radii():
    grid = line_grid(n=5)
    with pytest.raises(ValueError, match="nonincreasing"):
        mollifier_family(grid, 2, [0.1, 0.5])
    with pytest.raises(ValueError, match="positive"):
        mollifier_family(grid, 2, [0.5, 0.0])


# --- set limits -----------------------------------------------------------


def test_constant_sequence_has_equal_limits():
    grid = line_grid(n=7)
    seq = PointSetSequence.from_lists(grid, [[1, 4]] * 8)
    assert inner_limit(seq) == [1, 4]
    assert outer_limit(seq) == [1, 4]
    assert set_converges(seq, [1, 4]).verdict == "pass"


def test_alternating_sequence_splits_limits():
    grid = line_grid(n=7)
    seq = PointSetSequence.from_lists(grid, [[0], [6]] * 4)
    assert inner_limit(seq) == []
    assert outer_limit(seq) == [0, 6]
    report = set_converges(seq, [0, 6])
    assert report.verdict == "fail"
    assert report.witnesses


def test_shrinking_neighborhoods_converge_to_target():
    grid = line_grid(0.0, 1.0, 21)  # spacing 0.05
    target = {5, 10}
    sets = []
    for nu in range(1, 65):
        radius = 1.0 / nu
        members = sorted({
            i for i in range(len(grid))
            if min(grid.distance(i, t) for t in target) <= radius
        })
        sets.append(members)
    seq = PointSetSequence.from_lists(grid, sets)
    # brute-force evaluation of the definitions on the grid
    assert set(inner_limit(seq)) == target
    assert set(outer_limit(seq)) == target
    assert set_converges(seq, sorted(target)).verdict == "pass"


def test_inner_subset_of_outer_on_random_sequences():
    rng = np.random.default_rng(3)
    grid = line_grid(n=9)
    for _ in range(20):
        sets = [sorted(rng.choice(9, size=rng.integers(1, 5), replace=False))
                for _ in range(10)]
        seq = PointSetSequence.from_lists(grid, sets)
        assert set(inner_limit(seq)) <= set(outer_limit(seq))
