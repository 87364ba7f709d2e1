import math
import random

import numpy as np
import pytest
from scipy.stats import spearmanr

from niche_nas.objectives import (
    ObjectivePoint, NormalizationBounds, NormalizedPoint, REFERENCE_POINT,
    dominates, non_dominated_sort, normalize, hypervolume, igd, spearman, compute_metrics,
)


def union_area(points, ref=(1.0, 1.0)):
    """
    Area of the union of boxes [p, ref] by coordinate compression.
    """
    pts = [p for p in points if p[0] <= ref[0] and p[1] <= ref[1]]
    xs = sorted({p[0] for p in pts} | {ref[0]})
    ys = sorted({p[1] for p in pts} | {ref[1]})
    area = 0.0
    for x0, x1 in zip(xs, xs[1:]):
        for y0, y1 in zip(ys, ys[1:]):
            if any(p[0] <= x0 and p[1] <= y0 for p in pts):
                area += (x1 - x0) * (y1 - y0)
    return area


def pairwise_front(points):
    unique = list(dict.fromkeys(tuple(p) for p in points))
    return sorted(p for p in unique if not any(dominates(q, p) for q in unique))


def test_dominates():
    assert dominates((0.1, 0.2), (0.2, 0.2))
    assert not dominates((0.2, 0.2), (0.2, 0.2))
    assert not dominates((0.1, 0.3), (0.2, 0.2))


def test_objective_point_validation():
    with pytest.raises(ValueError):
        ObjectivePoint(101.0, 1.0)
    with pytest.raises(ValueError):
        ObjectivePoint(50.0, 0.0)


def test_non_dominated_sort_examples():
    front = non_dominated_sort([(0.2, 0.5), (0.3, 0.6), (0.1, 0.9)], ['a', 'b', 'c'])
    assert front.arch_ids == ['c', 'a']
    assert front.is_mutually_non_dominated()
    assert len(non_dominated_sort([])) == 0
    dup = non_dominated_sort([(0.5, 0.5), (0.5, 0.5)], ['first', 'second'])
    assert dup.arch_ids == ['first']


def test_non_dominated_sort_matches_pairwise_filter():
    rng = random.Random(11)
    for _ in range(20):
        pts = [(round(rng.random(), 1), round(rng.random(), 1)) for _ in range(200)]
        front = non_dominated_sort(pts)
        assert sorted(tuple(p) for p in front.points) == pairwise_front(pts)


def test_normalize_bounds_and_clamp():
    bounds = NormalizationBounds(50.0, 100.0, 1.0, 3.0)
    pts = normalize([ObjectivePoint(100.0, 1.0), ObjectivePoint(75.0, 2.0), ObjectivePoint(40.0, 5.0)], bounds)
    assert pts == [NormalizedPoint(0.0, 0.0), NormalizedPoint(0.5, 0.5), NormalizedPoint(1.0, 1.0)]


def test_bounds_parse_and_degenerate():
    assert NormalizationBounds.parse("10, 90, 0.5, 4") == NormalizationBounds(10.0, 90.0, 0.5, 4.0)
    with pytest.raises(ValueError):
        NormalizationBounds(1.0, 1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        NormalizationBounds.parse("1,2,3")


def test_hypervolume_examples():
    assert hypervolume([(0.0, 0.0)]).value == 1.0
    assert hypervolume([(1.0, 1.0)]).value == 0.0
    assert hypervolume([]).value == 0.0
    assert hypervolume([(0.5, 0.5)]).value == pytest.approx(0.25)
    assert hypervolume([(0.2, 0.6), (0.6, 0.2)]).value == pytest.approx(0.8 * 0.4 + 0.4 * 0.4)


def test_hypervolume_excluded_points_counted():
    result = hypervolume([(0.5, 0.5), (0.2, 0.2)], ref=(0.4, 0.4))
    assert result.excluded == 1
    assert result.value == pytest.approx(0.04)


def test_hypervolume_order_and_duplicates_invariant():
    pts = [(0.1, 0.7), (0.4, 0.3), (0.8, 0.05)]
    a = hypervolume(pts).value
    assert hypervolume(list(reversed(pts)) + pts).value == pytest.approx(a, abs=1e-15)


def test_hypervolume_matches_exact_oracle():
    rng = random.Random(5)
    for _ in range(50):
        pts = [(rng.random(), rng.random()) for _ in range(rng.randint(1, 8))]
        assert abs(hypervolume(pts).value - union_area(pts)) <= 1e-9


def test_hypervolume_matches_monte_carlo():
    rng = np.random.default_rng(9)
    pts = [(0.1, 0.8), (0.3, 0.4), (0.7, 0.1)]
    samples = rng.random((200_000, 2))
    covered = np.zeros(len(samples), dtype=bool)
    for p in pts:
        covered |= (samples[:, 0] >= p[0]) & (samples[:, 1] >= p[1])
    estimate = covered.mean()
    sigma = math.sqrt(estimate * (1 - estimate) / len(samples))
    assert abs(hypervolume(pts).value - estimate) <= 3 * sigma + 1e-12


def test_igd_examples():
    truth = [(0.0, 1.0), (1.0, 0.0)]
    assert igd(truth, truth) == 0.0
    assert igd([(0.0, 0.0)], truth) == pytest.approx(1.0)
    assert igd([(0.0, 1.0)], truth) == pytest.approx(math.sqrt(2) / 2, abs=1e-12)
    assert igd([(0.0, 1.0)], truth) == pytest.approx(0.70711, abs=1e-5)
    assert igd([(0.0, 1.0), (0.5, 0.5)], truth) <= igd([(0.0, 1.0)], truth)
    with pytest.raises(ValueError):
        igd([], truth)
    with pytest.raises(ValueError):
        igd(truth, [])


def test_igd_matches_direct_definition():
    rng = random.Random(2)
    for _ in range(20):
        found = [(rng.random(), rng.random()) for _ in range(6)]
        truth = [(rng.random(), rng.random()) for _ in range(9)]
        direct = sum(min(math.dist(t, f) for f in found) for t in truth) / len(truth)
        assert abs(igd(found, truth) - direct) <= 1e-12


def test_spearman_matches_scipy():
    rng = random.Random(4)
    xs = [rng.randint(0, 20) for _ in range(50)]
    ys = [x + rng.random() * 10 for x in xs]
    assert spearman(xs, ys) == pytest.approx(spearmanr(xs, ys).statistic, abs=1e-12)
    assert spearman([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
    with pytest.raises(ValueError):
        spearman([1, 1, 1], [1, 2, 3])
    with pytest.raises(ValueError):
        spearman([1, 2], [1, 2, 3])


def test_compute_metrics_text():
    bounds = NormalizationBounds(0.0, 100.0, 1.0, 2.0)
    truth = non_dominated_sort([(0.0, 1.0), (1.0, 0.0)])
    report = compute_metrics(truth, truth, bounds)
    assert report.igd == 0.0
    assert report.hv == report.hv_truth
    text = report.to_text()
    assert "igd=0.0\n" in text
    assert f"ref_f1={REFERENCE_POINT.f1!r}\n" in text
    no_truth = compute_metrics(truth, None, bounds).to_text()
    assert "igd=NA\n" in no_truth
