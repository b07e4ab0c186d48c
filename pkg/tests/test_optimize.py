import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shearmark.attacks import AttackSpec
from shearmark.embed import ThresholdPair
from shearmark.marks import default_logo, prepare_marks
from shearmark.optimize import (
    BOUNDS, Individual, OptimizeError, OptimizerConfig, WatermarkObjective, arithmetic_crossover,
    crowding_distance, dominates, evaluate, fast_nondominated_sort, hausdorff, nsga2,
    select_operating_point, uniform_mutation,
)
from shearmark.texture import texture_map

from conftest import KEYS, textured


def ind(*f, x=(40.0, 1.0)):
    return Individual(np.array(x, float), np.array(f, float))


def schaffer(xs):
    x = xs[:, 0]
    return np.stack([x**2, (x - 2) ** 2], 1)


def zdt_like(xs):
    return np.stack([xs[:, 0], 1 + xs[:, 1] - np.sqrt(xs[:, 0])], 1)


def test_dominance_examples():
    assert dominates(ind(0.1, 0.2, 5), ind(0.2, 0.3, 6))
    assert not dominates(ind(0.1, 0.3, 5), ind(0.2, 0.2, 5))
    assert not dominates(ind(1, 1, 1), ind(1, 1, 1))
    with pytest.raises(Exception):
        dominates(ind(1, 2), ind(1, 2, 3))


def test_sort_examples():
    pop = [ind(1, 5), ind(2, 3), ind(3, 1), ind(4, 4)]
    fronts = fast_nondominated_sort(pop)
    assert [sorted(f) for f in fronts] == [[0, 1, 2], [3]]
    assert [p.rank for p in pop] == [1, 1, 1, 2]
    assert len(fast_nondominated_sort([ind(1, 1) for _ in range(5)])) == 1
    assert len(fast_nondominated_sort([ind(1, 1), ind(2, 2), ind(3, 3)])) == 3


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5), st.integers(0, 5)), min_size=1, max_size=25))
def test_sort_matches_brute_force(vals):
    pop = [ind(*v) for v in vals]
    fronts = fast_nondominated_sort(pop)
    assert sorted(i for f in fronts for i in f) == list(range(len(pop)))
    first = set(fronts[0])
    for i, p in enumerate(pop):
        assert (i in first) == (not any(dominates(q, p) for q in pop))
    # members of a later front are dominated by someone in the previous one
    for a, b in zip(fronts, fronts[1:]):
        for j in b:
            assert any(dominates(pop[i], pop[j]) for i in a)


def test_crowding_examples():
    assert np.all(np.isinf(crowding_distance([ind(0, 1), ind(1, 0)])))
    d = crowding_distance([ind(0, 2), ind(1, 1), ind(2, 0)])
    assert np.isinf(d[0]) and np.isinf(d[2]) and d[1] == pytest.approx(2.0)
    d = crowding_distance([ind(0, 5), ind(1, 5), ind(2, 5)])
    assert d[1] == pytest.approx(1.0)  # only the first objective contributes


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31))
def test_operators_respect_bounds(seed):
    rng = np.random.default_rng(seed)
    lo, hi = np.array([b[0] for b in BOUNDS]), np.array([b[1] for b in BOUNDS])
    a, b = rng.uniform(lo, hi), rng.uniform(lo, hi)
    for c in arithmetic_crossover(a, b, rng):
        assert np.all(c >= lo) and np.all(c <= hi)
        m = uniform_mutation(c, 0.5, BOUNDS, rng)
        assert np.all(m >= lo) and np.all(m <= hi)


def test_schaffer_front():
    run = nsga2(schaffer, [(0.0, 2.0)], OptimizerConfig(population=150, generations=100), seed=1)
    t = np.linspace(0, 2, 2001)
    analytic = np.stack([t**2, (t - 2) ** 2], 1)
    assert hausdorff([p.f for p in run.front], analytic) <= 0.05


def test_generic_run_properties():
    cfg = OptimizerConfig(population=30, generations=30)
    run = nsga2(zdt_like, [(0.0, 1.0), (0.0, 1.0)], cfg, seed=3)
    assert len(run.trace) == 30
    for p in run.front:
        assert not any(dominates(q, p) for q in run.archive)
    for p in run.population:
        assert 0 <= p.x[0] <= 1 and 0 <= p.x[1] <= 1
    best = np.array([r["best"] for r in run.trace])
    assert np.all(np.diff(best, axis=0) <= 1e-12)
    again = nsga2(zdt_like, [(0.0, 1.0), (0.0, 1.0)], cfg, seed=3)
    assert [p.as_dict() for p in again.front] == [p.as_dict() for p in run.front]


def test_bad_objective():
    with pytest.raises(OptimizeError):
        nsga2(lambda xs: np.full((len(xs), 2), np.nan), [(0.0, 1.0)], OptimizerConfig(population=4, generations=1))


def test_config_validation():
    with pytest.raises(OptimizeError):
        OptimizerConfig(population=1)
    with pytest.raises(OptimizeError):
        OptimizerConfig(crossover_rate=1.5)


def test_select_examples():
    front = [ind(0.04, 0.04, 3, x=(30, 0)), ind(0.08, 0.08, 2, x=(40, 1)), ind(0.12, 0.12, 1, x=(50, 2))]
    assert select_operating_point(front) == (ThresholdPair(40, 1), True)
    hi = [ind(0.2, 0.2, 1, x=(45, 1)), ind(0.12, 0.12, 2, x=(35, 0.5))]
    assert select_operating_point(hi) == (ThresholdPair(35, 0.5), False)
    assert select_operating_point([ind(0.01, 0.0, 9, x=(33.333, 1.239))]) == (ThresholdPair(33.33, 1.24), True)
    with pytest.raises(OptimizeError):
        select_operating_point([])


@pytest.fixture(scope="module")
def small_problem():
    img = textured(64, 4)
    marks = prepare_marks(default_logo(4, 4), KEYS, 64, 64)
    return img, marks, texture_map(img.luma())


def test_distortion_grows_with_strength(small_problem):
    img, marks, tm = small_problem
    lo = evaluate(ThresholdPair(30, 0), img, marks, tm)
    hi = evaluate(ThresholdPair(50, 2), img, marks, tm)
    assert hi[2] > lo[2] > 0
    assert np.all(lo >= 0) and np.all(np.isfinite(hi))


def test_objective_order_independent(small_problem):
    img, marks, tm = small_problem
    atk = [AttackSpec("darken", {"step": 50})]
    xs = np.array([[31.0, 0.2], [45.5, 1.5], [38.25, 0.75]])
    a = WatermarkObjective(img, marks, tm, attacks=atk, seed=2)(xs)
    b = WatermarkObjective(img, marks, tm, attacks=atk, seed=2)(xs[::-1])[::-1]
    c = WatermarkObjective(img, marks, tm, attacks=atk, seed=2, workers=2)(xs)
    assert np.array_equal(a, b) and np.array_equal(a, c)


def test_trace_records(small_problem, tmp_path):
    img, marks, tm = small_problem
    obj = WatermarkObjective(img, marks, tm, attacks=[AttackSpec("darken", {"step": 50})], seed=0)
    run = nsga2(obj, BOUNDS, OptimizerConfig(population=6, generations=2, tournament=3), seed=0)
    run.write_trace(tmp_path / "t.jsonl")
    lines = (tmp_path / "t.jsonl").read_text().splitlines()
    assert [json.loads(x)["generation"] for x in lines] == [1, 2]
    for p in run.population:
        assert 30 <= p.x[0] <= 50 and 0 <= p.x[1] <= 2
