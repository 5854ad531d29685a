import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linear_sum_assignment

from partseg.aggregate import (
    AggregateConfig,
    AssembledInstance,
    CenterGrid,
    aggregate,
    baseline_costs,
    candidate_pool,
    corrected_center,
    hungarian_baseline,
    match_sibling,
    part_epsilon,
    refine_mask,
    reverse_residual,
    solve_assignment,
)
from partseg.errors import OddPartCount
from partseg.fixtures import lattice_scene, parallel_pair, shape_template
from partseg.mask import BinaryMask, connected_components, union_all
from partseg.scenegen import PartPrediction, ground_truth_predictions

from conftest import rect_mask

pt = st.tuples(st.floats(-50, 50), st.floats(-50, 50))


def groups_by_source(preds, instances):
    return sorted(sorted({preds[k].source[0] for k in inst.part_indices}) for inst in instances)


# -- centers and pools ----------------------------------------------------------

def test_corrected_center():
    m = rect_mask(3, 3, 4, 4, 20, 20)
    assert corrected_center(PartPrediction(m, 1.0, (0.0, 0.0), [])) == (5, 5)
    assert corrected_center(PartPrediction(m, 1.0, (2.0, -1.0), [])) == (7, 4)


def test_candidate_pool_examples():
    centers = np.array([(0, 0), (9, 1), (13, 0)], float)
    assert candidate_pool(0, (10, 0), centers, 2.0) == [1]
    grid = CenterGrid(centers, 2.0)
    assert candidate_pool(0, (10, 0), centers, 2.0, grid) == [1]


@settings(max_examples=80)
@given(st.lists(pt, min_size=2, max_size=40), pt, st.floats(0.5, 20), st.floats(0.5, 30))
def test_grid_pool_equals_brute_force(cs, v, eps, cell):
    centers = np.array(cs)
    grid = CenterGrid(centers, cell)
    for i in range(len(cs)):
        assert candidate_pool(i, v, centers, eps, grid) == candidate_pool(i, v, centers, eps)


def test_match_sibling_examples():
    centers = np.array([(0, 0), (9, 1), (10.5, 0)])
    offsets = [np.array([(10.0, 0.0)]), np.array([(-10.0, 0.0)]), np.array([(-10.0, 0.0)])]
    scores = [1.0, 1.0, 1.0]
    assert match_sibling(0, (10, 0), [1, 2], centers, offsets, scores) == 2
    assert reverse_residual(0, 1, centers, offsets) == pytest.approx(math.sqrt(2))
    assert reverse_residual(0, 2, centers, offsets) == pytest.approx(0.5)
    assert match_sibling(0, (10, 0), [1], centers, offsets, scores) == 1
    assert match_sibling(0, (10, 0), [], centers, offsets, scores) is None


def test_match_sibling_ties():
    centers = np.array([(0, 0), (10, 1), (10, -1)])
    offsets = [np.zeros((1, 2)), np.array([(-10.0, -1.0)]), np.array([(-10.0, 1.0)])]
    assert match_sibling(0, (10, 0), [1, 2], centers, offsets, [1, 0.5, 0.9]) == 2
    assert match_sibling(0, (10, 0), [1, 2], centers, offsets, [1, 0.9, 0.9]) == 1


@given(st.lists(pt, min_size=2, max_size=12), st.data())
def test_match_sibling_brute_force(cs, data):
    centers = np.array(cs)
    n = len(cs)
    offsets = [np.array(data.draw(st.lists(pt, min_size=0, max_size=3))).reshape(-1, 2)
               for _ in range(n)]
    scores = data.draw(st.lists(st.sampled_from([0.2, 0.5, 1.0]), min_size=n, max_size=n))
    pool = list(range(1, n))
    best = None
    for j in pool:
        for v2 in offsets[j]:
            r = math.hypot(centers[0][0] - centers[j][0] - v2[0],
                           centers[0][1] - centers[j][1] - v2[1])
            key = (r, -scores[j], j)
            if best is None or key < best[0]:
                best = (key, j)
    want = None if best is None else best[1]
    got = match_sibling(0, (0, 0), pool, centers, offsets, scores)
    if want is None or got is None:
        assert got == want
    else:
        # equal residuals computed two ways may differ in the last ulp
        assert reverse_residual(0, got, centers, offsets) == pytest.approx(best[0][0], abs=1e-9)


# -- aggregation ----------------------------------------------------------------

@pytest.fixture(scope="module")
def lattice():
    t = shape_template("L", 4)
    s = lattice_scene(t, 9, seed=1)
    return s, ground_truth_predictions(s, 0.0)


def test_oracle_lattice_is_exact(lattice):
    s, preds = lattice
    instances, discarded = aggregate(preds)
    assert discarded == []
    assert len(instances) == len(s.instances)
    assert all(i.complete for i in instances)
    assert groups_by_source(preds, instances) == [[k] for k in range(len(s.instances))]
    for inst in instances:
        assert len({preds[k].source[0] for k in inst.part_indices}) == 1


def test_spurious_part_is_discarded(lattice):
    s, preds = lattice
    far = BinaryMask.from_local(s.width, s.height, 0, 0, np.ones((3, 3), bool))
    extra = PartPrediction(far, 0.99, (0.0, 0.0), [(500.0, 500.0)])
    instances, discarded = aggregate(preds + [extra])
    assert discarded == [len(preds)]
    assert len(instances) == len(s.instances)


def test_single_part_objects():
    t = shape_template("disk", 4)
    s = lattice_scene(t, 4, seed=0)
    preds = ground_truth_predictions(s)
    assert all(p.v == [] for p in preds)
    instances, discarded = aggregate(preds)
    assert len(instances) == 4 and discarded == []
    assert all(i.complete and len(i.part_indices) == 1 for i in instances)


def test_adversarial_pair():
    s = parallel_pair()
    preds = ground_truth_predictions(s, 0.0)
    instances, discarded = aggregate(preds)
    assert discarded == []
    assert groups_by_source(preds, instances) == [[0], [1]]
    # cross-instance neighbors are nearer than siblings
    c = np.array([corrected_center(p) for p in preds])
    d = np.hypot(*(c[:, None] - c[None]).transpose(2, 0, 1))
    sib = d[0, 1]
    cross = min(d[i, j] for i in range(4) for j in range(4)
                if preds[i].source[0] != preds[j].source[0])
    assert cross < sib


def test_graph_edges_within_eps(lattice):
    s, preds = lattice
    cfg = AggregateConfig()
    instances, _, graph = aggregate(preds, cfg, return_graph=True)
    assert len(graph.edges) == sum(len(i.part_indices) - 1 for i in instances)
    for a, b, r in graph.edges:
        assert r <= part_epsilon(preds[a], cfg)


def test_empty_and_config():
    assert aggregate([]) == ([], [])
    with pytest.raises(ValueError):
        AggregateConfig(epsilon_ratio=0)


@settings(max_examples=20)
@given(st.integers(0, 10 ** 6), st.floats(0, 6), st.floats(0, 0.5))
def test_output_covers_every_part_once(seed, sigma, p_spur):
    from partseg.scenegen import PerturbationConfig, compose_scene, perturb
    t = shape_template("L", 3)
    s = compose_scene(t, (4, 8), (100, 100), seed)
    preds = perturb(ground_truth_predictions(s),
                    PerturbationConfig(sigma, sigma, 0.1, p_spur, 1, seed=seed),
                    n_instances=len(s.instances))
    instances, discarded = aggregate(preds)
    used = [k for i in instances for k in i.part_indices] + discarded
    assert sorted(used) == list(range(len(preds)))
    again = aggregate(preds)
    assert [i.part_indices for i in again[0]] == [i.part_indices for i in instances]


def test_reverse_check_rejects_one_way_match():
    m = [rect_mask(4, 4, x, 10, 60, 30) for x in (5, 25)]
    # part 0 points at part 1, whose offsets point elsewhere
    preds = [PartPrediction(m[0], 1.0, (0.0, 0.0), [(20.0, 0.0)]),
             PartPrediction(m[1], 0.5, (0.0, 0.0), [(-14.0, 0.0)])]
    assert len(aggregate(preds)[0]) == 1
    inst, disc = aggregate(preds, AggregateConfig(reverse_check=True))
    assert inst == [] and disc == [0, 1]


# -- refinement ---------------------------------------------------------------

def test_refine_mask():
    a = rect_mask(5, 6, 2, 2, 20, 12)
    b = rect_mask(5, 6, 8, 2, 20, 12)  # one empty column between them
    inst = AssembledInstance([0, 1], union_all([a, b]), True)
    assert refine_mask(inst, 0) == inst.merged_mask
    assert len(connected_components(refine_mask(inst, 1))) == 1
    solid = AssembledInstance([0], rect_mask(6, 6, 3, 3, 20, 12), True)
    assert refine_mask(solid, 2) == solid.merged_mask


# -- Hungarian baseline ----------------------------------------------------------

@settings(max_examples=60)
@given(st.integers(1, 7), st.integers(0, 10 ** 6))
def test_solve_assignment_matches_scipy(n, seed):
    c = np.random.default_rng(seed).normal(size=(n, n))
    col = solve_assignment(c)
    assert sorted(col.tolist()) == list(range(n))
    r, k = linear_sum_assignment(c)
    assert c[np.arange(n), col].sum() == pytest.approx(c[r, k].sum(), abs=1e-9)
    if n <= 5:
        brute = min(sum(c[i, p[i]] for i in range(n)) for p in itertools.permutations(range(n)))
        assert c[np.arange(n), col].sum() == pytest.approx(brute, abs=1e-9)


def test_solve_assignment_errors():
    assert solve_assignment(np.zeros((0, 0))).tolist() == []
    with pytest.raises(ValueError):
        solve_assignment(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        solve_assignment(np.array([[0, np.inf], [1, 0]]))


def test_baseline_costs_symmetric(lattice):
    _, preds = lattice
    c = baseline_costs(preds, 1.0)
    assert np.allclose(c, c.T)
    lit = baseline_costs(preds, 1.0, literal=True)
    assert np.all(lit <= 0)


def test_baseline_far_instances_agree(lattice):
    _, preds = lattice
    hung = hungarian_baseline(preds, 1.0, 2)
    bidir, _ = aggregate(preds)
    assert sorted(i.part_indices for i in hung) == sorted(sorted(i.part_indices) for i in bidir)


def test_baseline_crosses_adversarial_pair():
    s = parallel_pair()
    preds = ground_truth_predictions(s, 0.0)
    hung = hungarian_baseline(preds, 1.0, 2)
    crossed = [i for i in hung if len({preds[k].source[0] for k in i.part_indices}) > 1]
    assert crossed


def test_baseline_odd_count_warns(lattice):
    _, preds = lattice
    with pytest.warns(OddPartCount):
        hung = hungarian_baseline(preds[:-1], 1.0, 2)
    assert sum(len(i.part_indices) for i in hung) == len(preds) - 1
    assert sum(not i.complete for i in hung) == 1


def test_baseline_three_part_groups():
    t = shape_template("U", 3)
    assert t.n_parts == 3
    s = lattice_scene(t, 4, seed=2)
    preds = ground_truth_predictions(s, 0.0)
    hung = hungarian_baseline(preds, 1.0, 3)
    assert sorted(k for i in hung for k in i.part_indices) == list(range(len(preds)))
    assert all(len(i.part_indices) <= 3 for i in hung)
    assert groups_by_source(preds, hung) == [[k] for k in range(4)]
