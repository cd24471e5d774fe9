import numpy as np
import pytest
from hypothesis import given, strategies as st

from coplanar.model import (
    JointLabeling,
    KeypointLabel,
    LabelUniverse,
    PatternParams,
    SceneParams,
    SurfaceGmm,
    coplanar_repeat_groups,
    connected_surface_components,
)


def test_background_keypoint_cannot_be_grouped():
    with pytest.raises(ValueError):
        KeypointLabel(2, 0)
    with pytest.raises(ValueError):
        JointLabeling([1], [0], [])


def test_all_background_has_no_groups():
    assert coplanar_repeat_groups(JointLabeling.background(5, 0)) == []


def test_groups_split_by_surface():
    y = JointLabeling([1, 1, 1], [1, 1, 2], [])
    got = {(g, v): s for g, v, s in coplanar_repeat_groups(y)}
    assert got == {(1, 1): frozenset({0, 1}), (1, 2): frozenset({2})}


def _bucket_groups(y):
    buckets = {}
    for i in range(y.n_keypoints):
        g, v = int(y.kp_group[i]), int(y.kp_surface[i])
        if g and v:
            buckets.setdefault((g, v), set()).add(i)
    return {k: frozenset(s) for k, s in buckets.items()}


def _random_labeling(rng, n, n_groups=4, n_planes=3):
    v = rng.integers(0, n_planes + 1, n)
    g = np.where(v > 0, rng.integers(0, n_groups + 1, n), 0)
    return JointLabeling(g, v, [])


@pytest.mark.parametrize("seed", range(10))
def test_groups_match_bucket_sort(seed):
    y = _random_labeling(np.random.default_rng(seed), 50)
    got = {(g, v): s for g, v, s in coplanar_repeat_groups(y)}
    assert got == _bucket_groups(y)


@given(st.integers(0, 10_000), st.integers(0, 60))
def test_groups_and_singletons_partition_keypoints(seed, n):
    y = _random_labeling(np.random.default_rng(seed), n)
    sets = [s for _, _, s in coplanar_repeat_groups(y)]
    singles = set(np.flatnonzero(y.kp_group == 0).tolist())
    union = set().union(*sets) if sets else set()
    assert sum(len(s) for s in sets) + len(singles) == n
    assert union | singles == set(range(n))
    assert not union & singles


def _grid_adjacency(w, h):
    pairs = []
    for r in range(h):
        for c in range(w):
            i = r * w + c
            if c + 1 < w:
                pairs.append((i, i + 1))
            if r + 1 < h:
                pairs.append((i, i + w))
    return pairs


def test_uniform_grid_is_one_component():
    y = JointLabeling([], [], np.full(12, 2))
    assert connected_surface_components(y, _grid_adjacency(4, 3)) == [frozenset(range(12))]


def test_checkerboard_cells_are_separate():
    w, h = 4, 4
    labels = [(r + c) % 2 + 1 for r in range(h) for c in range(w)]
    comps = connected_surface_components(JointLabeling([], [], labels), _grid_adjacency(w, h))
    assert sorted(len(c) for c in comps) == [1] * 16


def _union_find_components(labels, pairs):
    parent = list(range(len(labels)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for p, q in pairs:
        if labels[p] == labels[q]:
            parent[find(p)] = find(q)
    comps = {}
    for i in range(len(labels)):
        comps.setdefault(find(i), set()).add(i)
    return {frozenset(c) for c in comps.values()}


@pytest.mark.parametrize("seed", range(10))
def test_components_match_union_find(seed):
    rng = np.random.default_rng(seed)
    r = 40
    labels = rng.integers(0, 3, r)
    pairs = {tuple(sorted(p)) for p in rng.integers(0, r, (60, 2)) if p[0] != p[1]}
    got = connected_surface_components(JointLabeling([], [], labels), sorted(pairs))
    assert set(got) == _union_find_components(labels.tolist(), pairs)


def _params():
    patterns = {
        1: PatternParams(np.zeros(4), {1: 0.0, 2: 0.1}),
        2: PatternParams(np.ones(4) / 2, {2: 0.3}),
    }
    lines = {1: np.array([0.0, 0.0, 1.0]), 2: np.array([0.1, 0.0, 1.0])}
    return SceneParams(patterns, lines)


def test_universe_classes_partition_labels():
    u = LabelUniverse.from_params(_params())
    assert u.labels == [(1, 1), (1, 2), (2, 2), (0, 1), (0, 2), (0, 0)]
    planes = u.plane_classes()
    flat = np.concatenate(list(planes.values()))
    # every non-background label in exactly one plane class
    assert sorted(flat.tolist()) == [i for i, (_, v) in enumerate(u.labels) if v]
    patterns = u.pattern_classes()
    flat = np.concatenate(list(patterns.values()))
    assert sorted(flat.tolist()) == [i for i, (g, _) in enumerate(u.labels) if g]


def test_params_reject_unknown_surface():
    with pytest.raises(ValueError):
        SceneParams({1: PatternParams(np.zeros(2), {3: 0.0})}, {1: np.array([0, 0, 1.0])})


def test_gmm_weights_must_sum_to_one():
    with pytest.raises(ValueError):
        SurfaceGmm(np.zeros((2, 3)), np.stack([np.eye(3)] * 2), [0.5, 0.6])
