import numpy as np
import pytest

from coplanar.config import EnergyWeights
from coplanar.energy import total_energy
from coplanar.errors import InfeasibleMove
from coplanar.inference import (
    LabelingProblem,
    MoveStats,
    build_problem,
    expansion_move,
    labeling_to_indices,
    solve_labeling,
    solve_labeling_problem,
)
from coplanar.model import JointLabeling
from coplanar.synth import brute_force_problem, random_labeling_problem

from .conftest import truth_params


def test_alpha_everywhere_is_a_skipped_move():
    p = LabelingProblem(np.array([[1.0, 2.0], [3.0, 0.5]]), np.zeros((0, 2)), [], [0, 1])
    with pytest.raises(InfeasibleMove):
        expansion_move(p, [1, 1], 1)
    f, e = solve_labeling_problem(p, [1, 1])
    assert e <= p.energy([1, 1])


def test_one_site_takes_preferred_alpha():
    p = LabelingProblem(np.array([[2.0, 1.0]]), np.zeros((0, 2)), [], [0, 1])
    new, _ = expansion_move(p, [0], 1)
    assert new.tolist() == [1]


def test_alpha_infeasible_everywhere():
    p = LabelingProblem(np.array([[1.0, np.inf], [1.0, np.inf]]), np.zeros((0, 2)), [], [0, 1])
    with pytest.raises(InfeasibleMove):
        expansion_move(p, [0, 0], 1)


def test_zero_pairwise_gives_unary_argmin():
    rng = np.random.default_rng(0)
    U = rng.uniform(0, 5, (30, 6))
    p = LabelingProblem(U, np.zeros((0, 2)), [], np.arange(6))
    f, e = solve_labeling_problem(p, np.zeros(30, dtype=int))
    assert f.tolist() == U.argmin(axis=1).tolist()
    assert e == pytest.approx(U.min(axis=1).sum())


def _feasible_init(p):
    return np.argmin(p.unary, axis=1)


def test_predicted_move_energy_matches_recomputation():
    stats = MoveStats()
    for seed in range(100):
        p = random_labeling_problem(seed)
        solve_labeling_problem(p, _feasible_init(p), debug=True, stats=stats)
    assert stats.mismatches == 0
    assert stats.max_mismatch < 1e-6
    assert stats.increases == 0


def test_tiny_instances_near_exhaustive_optimum():
    close = 0
    for seed in range(200):
        p = random_labeling_problem(seed)
        stats = MoveStats()
        f, e = solve_labeling_problem(p, _feasible_init(p), stats=stats)
        _, e_star = brute_force_problem(p)
        assert e == pytest.approx(p.energy(f))
        assert e >= e_star - 1e-9
        assert stats.increases == 0
        assert all(b <= a + 1e-9 for a, b in zip(stats.energies, stats.energies[1:]))
        close += e <= e_star + 0.05 * abs(e_star) + 1e-9
    assert close >= 190


def test_label_costs_merge_labels():
    # two sites each mildly prefer their own label; one shared class cost makes merging cheaper
    U = np.array([[0.0, 1.0], [1.0, 0.0]])
    p = LabelingProblem(U, np.zeros((0, 2)), [], [1, 2], classes=[([0], 5.0), ([1], 5.0)])
    f, e = solve_labeling_problem(p, [0, 1])
    assert len(set(f.tolist())) == 1
    assert e == pytest.approx(6.0)


def test_scene_problem_energy_matches_total_energy(two_plane_scene):
    data, truth = two_plane_scene
    params, universe = truth_params(data, truth)
    w = EnergyWeights()
    p = build_problem(data, params, universe, w)
    f = labeling_to_indices(truth.labeling, universe)
    assert p.energy(f) == pytest.approx(total_energy(data, truth.labeling, params, w, universe), rel=1e-9)


def _rand_index(a, b):
    a, b = np.asarray(a), np.asarray(b)
    same_a = a[:, None] == a[None, :]
    same_b = b[:, None] == b[None, :]
    iu = np.triu_indices(len(a), 1)
    return float(np.mean(same_a[iu] == same_b[iu]))


def test_solve_labeling_recovers_synthetic_grouping(two_plane_scene):
    data, truth = two_plane_scene
    params, universe = truth_params(data, truth)
    w = EnergyWeights()
    stats = MoveStats()
    y, e = solve_labeling(data, params, universe, w, JointLabeling.background(data.n_keypoints, data.n_regions),
                          debug=True, stats=stats)
    assert e <= total_energy(data, truth.labeling, params, w, universe) + 1e-6
    assert stats.mismatches == 0
    key = lambda yy: yy.kp_group * 100 + yy.kp_surface
    assert _rand_index(key(y), key(truth.labeling)) >= 0.95
