"""Discrete labeling by alpha-expansion with label subset costs.

``LabelingProblem`` is the generic form: unary tables, Potts-on-key pairwise
terms and class costs. ``build_problem`` poses the scene energy at fixed
parameters in that form (keypoint sites first, then regions).
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .config import EnergyWeights
from .energy import keypoint_unaries, kp_pair_weights, region_pair_weights, region_unaries
from .errors import InfeasibleMove
from .maxflow import FlowNetwork
from .model import SINGLETON, JointLabeling, LabelUniverse, SceneData, SceneParams

log = logging.getLogger(__name__)


@dataclass
class LabelingProblem:
    """E(f) = sum unary[s, f_s] + sum w_e [key[f_p] != key[f_q]] + sum_C h_C [C used]."""

    unary: np.ndarray
    edges: np.ndarray
    edge_weights: np.ndarray
    label_keys: np.ndarray
    classes: List[Tuple[np.ndarray, float]] = field(default_factory=list)
    order: Optional[Sequence[int]] = None

    def __post_init__(self):
        self.unary = np.asarray(self.unary, dtype=float)
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        self.edge_weights = np.asarray(self.edge_weights, dtype=float).ravel()
        self.label_keys = np.asarray(self.label_keys, dtype=np.int64).ravel()
        if np.any(self.edge_weights < 0):
            raise ValueError("pairwise weights must be nonnegative")
        if any(h < 0 for _, h in self.classes):
            raise ValueError("subset costs must be nonnegative")
        self.classes = [(np.asarray(c, dtype=np.int64), float(h)) for c, h in self.classes]
        self._class_mask = np.zeros((len(self.classes), self.n_labels), dtype=bool)
        for k, (c, _) in enumerate(self.classes):
            self._class_mask[k, c] = True
        self._class_cost = np.array([h for _, h in self.classes])
        if self.order is None:
            self.order = list(range(self.n_labels))

    @property
    def n_sites(self):
        return self.unary.shape[0]

    @property
    def n_labels(self):
        return self.unary.shape[1]

    def energy(self, labels) -> float:
        f = np.asarray(labels, dtype=np.int64)
        e = float(self.unary[np.arange(self.n_sites), f].sum()) if self.n_sites else 0.0
        if len(self.edges):
            cut = self.label_keys[f[self.edges[:, 0]]] != self.label_keys[f[self.edges[:, 1]]]
            e += float(self.edge_weights[cut].sum())
        if len(self.classes):
            used = np.zeros(self.n_labels, dtype=bool)
            used[f] = True
            e += float(self._class_cost[(self._class_mask & used).any(axis=1)].sum())
        return e

    def energies(self, F) -> np.ndarray:
        """Vectorized energy for a batch of labelings, shape (B, n_sites)."""
        F = np.asarray(F, dtype=np.int64)
        e = self.unary[np.arange(self.n_sites)[None, :], F].sum(axis=1)
        if len(self.edges):
            k = self.label_keys[F]
            e = e + ((k[:, self.edges[:, 0]] != k[:, self.edges[:, 1]]) * self.edge_weights).sum(axis=1)
        for c, h in self.classes:
            e = e + h * np.isin(F, c).any(axis=1)
        return e


@dataclass
class MoveStats:
    moves: int = 0
    accepted: int = 0
    increases: int = 0
    mismatches: int = 0
    max_mismatch: float = 0.0
    energies: List[float] = field(default_factory=list)


def expansion_move(problem: LabelingProblem, labels, alpha, stats: Optional[MoveStats] = None):
    """One alpha-expansion; returns the proposed labeling and its model energy.

    Raises InfeasibleMove when no site that does not already hold alpha can take it.
    """
    f = np.asarray(labels, dtype=np.int64)
    keys = problem.label_keys
    ka = keys[alpha]
    ua = problem.unary[:, alpha]
    var_mask = (f != alpha) & np.isfinite(ua)
    var = np.flatnonzero(var_mask)
    if not len(var):
        raise InfeasibleMove(f"label {alpha} cannot be taken by any site")
    node = np.full(problem.n_sites, -1, dtype=np.int64)
    node[var] = np.arange(len(var))
    nv = len(var)

    e0 = problem.unary[var, f[var]]
    diff = ua[var] - e0
    model_e0 = float(e0.sum())
    const = model_e0
    tails, heads, caps = [], [], []

    if len(problem.edges):
        p, q = problem.edges[:, 0], problem.edges[:, 1]
        w = problem.edge_weights
        kp, kq = keys[f[p]], keys[f[q]]
        vp, vq = var_mask[p], var_mask[q]
        both = vp & vq
        A = w * (kp != kq)
        B = w * (kp != ka)
        C = w * (ka != kq)
        # both variable
        if both.any():
            Ab, Bb, Cb = A[both], B[both], C[both]
            const += float(Ab.sum())
            model_e0 += float(Ab.sum())
            np.add.at(diff, node[p[both]], Cb - Ab)
            np.add.at(diff, node[q[both]], -Cb)
            tails.append(node[p[both]])
            heads.append(node[q[both]])
            caps.append(np.maximum(Bb + Cb - Ab, 0.0))
        # one side variable: the fixed neighbour keeps its label
        only_p = vp & ~vq
        if only_p.any():
            const += float(A[only_p].sum())
            model_e0 += float(A[only_p].sum())
            np.add.at(diff, node[p[only_p]], C[only_p] - A[only_p])
        only_q = vq & ~vp
        if only_q.any():
            # from q's side: keep costs A, taking alpha costs w [key(f_p) != ka] = B
            const += float(A[only_q].sum())
            model_e0 += float(A[only_q].sum())
            np.add.at(diff, node[q[only_q]], B[only_q] - A[only_q])

    aux_diff = []
    for k, (c, h) in enumerate(problem.classes):
        if h == 0:
            continue
        in_c = problem._class_mask[k][f]
        if problem._class_mask[k, alpha]:
            if in_c.any():
                const += h
                model_e0 += h
                continue
            # class unused: pay h if any site switches to alpha
            y = nv + len(aux_diff)
            aux_diff.append(h)
            tails.append(np.full(nv, y))
            heads.append(np.arange(nv))
            caps.append(np.full(nv, h))
        else:
            members = np.flatnonzero(in_c)
            if not len(members):
                continue
            model_e0 += h
            if not var_mask[members].all():
                const += h
                continue
            # pay h unless every current member switches to alpha
            y = nv + len(aux_diff)
            aux_diff.append(-h)
            const += h
            tails.append(node[members])
            heads.append(np.full(len(members), y))
            caps.append(np.full(len(members), h))

    d = np.concatenate([diff, np.array(aux_diff, dtype=float)])
    const += float(np.minimum(d, 0.0).sum())
    net = FlowNetwork(len(d))
    net.source_cap = np.maximum(d, 0.0)
    net.sink_cap = np.maximum(-d, 0.0)
    if tails:
        net.add_edges(np.concatenate(tails), np.concatenate(heads), np.concatenate(caps))
    flow, side = net.maxflow()
    x = side[:nv].astype(bool)
    new = f.copy()
    new[var[x]] = alpha
    if stats is not None:
        stats.moves += 1
    return new, const + flow - model_e0


def solve_labeling_problem(problem: LabelingProblem, init, sweeps_max=10, tol=1e-9, debug=False,
                           stats: Optional[MoveStats] = None):
    """Sweep expansions over all labels until a sweep gains no more than ``tol``."""
    f = np.asarray(init, dtype=np.int64).copy()
    e = problem.energy(f)
    if not np.isfinite(e):
        raise ValueError("initial labeling is infeasible")
    stats = MoveStats() if stats is None else stats
    stats.energies.append(e)
    for _ in range(sweeps_max):
        start = e
        for alpha in problem.order:
            try:
                new, delta = expansion_move(problem, f, alpha, stats)
            except InfeasibleMove:
                continue
            if np.array_equal(new, f):
                continue
            e_new = problem.energy(new)
            scale = max(1.0, abs(e))
            if e_new > e + 1e-9 * scale:
                stats.increases += 1
                log.warning("expansion on label %d proposed an energy increase %.3g", alpha, e_new - e)
            if debug:
                gap = abs((e + delta) - e_new)
                stats.max_mismatch = max(stats.max_mismatch, gap / scale)
                if gap > 1e-6 * scale:
                    stats.mismatches += 1
            if e_new < e - 1e-12 * scale:
                f, e = new, e_new
                stats.accepted += 1
                stats.energies.append(e)
        if start - e <= tol:
            break
    return f, e


def build_problem(data: SceneData, params: SceneParams, universe: LabelUniverse, weights: EnergyWeights) -> LabelingProblem:
    nk, nr = data.n_keypoints, data.n_regions
    unary = np.vstack([
        keypoint_unaries(data, params, universe, weights),
        region_unaries(data, params, universe, weights),
    ])
    edges, ew = [], []
    if len(data.kp_pairs) and weights.w_kp_contrast:
        edges.append(data.kp_pairs)
        ew.append(weights.w_kp_contrast * kp_pair_weights(data, weights))
    if len(data.region_pairs) and weights.w_rgn_contrast:
        edges.append(data.region_pairs + nk)
        ew.append(weights.w_rgn_contrast * region_pair_weights(data, weights))
    if len(data.overlap_pairs) and weights.w_overlap:
        edges.append(data.overlap_pairs + np.array([0, nk]))
        ew.append(np.full(len(data.overlap_pairs), weights.w_overlap))
    classes = []
    if weights.subset_cost_plane:
        classes += [(c, weights.subset_cost_plane) for _, c in sorted(universe.plane_classes().items())]
    if weights.subset_cost_pattern:
        classes += [(c, weights.subset_cost_pattern) for _, c in sorted(universe.pattern_classes().items())]
    return LabelingProblem(
        unary.reshape(nk + nr, len(universe)),
        np.vstack(edges) if edges else np.zeros((0, 2), dtype=np.int64),
        np.concatenate(ew) if ew else np.zeros(0),
        universe.surfaces,
        classes,
        universe.visit_order(),
    )


def labeling_to_indices(y: JointLabeling, universe: LabelUniverse) -> np.ndarray:
    try:
        kp = [universe.index[(int(g), int(v))] for g, v in zip(y.kp_group, y.kp_surface)]
        rg = [universe.index[(SINGLETON, int(v))] for v in y.region_surface]
    except KeyError as exc:
        raise ValueError(f"labeling uses label {exc.args[0]} outside the universe") from None
    return np.array(kp + rg, dtype=np.int64)


def indices_to_labeling(f, universe: LabelUniverse, n_keypoints) -> JointLabeling:
    f = np.asarray(f, dtype=np.int64)
    return JointLabeling(universe.groups[f[:n_keypoints]], universe.surfaces[f[:n_keypoints]], universe.surfaces[f[n_keypoints:]])


def solve_labeling(data: SceneData, params: SceneParams, universe: LabelUniverse, weights: EnergyWeights,
                   init: JointLabeling, sweeps_max=10, debug=False, stats: Optional[MoveStats] = None):
    """Approximate argmin over labelings at fixed parameters; returns (labeling, energy)."""
    problem = build_problem(data, params, universe, weights)
    f0 = labeling_to_indices(init, universe)
    f, e = solve_labeling_problem(problem, f0, sweeps_max=sweeps_max, debug=debug, stats=stats)
    return indices_to_labeling(f, universe, data.n_keypoints), e
