"""Initial guess for the scene parameters.

Keypoints are clustered by descriptor; pairs of same-cluster keypoints vote for
vanishing lines through the local scale constraint, and lines are verified by
how many clustered keypoints become equiareal after rectification.

Lines are compared by angle on the unit sphere, which is only meaningful in a
normalized image frame (``geometry.normalizing_transform``).
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from .config import ProposalConfig
from .errors import CoplanarError, DegenerateSample
from .geometry import Keypoint, hom_line, keypoint_scale, rectified_log_scales
from .model import BACKGROUND, SINGLETON, JointLabeling, LabelUniverse, PatternParams, SceneData, SceneParams, SurfaceGmm
from .regression import VlineProblem, fit_surface_gmm, refine_vanishing_line, region_sample_weights

log = logging.getLogger(__name__)


@dataclass
class LineHypothesis:
    line: np.ndarray
    inliers: np.ndarray
    seed_group: int = SINGLETON

    @property
    def support(self):
        return len(self.inliers)


@dataclass
class ProposalSet:
    clusters: Dict[int, np.ndarray]
    lines: List[LineHypothesis]
    params: SceneParams
    labeling: JointLabeling
    universe: LabelUniverse
    n_hypotheses: int = 0


def cluster_descriptors(descriptors, tau=0.35) -> np.ndarray:
    """Greedy leader clustering. Returns ids 1..N_G for clusters of size >= 2, 0 for singletons."""
    d = np.asarray(descriptors, dtype=float)
    n = len(d)
    raw = np.zeros(n, dtype=np.int64)
    leaders = []
    for i in range(n):
        if leaders:
            dist = np.linalg.norm(d[leaders] - d[i], axis=1)
            k = int(np.argmin(dist))
            if dist[k] <= tau:
                raw[i] = k
                continue
        raw[i] = len(leaders)
        leaders.append(i)
    out = np.zeros(n, dtype=np.int64)
    sizes = np.bincount(raw, minlength=len(leaders)) if n else np.zeros(0, dtype=np.int64)
    next_id = 1
    for k in range(len(leaders)):
        if sizes[k] >= 2:
            out[raw == k] = next_id
            next_id += 1
    return out


def cluster_members(labels) -> Dict[int, np.ndarray]:
    return {int(g): np.flatnonzero(labels == g) for g in np.unique(labels) if g != SINGLETON}


def _scale_constraint(ki: Keypoint, kj: Keypoint):
    r = (keypoint_scale(ki) / keypoint_scale(kj)) ** (1.0 / 3.0)
    ci = np.append(ki.centroid[:2], 1.0)
    cj = np.append(kj.centroid[:2], 1.0)
    return ci - r * cj


def line_from_two_pairs(pair1: Tuple[Keypoint, Keypoint], pair2: Tuple[Keypoint, Keypoint]) -> np.ndarray:
    """Line on which both pairs are equiareal to first order at their centroids.

    A keypoint at x rectified by unit line l has its area divided by (l^T x)^3,
    so equal preimage areas give l^T (c_i - (s_i/s_j)^(1/3) c_j) = 0 per pair.
    """
    a = _scale_constraint(*pair1)
    b = _scale_constraint(*pair2)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < 1e-12 or nb < 1e-12:
        raise DegenerateSample("pair with coincident centroids and equal scale")
    l = np.cross(a / na, b / nb)
    if np.linalg.norm(l) < 1e-10:
        raise DegenerateSample("scale constraints are parallel")
    l = hom_line(l)
    pts = np.vstack([k.frame for k in (*pair1, *pair2)])
    if np.sum(pts @ l) < 0:
        l = -l
    return l


def verify_line(l, frames, log_scales, clusters, log_tol=0.2) -> np.ndarray:
    """Clustered keypoints whose rectified log scale is within log_tol of their cluster median."""
    z = rectified_log_scales(l, frames, log_scales)
    inl = []
    for g in np.unique(clusters):
        if g == SINGLETON:
            continue
        m = np.flatnonzero((clusters == g) & ~np.isnan(z))
        if len(m) < 2:
            continue
        med = np.median(z[m])
        ok = m[np.abs(z[m] - med) <= log_tol]
        if len(ok) >= 2:
            inl.append(ok)
    return np.sort(np.concatenate(inl)) if inl else np.zeros(0, dtype=np.int64)


def _default_gmm():
    return SurfaceGmm(np.full((1, 3), 0.5), np.eye(3)[None] * 0.05, np.ones(1))


def _empty_proposal(data: SceneData, config: ProposalConfig, clusters) -> ProposalSet:
    params = SceneParams()
    params.surface_gmms[BACKGROUND] = _background_gmm(data, config)
    y = JointLabeling.background(data.n_keypoints, data.n_regions)
    return ProposalSet(cluster_members(clusters), [], params, y, LabelUniverse.from_params(params, {}))


def _background_gmm(data: SceneData, config: ProposalConfig):
    if data.n_regions:
        return fit_surface_gmm(data.region_samples, config.gmm_components, 10, region_sample_weights(data), seed=config.seed)
    cols = data.colors[~np.isnan(data.colors).any(axis=1)]
    if len(cols):
        return fit_surface_gmm(cols, config.gmm_components, 10, seed=config.seed)
    return _default_gmm()


def _local_refine(hyps, frames, logs, clusters, config: ProposalConfig, per_group=3):
    """Refine each cluster's best raw hypotheses on that cluster's inliers, then re-verify."""
    out = []
    for g in sorted({h.seed_group for h in hyps}):
        own = [h for h in hyps if h.seed_group == g]
        own.sort(key=lambda h: (-int(np.sum(clusters[h.inliers] == g)), -h.support))
        for h in own[:per_group]:
            m = h.inliers[clusters[h.inliers] == g]
            l = h.line
            if len(m) >= 3:
                try:
                    l = refine_vanishing_line(VlineProblem(frames[m], logs[m], clusters[m], h.line))
                except (CoplanarError, ValueError):
                    pass
            inl = verify_line(l, frames, logs, clusters, config.log_tol)
            if len(inl):
                out.append(LineHypothesis(l, inl, g))
    return out


def propose(data: SceneData, config: ProposalConfig = None) -> ProposalSet:
    config = config or ProposalConfig()
    rng = np.random.default_rng(config.seed)
    clusters = cluster_descriptors(data.descriptors, config.cluster_tau) if data.n_keypoints else np.zeros(0, np.int64)
    members = cluster_members(clusters)
    if sum(len(m) for m in members.values()) < 4:
        log.info("fewer than 4 clustered keypoints; proposing background only")
        return _empty_proposal(data, config, clusters)

    frames, logs = data.frames, data.log_scales
    ids = np.array(sorted(members))
    sizes = np.array([len(members[g]) for g in ids], dtype=float)
    p_cluster = sizes / sizes.sum()
    hyps = []
    for _ in range(config.n_samples):
        # both pairs from one cluster, so the sample is likely coplanar
        g = ids[rng.choice(len(ids), p=p_cluster)]
        if len(members[g]) < 3:
            continue
        a, b, c, d = rng.choice(members[g], size=4, replace=len(members[g]) < 4)
        pairs = [(data.keypoint(a), data.keypoint(b)), (data.keypoint(c), data.keypoint(d))]
        try:
            l = line_from_two_pairs(*pairs)
        except DegenerateSample:
            continue
        if not all(np.all(k.frame @ l > 0) for pair in pairs for k in pair):
            continue
        inl = verify_line(l, frames, logs, clusters, config.log_tol)
        if len(inl):
            hyps.append(LineHypothesis(l, inl, int(g)))

    pool = _local_refine(hyps, frames, logs, clusters, config)

    # non-maximum suppression on the line sphere, strongest first
    pool.sort(key=lambda h: -h.support)
    kept: List[LineHypothesis] = []
    cos_nms = np.cos(np.deg2rad(config.nms_angle_deg))
    for h in pool:
        if any(abs(float(h.line @ k.line)) > cos_nms for k in kept):
            continue
        kept.append(h)
        if len(kept) >= config.max_planes:
            break
    if not kept:
        return _empty_proposal(data, config, clusters)

    n_kp = data.n_keypoints
    group = np.zeros(n_kp, dtype=np.int64)
    surface = np.zeros(n_kp, dtype=np.int64)
    lines = {n: h.line for n, h in enumerate(kept, start=1)}
    patterns = {g: PatternParams(data.descriptors[m].mean(axis=0), {}) for g, m in members.items()}
    for n, h in enumerate(kept, start=1):
        z = rectified_log_scales(h.line, frames[h.inliers], logs[h.inliers])
        for g in np.unique(clusters[h.inliers]):
            sel = clusters[h.inliers] == g
            patterns[int(g)].mean_log_rect_scale[n] = float(z[sel].mean())
    # each cluster goes to the kept line under which its inliers are most equiareal
    for g, m in members.items():
        best = None
        for n, h in enumerate(kept, start=1):
            inl = np.intersect1d(h.inliers, m)
            if len(inl) < max(2, len(m) // 2):
                continue
            z = rectified_log_scales(h.line, frames[inl], logs[inl])
            # spread, inflated by the fraction of the cluster left out
            key = (float(np.mean((z - z.mean()) ** 2)) * len(m) / len(inl), n)
            if best is None or key < best[0]:
                best = (key, n, inl)
        if best is not None:
            _, n, inl = best
            group[inl] = g
            surface[inl] = n
    params = SceneParams(patterns, lines)

    # colour models: keypoint patches per proposed surface, all regions for the background
    for n, h in enumerate(kept, start=1):
        cols = data.colors[surface == n]
        cols = cols[~np.isnan(cols).any(axis=1)]
        if not len(cols):
            cols = data.colors[h.inliers]
            cols = cols[~np.isnan(cols).any(axis=1)]
        params.surface_gmms[n] = (fit_surface_gmm(cols, config.gmm_components, 10, seed=config.seed)
                                  if len(cols) else _background_gmm(data, config))
    params.surface_gmms[BACKGROUND] = _background_gmm(data, config)
    y = JointLabeling(group, surface, np.zeros(data.n_regions))
    support = {n: float(h.support) for n, h in enumerate(kept, start=1)}
    return ProposalSet(members, kept, params, y, LabelUniverse.from_params(params, support), len(hyps))
