"""Feature potentials and the weighted scene energy.

Every feature is stored as a penalty. The scale term is written as a reward
in its usual form; here its sign lives in ``w_scale >= 0`` instead.
"""
from typing import Dict, Optional

import numpy as np
from scipy.spatial import cKDTree

from .config import AUTO, EnergyWeights
from .errors import MissingGmm, MissingPattern, SideViolation
from .geometry import rectified_log_scales
from .model import BACKGROUND, SINGLETON, JointLabeling, LabelUniverse, SceneData, SceneParams


def descriptor_knn_pairs(descriptors, k=10) -> np.ndarray:
    """Symmetrized k-nearest-neighbour pairs (i < j) in descriptor space."""
    d = np.asarray(descriptors, dtype=float)
    n = len(d)
    if n < 2 or k < 1:
        return np.zeros((0, 2), dtype=np.int64)
    kk = min(k + 1, n)
    _, nbr = cKDTree(d).query(d, k=kk)
    i = np.repeat(np.arange(n), kk - 1)
    j = nbr[:, 1:].ravel()
    pairs = np.sort(np.stack([i, j], axis=1), axis=1)
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    return np.unique(pairs, axis=0).astype(np.int64)


def resolve_lambda(data: SceneData, weights: EnergyWeights) -> float:
    if weights.lambda_ != AUTO:
        return float(weights.lambda_)
    if len(data.region_phi) == 0:
        return 1.0
    lam = 2.0 * float(np.mean(data.region_phi**2))
    return lam if lam > 0 else 1.0


def kp_pair_weights(data: SceneData, weights: EnergyWeights) -> np.ndarray:
    p = data.kp_pairs
    diff = data.descriptors[p[:, 0]] - data.descriptors[p[:, 1]]
    return np.exp(-np.sum(diff * diff, axis=1) / weights.sigma2_sq)


def region_pair_weights(data: SceneData, weights: EnergyWeights) -> np.ndarray:
    return np.exp(-data.region_phi**2 / resolve_lambda(data, weights))


def keypoint_log_rect_scales(data: SceneData, y: JointLabeling, params: SceneParams) -> np.ndarray:
    """Rectified log scale of each planar keypoint under its plane's line (NaN elsewhere)."""
    out = np.full(data.n_keypoints, np.nan)
    for n in np.unique(y.kp_surface):
        if n == BACKGROUND:
            continue
        idx = np.flatnonzero(y.kp_surface == n)
        if int(n) not in params.plane_lines:
            raise MissingPattern(f"surface {n} has no vanishing line")
        z = rectified_log_scales(params.plane_lines[int(n)], data.frames[idx], data.log_scales[idx])
        if np.any(np.isnan(z)):
            raise SideViolation(f"keypoint on the wrong side of the vanishing line of surface {n}")
        out[idx] = z
    return out


def scale_feature(data: SceneData, y: JointLabeling, params: SceneParams) -> float:
    grouped = (y.kp_group != SINGLETON) & (y.kp_surface != BACKGROUND)
    if not grouped.any():
        return 0.0
    z = keypoint_log_rect_scales(data, y, params)
    total = 0.0
    for i in np.flatnonzero(grouped):
        g, n = int(y.kp_group[i]), int(y.kp_surface[i])
        try:
            ref = params.patterns[g].mean_log_rect_scale[n]
        except KeyError:
            raise MissingPattern(f"no mean rectified scale for group {g} on surface {n}") from None
        total += (z[i] - ref) ** 2
    return float(total)


def appearance_feature(data: SceneData, y: JointLabeling, params: SceneParams, weights: EnergyWeights) -> float:
    total = 0.0
    for g in np.unique(y.kp_group):
        if g == SINGLETON:
            continue
        if int(g) not in params.patterns:
            raise MissingPattern(f"no pattern parameters for group {g}")
        d = data.descriptors[y.kp_group == g] - params.patterns[int(g)].mean_descriptor
        total += float(np.sum(d * d))
    return total / weights.sigma1_sq


def region_color_costs(data: SceneData, gmm) -> np.ndarray:
    """Per-region mean over sampled pixels of the min-component cost."""
    if data.n_regions == 0:
        return np.zeros(0)
    c = gmm.pixel_costs(data.region_samples)
    sums = np.add.reduceat(c, data.region_offsets[:-1])
    return sums / np.diff(data.region_offsets)


def color_feature(data: SceneData, y: JointLabeling, params: SceneParams) -> float:
    total = 0.0
    for n in np.unique(y.region_surface):
        if int(n) not in params.surface_gmms:
            raise MissingGmm(f"no colour model for surface {n}")
        costs = region_color_costs(data, params.surface_gmms[int(n)])
        total += float(costs[y.region_surface == n].sum())
    return total


def keypoint_contrast_feature(data: SceneData, y: JointLabeling, weights: EnergyWeights) -> float:
    p = data.kp_pairs
    if not len(p):
        return 0.0
    cut = y.kp_surface[p[:, 0]] != y.kp_surface[p[:, 1]]
    return float(kp_pair_weights(data, weights)[cut].sum())


def region_contrast_feature(data: SceneData, y: JointLabeling, weights: EnergyWeights) -> float:
    p = data.region_pairs
    if not len(p):
        return 0.0
    cut = y.region_surface[p[:, 0]] != y.region_surface[p[:, 1]]
    return float(region_pair_weights(data, weights)[cut].sum())


def overlap_feature(data: SceneData, y: JointLabeling) -> float:
    p = data.overlap_pairs
    if not len(p):
        return 0.0
    return float(np.count_nonzero(y.kp_surface[p[:, 0]] != y.region_surface[p[:, 1]]))


def singleton_feature(y: JointLabeling):
    single = y.kp_group == SINGLETON
    return int(single.sum()), int((single & (y.kp_surface != BACKGROUND)).sum())


def used_classes(y: JointLabeling, universe: Optional[LabelUniverse] = None):
    planes = set(np.unique(y.kp_surface).tolist()) | set(np.unique(y.region_surface).tolist())
    planes.discard(BACKGROUND)
    patterns = set(np.unique(y.kp_group).tolist())
    patterns.discard(SINGLETON)
    if universe is not None:
        planes &= set(universe.plane_classes())
        patterns &= set(universe.pattern_classes())
    return planes, patterns


def label_subset_cost(y: JointLabeling, universe: Optional[LabelUniverse], weights: EnergyWeights) -> float:
    planes, patterns = used_classes(y, universe)
    return weights.subset_cost_plane * len(planes) + weights.subset_cost_pattern * len(patterns)


def features(data: SceneData, y: JointLabeling, params: SceneParams, weights: EnergyWeights,
             universe: Optional[LabelUniverse] = None) -> Dict[str, float]:
    """Raw feature values keyed by the name of the weight that multiplies them."""
    n_single, n_planar = singleton_feature(y)
    planes, patterns = used_classes(y, universe)
    return {
        "w_scale": scale_feature(data, y, params),
        "w_app": appearance_feature(data, y, params, weights),
        "w_color": color_feature(data, y, params),
        "w_kp_contrast": keypoint_contrast_feature(data, y, weights),
        "w_rgn_contrast": region_contrast_feature(data, y, weights),
        "w_overlap": overlap_feature(data, y),
        "w_singleton": float(n_single),
        "w_planar_singleton": float(n_planar),
        "subset_cost_plane": float(len(planes)),
        "subset_cost_pattern": float(len(patterns)),
    }


def total_energy(data: SceneData, y: JointLabeling, params: SceneParams, weights: EnergyWeights,
                 universe: Optional[LabelUniverse] = None) -> float:
    psi = features(data, y, params, weights, universe)
    return float(sum(getattr(weights, k) * v for k, v in psi.items() if v != 0.0))


def keypoint_unaries(data: SceneData, params: SceneParams, universe: LabelUniverse, weights: EnergyWeights) -> np.ndarray:
    """Weighted unary cost of every keypoint under every label; inf where infeasible.

    A keypoint is infeasible for any label on surface n unless all its frame
    points lie on the positive side of that surface's line.
    """
    n = data.n_keypoints
    out = np.zeros((n, len(universe)))
    if n == 0:
        return out
    z_by_plane = {}
    for v, line in params.plane_lines.items():
        z_by_plane[v] = rectified_log_scales(line, data.frames, data.log_scales)
    app_by_group = {}
    for g, p in params.patterns.items():
        d = data.descriptors - p.mean_descriptor
        app_by_group[g] = np.sum(d * d, axis=1) / weights.sigma1_sq
    for a, (g, v) in enumerate(universe.labels):
        col = np.zeros(n)
        if v != BACKGROUND:
            z = z_by_plane[v]
            col[np.isnan(z)] = np.inf
        if g != SINGLETON:
            ref = params.patterns[g].mean_log_rect_scale[v]
            with np.errstate(invalid="ignore"):
                col += weights.w_scale * (z - ref) ** 2 if weights.w_scale else 0.0
            col += weights.w_app * app_by_group[g] if weights.w_app else 0.0
        else:
            col += weights.w_singleton
            if v != BACKGROUND:
                col += weights.w_planar_singleton
        col[np.isnan(col)] = np.inf
        out[:, a] = col
    return out


def region_unaries(data: SceneData, params: SceneParams, universe: LabelUniverse, weights: EnergyWeights) -> np.ndarray:
    """Weighted colour cost of every region under every label; inf for grouped labels."""
    r = data.n_regions
    out = np.full((r, len(universe)), np.inf)
    if r == 0:
        return out
    cache = {}
    for a, (g, v) in enumerate(universe.labels):
        if g != SINGLETON:
            continue
        if v not in cache:
            if weights.w_color == 0:
                cache[v] = np.zeros(r)
            elif v in params.surface_gmms:
                cache[v] = weights.w_color * region_color_costs(data, params.surface_gmms[v])
            else:
                cache[v] = np.full(r, np.inf)
        out[:, a] = cache[v]
    return out
