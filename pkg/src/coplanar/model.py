"""Label spaces, joint labelings, parameter containers, and scene measurements.

Id conventions: repeat groups and planar surfaces are numbered from 1. Group 0
is the singleton token and surface 0 is the background token.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import CoplanarError, GeometryError
from .geometry import Keypoint, dehomogenize, signed_area, EPS_AREA

SINGLETON = 0
BACKGROUND = 0


@dataclass(frozen=True)
class KeypointLabel:
    group: int = SINGLETON
    surface: int = BACKGROUND

    def __post_init__(self):
        if self.group < 0 or self.surface < 0:
            raise ValueError("label ids must be nonnegative")
        if self.surface == BACKGROUND and self.group != SINGLETON:
            raise ValueError("background keypoints cannot belong to a repeat group")


@dataclass(frozen=True)
class RegionLabel:
    surface: int = BACKGROUND

    def __post_init__(self):
        if self.surface < 0:
            raise ValueError("surface id must be nonnegative")


class JointLabeling:
    """Per-keypoint (group, surface) pairs and per-region surfaces, as int arrays."""

    def __init__(self, kp_group, kp_surface, region_surface):
        self.kp_group = np.asarray(kp_group, dtype=np.int64).copy()
        self.kp_surface = np.asarray(kp_surface, dtype=np.int64).copy()
        self.region_surface = np.asarray(region_surface, dtype=np.int64).copy()
        if self.kp_group.shape != self.kp_surface.shape:
            raise ValueError("keypoint group and surface arrays differ in length")
        if np.any(self.kp_group < 0) or np.any(self.kp_surface < 0) or np.any(self.region_surface < 0):
            raise ValueError("label ids must be nonnegative")
        if np.any((self.kp_surface == BACKGROUND) & (self.kp_group != SINGLETON)):
            raise ValueError("background keypoints cannot belong to a repeat group")

    @classmethod
    def from_labels(cls, keypoint_labels: Sequence[KeypointLabel], region_labels: Sequence[RegionLabel]):
        return cls(
            [k.group for k in keypoint_labels],
            [k.surface for k in keypoint_labels],
            [r.surface for r in region_labels],
        )

    @classmethod
    def background(cls, n_keypoints, n_regions):
        return cls(np.zeros(n_keypoints), np.zeros(n_keypoints), np.zeros(n_regions))

    @property
    def n_keypoints(self):
        return len(self.kp_group)

    @property
    def n_regions(self):
        return len(self.region_surface)

    def keypoint_label(self, i) -> KeypointLabel:
        return KeypointLabel(int(self.kp_group[i]), int(self.kp_surface[i]))

    def copy(self):
        return JointLabeling(self.kp_group, self.kp_surface, self.region_surface)

    def __eq__(self, other):
        return (
            isinstance(other, JointLabeling)
            and np.array_equal(self.kp_group, other.kp_group)
            and np.array_equal(self.kp_surface, other.kp_surface)
            and np.array_equal(self.region_surface, other.region_surface)
        )

    def __repr__(self):
        return f"JointLabeling({self.n_keypoints} keypoints, {self.n_regions} regions)"


@dataclass
class PatternParams:
    mean_descriptor: np.ndarray
    mean_log_rect_scale: Dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        self.mean_descriptor = np.asarray(self.mean_descriptor, dtype=float)
        if not np.all(np.isfinite(self.mean_descriptor)):
            raise ValueError("mean descriptor must be finite")
        if not all(np.isfinite(v) for v in self.mean_log_rect_scale.values()):
            raise ValueError("mean log rectified scales must be finite")


LOG_2PI = np.log(2.0 * np.pi)
MIN_EIG = 1e-6


def regularize_covariance(cov, min_eig=MIN_EIG):
    """Symmetrize and clip eigenvalues from below.

    Clipping is the exact maximizer of the Gaussian likelihood under the
    eigenvalue floor, so hard-EM stays an ascent method.
    """
    cov = 0.5 * (cov + np.swapaxes(cov, -1, -2))
    w, v = np.linalg.eigh(cov)
    w = np.maximum(w, min_eig)
    return (v * w[..., None, :]) @ np.swapaxes(v, -1, -2)


@dataclass
class SurfaceGmm:
    means: np.ndarray
    covariances: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=float).reshape(-1, 3)
        self.covariances = np.asarray(self.covariances, dtype=float).reshape(-1, 3, 3)
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        k = len(self.weights)
        if self.means.shape[0] != k or self.covariances.shape[0] != k or k == 0:
            raise ValueError("GMM component arrays disagree in size")
        if np.any(self.weights <= 0) or abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError("GMM weights must be positive and sum to 1")
        self._prepare()

    def _prepare(self):
        self._chol = np.linalg.cholesky(self.covariances)
        logdet = 2.0 * np.log(np.diagonal(self._chol, axis1=1, axis2=2)).sum(axis=1)
        self._const = 0.5 * (3 * LOG_2PI + logdet) - np.log(self.weights)

    @property
    def n_components(self):
        return len(self.weights)

    def component_costs(self, pixels) -> np.ndarray:
        """-log(N(x; mu_k, Sigma_k) * pi_k) for every pixel and component, (N, K)."""
        x = np.asarray(pixels, dtype=float).reshape(-1, 3)
        out = np.empty((x.shape[0], self.n_components))
        for k in range(self.n_components):
            d = (x - self.means[k]).T
            z = np.linalg.solve(self._chol[k], d) if d.size else d
            out[:, k] = 0.5 * np.sum(z * z, axis=0) + self._const[k]
        return out

    def pixel_costs(self, pixels) -> np.ndarray:
        c = self.component_costs(pixels)
        if c.shape[1] == 0:
            return np.zeros(c.shape[0])
        return c.min(axis=1)


@dataclass
class SceneParams:
    patterns: Dict[int, PatternParams] = field(default_factory=dict)
    plane_lines: Dict[int, np.ndarray] = field(default_factory=dict)
    surface_gmms: Dict[int, SurfaceGmm] = field(default_factory=dict)

    def __post_init__(self):
        for g, p in self.patterns.items():
            missing = set(p.mean_log_rect_scale) - set(self.plane_lines)
            if missing:
                raise ValueError(f"pattern {g} references surfaces without a vanishing line: {sorted(missing)}")

    @property
    def n_groups(self):
        return len(self.patterns)

    @property
    def n_planes(self):
        return len(self.plane_lines)

    def copy(self):
        return SceneParams(
            {g: PatternParams(p.mean_descriptor.copy(), dict(p.mean_log_rect_scale)) for g, p in self.patterns.items()},
            {n: np.array(l, dtype=float) for n, l in self.plane_lines.items()},
            {n: SurfaceGmm(m.means.copy(), m.covariances.copy(), m.weights.copy()) for n, m in self.surface_gmms.items()},
        )


@dataclass
class LabelUniverse:
    """Composite labels (group, surface) available to expansion, with classes.

    Regions may only take labels whose group is the singleton token.
    """

    labels: List[Tuple[int, int]]
    support: Optional[Dict[int, float]] = None

    def __post_init__(self):
        self.labels = [(int(g), int(v)) for g, v in self.labels]
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("duplicate labels in universe")
        for g, v in self.labels:
            KeypointLabel(g, v)
        self.index = {lab: i for i, lab in enumerate(self.labels)}
        self.groups = np.array([g for g, _ in self.labels], dtype=np.int64)
        self.surfaces = np.array([v for _, v in self.labels], dtype=np.int64)

    @classmethod
    def from_params(cls, params: SceneParams, support=None):
        labels = []
        for g in sorted(params.patterns):
            for n in sorted(params.patterns[g].mean_log_rect_scale):
                labels.append((g, n))
        labels += [(SINGLETON, n) for n in sorted(params.plane_lines)]
        labels.append((SINGLETON, BACKGROUND))
        return cls(labels, support)

    def __len__(self):
        return len(self.labels)

    def plane_classes(self) -> Dict[int, np.ndarray]:
        return {int(n): np.flatnonzero(self.surfaces == n) for n in np.unique(self.surfaces) if n != BACKGROUND}

    def pattern_classes(self) -> Dict[int, np.ndarray]:
        return {int(g): np.flatnonzero(self.groups == g) for g in np.unique(self.groups) if g != SINGLETON}

    def region_allowed(self) -> np.ndarray:
        return self.groups == SINGLETON

    def visit_order(self) -> List[int]:
        """Labels by descending support of their plane; background last."""
        support = self.support or {}

        def key(i):
            v = self.surfaces[i]
            s = support.get(int(v), 0.0) if v != BACKGROUND else -np.inf
            return (-s, i)

        return sorted(range(len(self.labels)), key=key)


@dataclass
class Region:
    pixel_samples: np.ndarray
    pixel_count: int
    centroid: np.ndarray
    boundary: Dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        self.pixel_samples = np.asarray(self.pixel_samples, dtype=float).reshape(-1, 3)
        self.centroid = np.asarray(self.centroid, dtype=float).reshape(2)
        if self.pixel_count < 1 or len(self.pixel_samples) == 0:
            raise ValueError("region needs at least one pixel sample")
        if any(p < 0 for p in self.boundary.values()):
            raise ValueError("boundary contrast must be nonnegative")


class SceneData:
    """Stacked keypoint and region measurements plus precomputed pair lists."""

    def __init__(
        self,
        frames,
        descriptors,
        colors=None,
        region_samples=None,
        region_offsets=None,
        region_pixel_counts=None,
        region_centroids=None,
        region_pairs=None,
        region_phi=None,
        overlap_pairs=None,
        kp_pairs=None,
        image_size=(640, 480),
    ):
        self.frames = np.asarray(frames, dtype=float).reshape(-1, 3, 3)
        n = len(self.frames)
        self.descriptors = np.asarray(descriptors, dtype=float).reshape(n, -1) if n else np.zeros((0, 128))
        self.colors = np.full((n, 3), np.nan) if colors is None else np.asarray(colors, dtype=float).reshape(n, 3)
        self.region_samples = np.zeros((0, 3)) if region_samples is None else np.asarray(region_samples, dtype=float).reshape(-1, 3)
        self.region_offsets = np.zeros(1, dtype=np.int64) if region_offsets is None else np.asarray(region_offsets, dtype=np.int64)
        r = len(self.region_offsets) - 1
        self.region_pixel_counts = np.ones(r, dtype=np.int64) if region_pixel_counts is None else np.asarray(region_pixel_counts, dtype=np.int64)
        self.region_centroids = np.zeros((r, 2)) if region_centroids is None else np.asarray(region_centroids, dtype=float).reshape(r, 2)
        self.region_pairs = _pairs(region_pairs)
        self.region_phi = np.zeros(len(self.region_pairs)) if region_phi is None else np.asarray(region_phi, dtype=float).ravel()
        self.overlap_pairs = _pairs(overlap_pairs)
        self.kp_pairs = _pairs(kp_pairs)
        self.image_size = (float(image_size[0]), float(image_size[1]))
        self._validate()
        self.log_scales = np.log(np.abs(signed_area(self.frames))) if n else np.zeros(0)
        self.sample_region = np.repeat(np.arange(r), np.diff(self.region_offsets))

    def _validate(self):
        n, r = self.n_keypoints, self.n_regions
        if n and np.any(np.abs(self.frames[:, :, 2] - 1.0) > 1e-9):
            self.frames = dehomogenize(self.frames)
        if n and np.any(np.abs(signed_area(self.frames)) <= EPS_AREA):
            raise GeometryError("a keypoint frame is collinear")
        if np.any(np.diff(self.region_offsets) < 1) or (r and self.region_offsets[-1] != len(self.region_samples)):
            raise CoplanarError("every region needs at least one pixel sample")
        if np.any(self.region_pixel_counts < 1):
            raise CoplanarError("region pixel counts must be positive")
        if len(self.region_phi) != len(self.region_pairs) or np.any(self.region_phi < 0):
            raise CoplanarError("region contrast must be one nonnegative value per adjacent pair")
        for name, pairs, hi in (
            ("region_pairs", self.region_pairs, (r, r)),
            ("kp_pairs", self.kp_pairs, (n, n)),
            ("overlap_pairs", self.overlap_pairs, (n, r)),
        ):
            if len(pairs) and (pairs.min() < 0 or pairs[:, 0].max() >= hi[0] or pairs[:, 1].max() >= hi[1]):
                raise CoplanarError(f"{name} index out of range")

    @classmethod
    def from_parts(cls, keypoints: Sequence[Keypoint], regions: Sequence[Region] = (), overlap_pairs=None, kp_pairs=None, image_size=(640, 480)):
        frames = np.array([k.frame for k in keypoints]).reshape(-1, 3, 3)
        dim = len(keypoints[0].descriptor) if keypoints else 128
        desc = np.array([k.descriptor for k in keypoints]).reshape(-1, dim)
        colors = np.array([k.color if k.color is not None else [np.nan] * 3 for k in keypoints]).reshape(-1, 3)
        samples = [r.pixel_samples for r in regions]
        offsets = np.concatenate([[0], np.cumsum([len(s) for s in samples])]).astype(np.int64)
        pairs, phi = [], []
        for j, reg in enumerate(regions):
            for j2, p in sorted(reg.boundary.items()):
                if j < j2:
                    pairs.append((j, j2))
                    phi.append(p)
        return cls(
            frames,
            desc,
            colors,
            np.vstack(samples) if samples else None,
            offsets,
            [r.pixel_count for r in regions],
            np.array([r.centroid for r in regions]).reshape(-1, 2),
            pairs,
            phi,
            overlap_pairs,
            kp_pairs,
            image_size,
        )

    @property
    def n_keypoints(self):
        return len(self.frames)

    @property
    def n_regions(self):
        return len(self.region_offsets) - 1

    @property
    def descriptor_dim(self):
        return self.descriptors.shape[1]

    def keypoint(self, i) -> Keypoint:
        c = self.colors[i]
        return Keypoint(self.frames[i], self.descriptors[i], None if np.any(np.isnan(c)) else c)

    def region_pixels(self, j) -> np.ndarray:
        return self.region_samples[self.region_offsets[j] : self.region_offsets[j + 1]]

    def region(self, j) -> Region:
        boundary = {}
        for (a, b), p in zip(self.region_pairs, self.region_phi):
            if a == j:
                boundary[int(b)] = float(p)
            elif b == j:
                boundary[int(a)] = float(p)
        return Region(self.region_pixels(j), int(self.region_pixel_counts[j]), self.region_centroids[j], boundary)

    def transformed(self, T):
        """Copy with every point mapped by the similarity T (pair lists kept)."""
        T = np.asarray(T, dtype=float)
        frames = dehomogenize(self.frames @ T.T) if self.n_keypoints else self.frames
        cent = np.hstack([self.region_centroids, np.ones((self.n_regions, 1))]) @ T.T
        out = SceneData.__new__(SceneData)
        out.__dict__.update(self.__dict__)
        out.frames = frames
        out.region_centroids = cent[:, :2] / cent[:, 2:3] if self.n_regions else self.region_centroids
        out.log_scales = np.log(np.abs(signed_area(frames))) if self.n_keypoints else self.log_scales
        return out


def _pairs(p):
    if p is None:
        return np.zeros((0, 2), dtype=np.int64)
    return np.asarray(p, dtype=np.int64).reshape(-1, 2)


def coplanar_repeat_groups(y: JointLabeling) -> List[Tuple[int, int, frozenset]]:
    """Keypoint sets sharing (group, surface), singletons and background excluded."""
    mask = (y.kp_group != SINGLETON) & (y.kp_surface != BACKGROUND)
    idx = np.flatnonzero(mask)
    if not len(idx):
        return []
    keys = np.stack([y.kp_group[idx], y.kp_surface[idx]], axis=1)
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.ravel()
    return [(int(g), int(v), frozenset(idx[inv == c].tolist())) for c, (g, v) in enumerate(uniq)]


def connected_surface_components(y: JointLabeling, adjacency) -> List[frozenset]:
    """Maximal connected region sets with equal surface label."""
    r = y.n_regions
    pairs = _pairs(adjacency)
    if r == 0:
        return []
    same = y.region_surface[pairs[:, 0]] == y.region_surface[pairs[:, 1]] if len(pairs) else np.zeros(0, bool)
    p = pairs[same]
    graph = coo_matrix((np.ones(len(p)), (p[:, 0], p[:, 1])), shape=(r, r))
    n, comp = connected_components(graph, directed=False)
    return [frozenset(np.flatnonzero(comp == c).tolist()) for c in range(n)]
