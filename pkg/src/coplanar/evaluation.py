"""Rectification accuracy: the rms rewarping distortion between a reference
rectification and a detected one, modulo the affine ambiguity of affine
rectification.
"""
from dataclasses import dataclass
from typing import Dict, Iterable, Sequence

import numpy as np

from .errors import DegenerateCorrespondences, MapsToInfinity
from .geometry import EPS_HOM, rectifier_from_line

DEFAULT_THRESHOLDS = (1.0, 2.0, 5.0, 10.0)


@dataclass
class AnnotatedGroup:
    indices: np.ndarray
    H: np.ndarray

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64).ravel()
        self.H = np.asarray(self.H, dtype=float).reshape(3, 3)
        if len(self.indices) < 2:
            raise ValueError("an annotated group needs at least two keypoints")
        if abs(np.linalg.det(self.H)) < EPS_HOM:
            raise ValueError("reference rectification is singular")

    @classmethod
    def from_line(cls, indices, line):
        return cls(indices, rectifier_from_line(line))


@dataclass
class AffineFit:
    A: np.ndarray  # 2x3
    residual: float

    def apply(self, pts):
        return pts @ self.A[:, :2].T + self.A[:, 2]

    def inverse(self):
        M = np.linalg.inv(self.A[:, :2])
        return AffineFit(np.hstack([M, -(M @ self.A[:, 2])[:, None]]), self.residual)


def fit_affine(src, dst) -> AffineFit:
    """Least-squares 2-D affine taking src points onto dst points."""
    src = np.asarray(src, dtype=float).reshape(-1, 2)
    dst = np.asarray(dst, dtype=float).reshape(-1, 2)
    if len(src) != len(dst):
        raise ValueError("correspondence lists differ in length")
    if len(src) < 3:
        raise DegenerateCorrespondences("an affine needs at least 3 correspondences")
    X = np.hstack([src, np.ones((len(src), 1))])
    # collinear sources leave the affine undetermined
    centred = src - src.mean(axis=0)
    sv = np.linalg.svd(centred, compute_uv=False)
    if sv[1] <= 1e-10 * max(sv[0], 1.0):
        raise DegenerateCorrespondences("source points are collinear")
    sol, *_ = np.linalg.lstsq(X, dst, rcond=None)
    A = sol.T
    r = X @ sol - dst
    return AffineFit(A, float(np.sum(r * r)))


def _warp(H, pts):
    p = np.hstack([pts, np.ones((len(pts), 1))]) @ np.asarray(H, dtype=float).T
    if np.any(np.abs(p[:, 2]) < EPS_HOM):
        raise MapsToInfinity("point mapped to infinity")
    return p[:, :2] / p[:, 2:3]


def _frame_points(group: AnnotatedGroup, keypoints) -> np.ndarray:
    frames = np.asarray(keypoints if not hasattr(keypoints[0], "frame") else [k.frame for k in keypoints], dtype=float)
    f = frames.reshape(-1, 3, 3)[group.indices]
    return f[..., :2] / f[..., 2:3]


def delta_rms(group: AnnotatedGroup, H_hat, keypoints) -> float:
    """sqrt of the mean squared distance between annotated frame points and their rewarp H^-1 A^-1 H_hat."""
    x = _frame_points(group, keypoints).reshape(-1, 2)
    H_hat = np.asarray(H_hat, dtype=float)
    if abs(np.linalg.det(H_hat)) < EPS_HOM:
        raise ValueError("detected rectification is singular")
    ref = _warp(group.H, x)
    det = _warp(H_hat, x)
    A = fit_affine(ref, det)
    back = _warp(np.linalg.inv(group.H), A.inverse().apply(det))
    d = back - x
    return float(np.sqrt(np.mean(np.sum(d * d, axis=1))))


def delta_rms_line(indices, true_line, detected_line, keypoints) -> float:
    return delta_rms(AnnotatedGroup.from_line(indices, true_line), rectifier_from_line(detected_line), keypoints)


def match_detected_to_annotated(detected: Dict[int, Iterable[int]], annotated: Dict[int, Iterable[int]]) -> Dict[int, int]:
    """Each detected group goes to the annotated group holding the largest share of its keypoints.

    Ties go to the larger annotated group, then the lower id. Detected groups
    sharing no keypoint with any annotated group are left out.
    """
    ann = {int(a): set(int(i) for i in m) for a, m in annotated.items()}
    out = {}
    for d, members in detected.items():
        members = set(int(i) for i in members)
        if not members:
            continue
        best = None
        for a in sorted(ann):
            overlap = len(members & ann[a])
            if not overlap:
                continue
            key = (overlap, len(ann[a]), -a)
            if best is None or key > best[0]:
                best = (key, a)
        if best is not None:
            out[int(d)] = best[1]
    return out


def distortion_cdf(deltas: Sequence[float], thresholds=DEFAULT_THRESHOLDS):
    """Fraction of planes with distortion at most each threshold."""
    d = np.asarray(deltas, dtype=float).ravel()
    return [(float(t), float(np.mean(d <= t)) if len(d) else 0.0) for t in thresholds]


def format_cdf(table) -> str:
    lines = ["threshold_px  fraction"]
    lines += [f"{t:12.1f}  {f:.3f}" for t, f in table]
    return "\n".join(lines)


@dataclass
class PlaneScore:
    annotated: int
    detected: int  # 0: no detected plane matched
    delta: float


def detected_planes(labeling) -> Dict[int, np.ndarray]:
    """Keypoints of each detected plane that belong to a coplanar repeat."""
    g, v = np.asarray(labeling.kp_group), np.asarray(labeling.kp_surface)
    return {int(n): np.flatnonzero((v == n) & (g != 0)) for n in np.unique(v) if n != 0}


def score_planes(labeling, lines, truth_planes: Dict[int, np.ndarray], truth_lines, keypoints):
    """Distortion of every annotated plane under its best-matched detected plane.

    Detected planes are matched to annotated planes by majority overlap; when
    several land on one annotated plane the one covering most of it is scored.
    Annotated planes with no match score infinity.
    """
    det = {n: m for n, m in detected_planes(labeling).items() if len(m)}
    match = match_detected_to_annotated(det, truth_planes)
    out = []
    for a in sorted(truth_planes):
        cands = [d for d, aa in match.items() if aa == a]
        if not cands:
            out.append(PlaneScore(a, 0, float("inf")))
            continue
        ann = set(np.asarray(truth_planes[a]).tolist())
        d = max(cands, key=lambda d: (len(ann & set(det[d].tolist())), -d))
        delta = delta_rms_line(truth_planes[a], truth_lines[a], lines[d], keypoints)
        out.append(PlaneScore(a, d, delta))
    return out
