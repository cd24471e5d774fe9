"""Homogeneous points and lines, keypoint scale, and affine rectification.

Points are 3-vectors, lines are unit 3-vectors. Keypoint frames are stored as
a (3, 3) array whose rows are the origin and the two basis endpoints, already
dehomogenized (third coordinate 1).
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import GeometryError, MapsToInfinity, SideViolation

EPS_HOM = 1e-12
EPS_AREA = 1e-9


def hom_point(coords) -> np.ndarray:
    p = np.asarray(coords, dtype=float).reshape(3)
    if not np.any(p):
        raise GeometryError("homogeneous point cannot be the zero vector")
    return p


def dehomogenize(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    n = np.linalg.norm(p, axis=-1, keepdims=True)
    q = p / n
    if np.any(np.abs(q[..., 2]) <= EPS_HOM):
        raise MapsToInfinity("point lies on the line at infinity")
    return p / p[..., 2:3]


def hom_line(coords) -> np.ndarray:
    """Validate a line and return its unit-norm representative."""
    l = np.asarray(coords, dtype=float).reshape(3)
    n = np.linalg.norm(l)
    if not n > 0 or not np.isfinite(n):
        raise GeometryError("homogeneous line cannot be the zero vector")
    return l / n


@dataclass(frozen=True, eq=False)
class Keypoint:
    """Affine frame (origin + two basis endpoints), descriptor, optional RGB."""

    frame: np.ndarray
    descriptor: np.ndarray
    color: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        frame = np.asarray(self.frame, dtype=float)
        if frame.shape == (3, 2):
            frame = np.hstack([frame, np.ones((3, 1))])
        if frame.shape != (3, 3):
            raise GeometryError(f"keypoint frame must be 3 points, got shape {frame.shape}")
        frame = dehomogenize(frame)
        if abs(signed_area(frame)) <= EPS_AREA:
            raise GeometryError("keypoint frame points are collinear")
        desc = np.asarray(self.descriptor, dtype=float).ravel()
        if abs(np.linalg.norm(desc) - 1.0) > 1e-6:
            raise GeometryError("keypoint descriptor must have unit norm")
        object.__setattr__(self, "frame", frame)
        object.__setattr__(self, "descriptor", desc)
        if self.color is not None:
            object.__setattr__(self, "color", np.asarray(self.color, dtype=float).reshape(3))

    @property
    def centroid(self) -> np.ndarray:
        return self.frame.mean(axis=0)


def signed_area(frame) -> np.ndarray:
    """Signed triangle area of dehomogenized point triples, shape (..., 3, 3)."""
    f = np.asarray(frame, dtype=float)
    return 0.5 * np.linalg.det(f)


def keypoint_scale(k: Keypoint) -> float:
    # Keypoint frames are dehomogenized at construction; re-check in case of
    # hand-built frames.
    return float(abs(signed_area(dehomogenize(k.frame))))


def frame_scales(frames) -> np.ndarray:
    return np.abs(signed_area(frames))


def _rotation_to_e3(v) -> np.ndarray:
    # Rodrigues rotation taking unit v onto e3; caller guarantees v[2] >= 0.
    c = v[2]
    axis = np.array([v[1], -v[0], 0.0])  # v x e3
    K = np.array([[0.0, -axis[2], axis[1]], [axis[2], 0.0, -axis[0]], [-axis[1], axis[0], 0.0]])
    return np.eye(3) + K + K @ K / (1.0 + c)


def rectifier_from_line(l) -> np.ndarray:
    """Rotation H whose third row is the unit line, so H^-T l = (0, 0, 1).

    Being orthogonal, H is perfectly conditioned; it differs from the textbook
    [e1; e2; l] rectifier by a planar similarity only.
    """
    l = hom_line(l)
    if l[2] >= 0:
        return _rotation_to_e3(l)
    flip = np.diag([1.0, -1.0, -1.0])
    return _rotation_to_e3(flip @ l) @ flip


def apply_homography(H, k: Keypoint) -> Keypoint:
    H = np.asarray(H, dtype=float)
    mapped = k.frame @ H.T
    unit = mapped / np.linalg.norm(mapped, axis=1, keepdims=True)
    if np.any(np.abs(unit[:, 2]) <= EPS_HOM):
        raise MapsToInfinity("homography maps a frame point to infinity")
    return Keypoint(mapped / mapped[:, 2:3], k.descriptor, k.color)


def side_values(l, frames) -> np.ndarray:
    """l^T x for every frame point; shape (..., 3)."""
    return np.asarray(frames, dtype=float) @ np.asarray(l, dtype=float)


def same_side(l, frames) -> np.ndarray:
    """True where all three frame points lie strictly on the positive side of l."""
    return np.all(side_values(l, frames) > 0, axis=-1)


def rectified_log_scale(l, k: Keypoint) -> float:
    l = hom_line(l)
    if np.any(side_values(l, k.frame) <= 0):
        raise SideViolation("keypoint is not on the positive side of the vanishing line")
    return float(np.log(keypoint_scale(apply_homography(rectifier_from_line(l), k))))


def rectified_log_scales(l, frames, log_scales=None) -> np.ndarray:
    """Closed form of ``rectified_log_scale`` for stacked frames.

    With H orthogonal and third row l, the rectified area is
    s(k) / |prod_w l^T x_w|. The unnormalized l gives the same values shifted
    by -3 log|l|. Infeasible keypoints get NaN.
    """
    l = np.asarray(l, dtype=float) / np.linalg.norm(l)
    t = side_values(l, frames)
    if log_scales is None:
        log_scales = np.log(frame_scales(frames))
    with np.errstate(invalid="ignore", divide="ignore"):
        out = log_scales - np.log(t).sum(axis=-1)
    out[~np.all(t > 0, axis=-1)] = np.nan
    return out


def normalizing_transform(width, height) -> np.ndarray:
    """Similarity mapping the image centre to the origin and the longer side to [-1, 1]."""
    s = 2.0 / max(width, height)
    return np.array([[s, 0.0, -s * width / 2.0], [0.0, s, -s * height / 2.0], [0.0, 0.0, 1.0]])


def transform_line(T, l) -> np.ndarray:
    """Line mapped by the point transform T, keeping orientation."""
    return hom_line(np.linalg.solve(np.asarray(T, dtype=float).T, l))


def line_angle(l1, l2) -> float:
    """Angle between two oriented lines on the unit sphere, radians."""
    c = float(np.dot(hom_line(l1), hom_line(l2)))
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def rotate_on_sphere(l, angle, direction=None, rng=None) -> np.ndarray:
    """Rotate unit l by ``angle`` radians along a tangent direction."""
    l = hom_line(l)
    if direction is None:
        rng = np.random.default_rng() if rng is None else rng
        direction = rng.normal(size=3)
    d = np.asarray(direction, dtype=float)
    d = d - np.dot(d, l) * l
    d /= np.linalg.norm(d)
    return np.cos(angle) * l + np.sin(angle) * d
