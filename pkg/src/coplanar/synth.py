"""Synthetic scenes with known planes, repeats and colours, plus brute-force oracles."""
import itertools
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .config import EnergyWeights
from .energy import descriptor_knn_pairs
from .errors import DegenerateInput, SpecInfeasible, TooLarge
from .geometry import (
    frame_scales,
    hom_line,
    normalizing_transform,
    rectifier_from_line,
)
from .inference import LabelingProblem, build_problem, indices_to_labeling
from .model import BACKGROUND, SINGLETON, JointLabeling, LabelUniverse, SceneData, SceneParams
from .regression import VlineProblem

TEMPLATE = np.array([[0.0, 0.0], [1.0, 0.0], [0.3, 0.8]])


@dataclass
class PatternSpec:
    count: int = 40
    size: float = 24.0
    placement: str = "arbitrary"
    rotate: bool = False
    reflect_fraction: float = 0.0
    spacing: float = 1.8


@dataclass
class PlaneSpec:
    patterns: List[PatternSpec] = field(default_factory=lambda: [PatternSpec(), PatternSpec(size=16.0)])
    vanishing_line: Optional[List[float]] = None
    homography: Optional[List[List[float]]] = None
    palette: Optional[List[float]] = None


@dataclass
class SynthSpec:
    width: int = 640
    height: int = 480
    planes: List[PlaneSpec] = field(default_factory=lambda: [PlaneSpec()])
    n_background_keypoints: int = 0
    background_fraction: float = 0.0
    background_palette: Optional[List[float]] = None
    sigma_desc: float = 0.05
    sigma_pos: float = 0.5
    color_noise: float = 0.03
    region_cell: int = 20
    samples_per_region: int = 16
    descriptor_dim: int = 128
    knn: int = 10
    min_line_distance: float = 2.0
    max_line_distance: float = 5.0
    seed: int = 0


@dataclass
class GroundTruth:
    labeling: JointLabeling
    lines: dict
    clusters: np.ndarray
    plane_keypoints: dict


def random_spec(n_planes=3, n_keypoints=300, seed=0, sigma_pos=0.5, sigma_desc=0.05, patterns_per_plane=2,
                n_background_keypoints=0, width=640, height=480, region_cell=20, **kw) -> SynthSpec:
    """Planes split the keypoints evenly; each plane gets ``patterns_per_plane`` repeat patterns."""
    rng = np.random.default_rng(seed)
    per_plane = n_keypoints // n_planes
    planes = []
    for _ in range(n_planes):
        counts = np.full(patterns_per_plane, per_plane // patterns_per_plane)
        counts[: per_plane % patterns_per_plane] += 1
        sizes = rng.uniform(14.0, 30.0, patterns_per_plane)
        planes.append(PlaneSpec([PatternSpec(int(c), float(s), rotate=bool(rng.random() < 0.5)) for c, s in zip(counts, sizes)]))
    bg = 0.15 if n_background_keypoints else kw.pop("background_fraction", 0.0)
    return SynthSpec(width, height, planes, n_background_keypoints, bg, sigma_desc=sigma_desc,
                     sigma_pos=sigma_pos, region_cell=region_cell, seed=seed, **kw)


def _strips(spec: SynthSpec):
    n = len(spec.planes)
    bg_w = spec.width * spec.background_fraction
    w = (spec.width - bg_w) / n
    return [(i * w, (i + 1) * w) for i in range(n)], (spec.width - bg_w, spec.width)


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _plane_line(spec: SynthSpec, plane: PlaneSpec, rng) -> np.ndarray:
    if plane.homography is not None:
        return hom_line(np.linalg.inv(np.asarray(plane.homography, dtype=float)).T @ np.array([0.0, 0.0, 1.0]))
    if plane.vanishing_line is not None:
        return hom_line(plane.vanishing_line)
    T = normalizing_transform(spec.width, spec.height)
    theta = rng.uniform(0, 2 * np.pi)
    d = rng.uniform(spec.min_line_distance, spec.max_line_distance)
    return hom_line(T.T @ np.array([np.cos(theta), np.sin(theta), d]))


def _map(H, pts):
    p = np.hstack([pts, np.ones((len(pts), 1))]) @ H.T
    return p[:, :2] / p[:, 2:3]


def generate(spec: SynthSpec) -> Tuple[SceneData, GroundTruth]:
    """Plant equal-preimage-area repeats on each plane's image strip."""
    rng = np.random.default_rng(spec.seed)
    D = spec.descriptor_dim
    strips, bg_strip = _strips(spec)
    margin = 2.0
    frames, descs, colors, groups, surfaces = [], [], [], [], []
    lines, plane_kps = {}, {}
    palettes = {}
    next_group = 1
    for n, (plane, (x0, x1)) in enumerate(zip(spec.planes, strips), start=1):
        l = _plane_line(spec, plane, rng)
        box = np.array([[x0, 0.0], [x1, 0.0], [x1, spec.height], [x0, spec.height]])
        if np.dot(np.hstack([box, np.ones((4, 1))]).mean(axis=0), l) < 0:
            l = -l
        if np.any(np.hstack([box, np.ones((4, 1))]) @ l <= 0):
            raise SpecInfeasible(f"vanishing line of plane {n} crosses its image strip")
        lines[n] = l
        H = rectifier_from_line(l)
        Hinv = np.linalg.inv(H)
        palettes[n] = np.asarray(plane.palette, dtype=float) if plane.palette is not None else rng.uniform(0.1, 0.9, 3)
        centre = np.array([(x0 + x1) / 2.0, spec.height / 2.0, 1.0])
        # area scale image -> rectified at the strip centre
        area_gain = 1.0 / (centre @ l) ** 3
        start = len(frames)
        for pat in plane.patterns:
            side = pat.size * np.sqrt(area_gain)
            center_desc = _unit(rng.normal(size=D))
            refl_desc = _unit(rng.normal(size=D))
            g_main, g_refl = next_group, next_group + 1
            next_group += 2 if pat.reflect_fraction > 0 else 1
            placed = 0
            lattice = None
            if pat.placement == "periodic":
                q0 = _map(H, centre[None, :2])[0]
                k = int(np.ceil(np.sqrt(pat.count))) + 6
                ii, jj = np.meshgrid(np.arange(-k, k + 1), np.arange(-k, k + 1))
                lattice = q0 + pat.spacing * side * np.stack([ii.ravel(), jj.ravel()], axis=1)
                lattice = lattice[rng.permutation(len(lattice))]
            tries = 0
            while placed < pat.count:
                tries += 1
                if tries > 200 * pat.count + 1000:
                    raise SpecInfeasible("repeats do not fit inside the plane's image strip")
                if lattice is not None:
                    if tries > len(lattice):
                        raise SpecInfeasible("lattice does not fit inside the plane's image strip")
                    q = lattice[tries - 1]
                else:
                    c_img = np.array([rng.uniform(x0, x1), rng.uniform(0, spec.height)])
                    q = _map(H, c_img[None])[0]
                tpl = TEMPLATE.copy()
                reflected = rng.random() < pat.reflect_fraction
                if reflected:
                    tpl[:, 0] *= -1
                if pat.rotate:
                    a = rng.uniform(0, 2 * np.pi)
                    tpl = tpl @ np.array([[np.cos(a), np.sin(a)], [-np.sin(a), np.cos(a)]])
                img = _map(Hinv, q + side * (tpl - tpl.mean(axis=0)))
                img = img + rng.normal(scale=spec.sigma_pos, size=img.shape) if spec.sigma_pos else img
                if img[:, 0].min() < x0 + margin or img[:, 0].max() > x1 - margin:
                    continue
                if img[:, 1].min() < margin or img[:, 1].max() > spec.height - margin:
                    continue
                f = np.hstack([img, np.ones((3, 1))])
                if np.any(f @ l <= 0) or abs(np.linalg.det(f)) < 1e-6:
                    continue
                c = refl_desc if reflected else center_desc
                descs.append(_unit(c + rng.normal(scale=spec.sigma_desc / np.sqrt(D), size=D)))
                frames.append(f)
                colors.append(np.clip(palettes[n] + rng.normal(scale=spec.color_noise, size=3), 0, 1))
                groups.append(g_refl if reflected else g_main)
                surfaces.append(n)
                placed += 1
        plane_kps[n] = np.arange(start, len(frames))
    palettes[BACKGROUND] = (np.asarray(spec.background_palette, dtype=float)
                            if spec.background_palette is not None else rng.uniform(0.1, 0.9, 3))
    if spec.n_background_keypoints:
        bx0, bx1 = bg_strip
        if bx1 - bx0 < 10:
            raise SpecInfeasible("background keypoints need a background strip")
        for _ in range(spec.n_background_keypoints):
            while True:
                c = np.array([rng.uniform(bx0 + 10, bx1 - 10), rng.uniform(10, spec.height - 10)])
                tpl = rng.uniform(-8, 8, (3, 2)) + c
                f = np.hstack([tpl, np.ones((3, 1))])
                if abs(np.linalg.det(f)) > 10.0:
                    break
            frames.append(f)
            descs.append(_unit(rng.normal(size=D)))
            colors.append(np.clip(palettes[BACKGROUND] + rng.normal(scale=spec.color_noise, size=3), 0, 1))
            groups.append(SINGLETON)
            surfaces.append(BACKGROUND)

    # regions: grid cells owned by the strip containing their centre
    cell = spec.region_cell
    nx, ny = int(np.ceil(spec.width / cell)), int(np.ceil(spec.height / cell))
    cx = (np.arange(nx) + 0.5) * cell
    cy = (np.arange(ny) + 0.5) * cell
    owner_x = np.zeros(nx, dtype=np.int64)
    for n, (x0, x1) in enumerate(strips, start=1):
        owner_x[(cx >= x0) & (cx < x1)] = n
    samples, counts, cents, owners = [], [], [], []
    for j in range(ny):
        for i in range(nx):
            o = int(owner_x[i])
            px = np.clip(palettes[o] + rng.normal(scale=spec.color_noise, size=(spec.samples_per_region, 3)), 0, 1)
            samples.append(px)
            w = min(cell, spec.width - i * cell)
            h = min(cell, spec.height - j * cell)
            counts.append(int(w * h))
            cents.append([cx[i], cy[j]])
            owners.append(o)
    means = np.array([s.mean(axis=0) for s in samples])
    idx = np.arange(nx * ny).reshape(ny, nx)
    pairs = np.vstack([
        np.stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()], axis=1),
        np.stack([idx[:-1, :].ravel(), idx[1:, :].ravel()], axis=1),
    ])
    phi = 10.0 * np.linalg.norm(means[pairs[:, 0]] - means[pairs[:, 1]], axis=1) / np.sqrt(3.0)
    frames = np.array(frames).reshape(-1, 3, 3)
    descs = np.array(descs).reshape(-1, D)
    overlap = []
    if len(frames):
        cen = frames.mean(axis=1)[:, :2]
        ci = np.clip((cen[:, 0] // cell).astype(int), 0, nx - 1)
        cj = np.clip((cen[:, 1] // cell).astype(int), 0, ny - 1)
        overlap = np.stack([np.arange(len(frames)), idx[cj, ci]], axis=1)
    data = SceneData(
        frames,
        descs,
        np.array(colors).reshape(-1, 3),
        np.vstack(samples),
        np.concatenate([[0], np.cumsum([len(s) for s in samples])]),
        counts,
        cents,
        pairs,
        phi,
        overlap,
        descriptor_knn_pairs(descs, spec.knn),
        (spec.width, spec.height),
    )
    truth = GroundTruth(
        JointLabeling(groups, surfaces, owners),
        lines,
        np.array(groups, dtype=np.int64),
        plane_kps,
    )
    return data, truth


def random_labeling_problem(seed, max_sites=8, max_labels=4, infeasible_rate=0.1) -> LabelingProblem:
    """Tiny random instance: uniform unaries, Potts on a random graph, random subset costs."""
    rng = np.random.default_rng(seed)
    S = int(rng.integers(2, max_sites + 1))
    L = int(rng.integers(2, max_labels + 1))
    unary = rng.uniform(0.0, 10.0, (S, L))
    unary[rng.uniform(size=(S, L)) < infeasible_rate] = np.inf
    unary[np.arange(S), rng.integers(0, L, S)] = rng.uniform(0.0, 10.0, S)  # keep every site feasible
    pairs = [(p, q) for p in range(S) for q in range(p + 1, S) if rng.uniform() < 0.4]
    edges = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    weights = rng.uniform(0.0, 5.0, len(edges))
    keys = rng.integers(0, max(2, L - 1), L)
    classes = []
    for _ in range(int(rng.integers(0, 3))):
        members = np.flatnonzero(rng.uniform(size=L) < 0.5)
        if len(members):
            classes.append((members, float(rng.uniform(0.0, 8.0))))
    return LabelingProblem(unary, edges, weights, keys, classes)


def labeling_benchmark(n_planes=5, per_plane=386, patterns_per_plane=4, region_cell=10, n_labels=50, seed=0):
    """A labeling-step instance built from a synthetic scene at its true parameters.

    Patterns also get scale statistics on other planes, round-robin, until the
    universe holds ``n_labels`` labels (or every pairing is used). Returns the
    scene in the normalized frame, the parameters and the universe.
    """
    from .regression import fit_surface_gmm, region_sample_weights, update_pattern_params
    from .geometry import transform_line

    spec = random_spec(n_planes, n_planes * per_plane, seed=seed, patterns_per_plane=patterns_per_plane,
                       region_cell=region_cell)
    data, truth = generate(spec)
    T = normalizing_transform(spec.width, spec.height)
    nd = data.transformed(T)
    y = truth.labeling
    lines = {n: transform_line(T, l) for n, l in truth.lines.items()}
    patterns = update_pattern_params(nd, y, lines)
    base = n_planes + 1 + sum(len(p.mean_log_rect_scale) for p in patterns.values())
    extra = max(0, n_labels - base)
    for shift in range(1, n_planes):
        for g in sorted(patterns):
            if not extra:
                break
            stats = patterns[g].mean_log_rect_scale
            n = min(stats)
            stats.setdefault((n - 1 + shift) % n_planes + 1, stats[n])
            extra -= 1
    sw = region_sample_weights(nd)
    gmms = {}
    for n in np.unique(y.region_surface):
        m = y.region_surface[nd.sample_region] == n
        gmms[int(n)] = fit_surface_gmm(nd.region_samples[m], 5, 10, sw[m])
    gmms.setdefault(BACKGROUND, fit_surface_gmm(nd.region_samples, 5, 10, sw))
    params = SceneParams(patterns, lines, gmms)
    return nd, params, LabelUniverse.from_params(params)


def brute_force_problem(problem: LabelingProblem, max_labelings=10**7, chunk=1 << 16):
    """Exact minimum by enumeration; returns (labels, energy)."""
    S, L = problem.n_sites, problem.n_labels
    if S == 0:
        return np.zeros(0, dtype=np.int64), problem.energy(np.zeros(0, dtype=np.int64))
    if float(L) ** S > max_labelings:
        raise TooLarge(f"{L}^{S} labelings exceed the enumeration limit")
    best_e, best_f = np.inf, None
    it = itertools.product(range(L), repeat=S)
    while True:
        block = np.array(list(itertools.islice(it, chunk)), dtype=np.int64)
        if not len(block):
            break
        e = problem.energies(block)
        k = int(np.argmin(e))
        if e[k] < best_e:
            best_e, best_f = float(e[k]), block[k]
    if best_f is None:
        raise TooLarge("no feasible labeling")
    return best_f, problem.energy(best_f)


def brute_force_labeling(data: SceneData, params: SceneParams, weights: EnergyWeights, universe: LabelUniverse):
    problem = build_problem(data, params, universe, weights)
    f, e = brute_force_problem(problem)
    if not np.isfinite(e):
        raise DegenerateInput("every labeling is infeasible")
    return indices_to_labeling(f, universe, data.n_keypoints), e


def sphere_grid(resolution) -> np.ndarray:
    """Fibonacci lattice of resolution^2 unit vectors."""
    n = int(resolution) ** 2
    k = np.arange(n) + 0.5
    z = 1.0 - 2.0 * k / n
    r = np.sqrt(1.0 - z * z)
    phi = np.pi * (1.0 + 5**0.5) * k
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def grid_search_line(frames, clusters, resolution=64) -> np.ndarray:
    """Brute-force minimizer of the rectified-scale spread over a sphere grid."""
    if resolution < 64:
        raise ValueError("resolution must be at least 64")
    frames = np.asarray(frames, dtype=float).reshape(-1, 3, 3)
    grid = sphere_grid(resolution)
    prob = VlineProblem(frames, np.log(frame_scales(frames)), clusters, grid[0] if np.all(frames @ grid[0] > 0) else [0, 0, 1])
    best, best_f = None, np.inf
    for l in grid:
        f = prob.objective(l)
        if f < best_f:
            best, best_f = l, f
    if best is None:
        raise ValueError("no feasible line on the grid")
    return hom_line(best)
