"""Continuous parameter updates at a fixed labeling.

Vanishing lines are refined by damped Gauss-Newton on the unit sphere, pattern
statistics are closed-form means, and surface colour models are fitted by
hard-EM on the min-component approximation of the GMM likelihood.
"""
import logging
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from .config import EnergyWeights, SolverConfig
from .errors import CoplanarError
from .geometry import hom_line
from .model import (
    BACKGROUND,
    SINGLETON,
    JointLabeling,
    PatternParams,
    SceneData,
    SceneParams,
    SurfaceGmm,
    regularize_covariance,
)

log = logging.getLogger(__name__)


@dataclass
class VlineProblem:
    """Keypoints on one plane. ``patterns[i] == 0`` marks keypoints that only constrain the side."""

    frames: np.ndarray
    log_scales: np.ndarray
    patterns: np.ndarray
    l0: np.ndarray

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=float).reshape(-1, 3, 3)
        self.log_scales = np.asarray(self.log_scales, dtype=float).ravel()
        self.patterns = np.asarray(self.patterns, dtype=np.int64).ravel()
        self.l0 = hom_line(self.l0)
        if len(self.frames) == 0:
            raise ValueError("line refinement needs at least one keypoint")
        # group index per member (-1: excluded), used for the mean subtraction
        sel = self.patterns != SINGLETON
        self._sel = np.flatnonzero(sel)
        _, self._grp = np.unique(self.patterns[sel], return_inverse=True)
        self._grp = self._grp.ravel()
        self._counts = np.bincount(self._grp) if len(self._grp) else np.zeros(0)

    def feasible(self, l) -> bool:
        return bool(np.all(self.frames @ l > 0))

    def _centered(self, v):
        """Subtract per-pattern means from rows of v (restricted to grouped members)."""
        if not len(self._grp):
            return v[:0]
        sums = np.zeros((len(self._counts),) + v.shape[1:])
        np.add.at(sums, self._grp, v[self._sel])
        mean = sums / self._counts.reshape((-1,) + (1,) * (v.ndim - 1))
        return v[self._sel] - mean[self._grp]

    def residuals(self, l):
        t = self.frames @ l
        z = self.log_scales - np.log(t).sum(axis=1)
        return self._centered(z)

    def objective(self, l) -> float:
        l = np.asarray(l, dtype=float)
        if not self.feasible(l):
            return np.inf
        r = self.residuals(l)
        return float(r @ r)

    def jacobian(self, l):
        """d residuals / d l, shape (n_grouped, 3)."""
        t = self.frames @ l
        dz = -(self.frames / t[..., None]).sum(axis=1)
        return self._centered(dz)

    def gradient(self, l) -> np.ndarray:
        l = np.asarray(l, dtype=float)
        return 2.0 * self.jacobian(l).T @ self.residuals(l)


def _tangent_basis(l):
    _, _, vt = np.linalg.svd(l.reshape(1, 3))
    return vt[1:].T


def refine_vanishing_line(p: VlineProblem, max_iter=100, tol=1e-14) -> np.ndarray:
    """Minimize the rectified-scale spread of the plane's patterns over unit lines.

    Steps are taken in a 2-parameter tangent chart and rejected if they leave
    the feasible side or fail to decrease the objective, so the result is never
    worse than ``l0``. Returns ``l0`` when no pattern has two members.
    """
    l = p.l0.copy()
    if not p.feasible(l):
        raise CoplanarError("initial vanishing line violates the same-side constraint")
    if not len(p._counts) or p._counts.max() < 2:
        return l
    f = p.objective(l)
    damping = 1e-3
    for _ in range(max_iter):
        if f <= 0.0:
            break
        U = _tangent_basis(l)
        r = p.residuals(l)
        J = p.jacobian(l) @ U
        g = J.T @ r
        JtJ = J.T @ J
        improved = False
        for _ in range(30):
            step = np.linalg.solve(JtJ + damping * (np.diag(np.diag(JtJ)) + 1e-12 * np.eye(2)), -g)
            cand = l + U @ step
            cand /= np.linalg.norm(cand)
            fc = p.objective(cand)
            if fc < f:
                improved = True
                damping = max(damping / 3.0, 1e-12)
                break
            damping *= 4.0
        if not improved:
            break
        gain = f - fc
        l, f = cand, fc
        if gain <= tol * max(f, 1e-300) or np.linalg.norm(step) < 1e-15:
            break
    return l


def plane_problem(data: SceneData, y: JointLabeling, n, l0) -> Optional[VlineProblem]:
    idx = np.flatnonzero(y.kp_surface == n)
    if not len(idx):
        return None
    return VlineProblem(data.frames[idx], data.log_scales[idx], y.kp_group[idx], l0)


def update_pattern_params(data: SceneData, y: JointLabeling, plane_lines: Dict[int, np.ndarray]) -> Dict[int, PatternParams]:
    """Closed-form means: descriptor mean per group, log-scale mean per (group, plane)."""
    out = {}
    for g in np.unique(y.kp_group):
        if g == SINGLETON:
            continue
        members = y.kp_group == g
        stats = {}
        for n in np.unique(y.kp_surface[members]):
            if n == BACKGROUND:
                continue
            idx = np.flatnonzero(members & (y.kp_surface == n))
            l = np.asarray(plane_lines[int(n)], dtype=float)
            l = l / np.linalg.norm(l)
            t = data.frames[idx] @ l
            z = data.log_scales[idx] - np.log(t).sum(axis=1)
            stats[int(n)] = float(z.mean())
        out[int(g)] = PatternParams(data.descriptors[members].mean(axis=0), stats)
    return out


def _hard_em_objective(costs, w):
    return -float(w @ costs.min(axis=1))


def _m_step(x, w, assign, k_max):
    means, covs, pis = [], [], []
    wt = w.sum()
    for k in range(k_max):
        m = assign == k
        wk = w[m].sum()
        if wk <= 0:
            continue
        mu = (w[m] @ x[m]) / wk
        d = x[m] - mu
        cov = (d * w[m][:, None]).T @ d / wk
        means.append(mu)
        covs.append(regularize_covariance(cov))
        pis.append(wk / wt)
    pis = np.array(pis)
    return SurfaceGmm(np.array(means), np.array(covs), pis / pis.sum())


def _kmeanspp(x, k, rng):
    centers = [x[rng.integers(len(x))]]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        tot = d2.sum()
        if tot <= 0:
            break
        c = x[rng.choice(len(x), p=d2 / tot)]
        centers.append(c)
        d2 = np.minimum(d2, np.sum((x - c) ** 2, axis=1))
    centers = np.array(centers)
    return np.argmin(((x[:, None, :] - centers[None]) ** 2).sum(axis=2), axis=1)


def fit_surface_gmm(pixels, K=5, iters=10, sample_weights=None, init: Optional[SurfaceGmm] = None,
                    seed=0, return_trace=False):
    """Hard-EM fit of a K-component RGB mixture.

    With ``init`` the first assignment uses that model, so the returned model
    scores the samples at least as well as ``init``. The trace holds the
    weighted log-objective after every parameter update and never decreases.
    """
    x = np.asarray(pixels, dtype=float).reshape(-1, 3)
    if not len(x):
        raise ValueError("no samples to fit")
    w = np.ones(len(x)) if sample_weights is None else np.asarray(sample_weights, dtype=float)
    if np.all(np.ptp(x, axis=0) == 0):
        log.debug("degenerate colour samples; fitting a single component")
        gmm = _m_step(x, w, np.zeros(len(x), dtype=np.int64), 1)
        trace = [_hard_em_objective(gmm.component_costs(x), w)]
        return (gmm, trace) if return_trace else gmm
    trace = []
    if init is not None:
        costs = init.component_costs(x)
        trace.append(_hard_em_objective(costs, w))
        assign = costs.argmin(axis=1)
        k_max = init.n_components
        best = init
    else:
        k_max = max(1, min(K, len(x)))
        assign = _kmeanspp(x, k_max, np.random.default_rng(seed))
        best = None
    for _ in range(iters):
        gmm = _m_step(x, w, assign, k_max)
        costs = gmm.component_costs(x)
        obj = _hard_em_objective(costs, w)
        trace.append(obj)
        if len(trace) > 1 and obj < trace[-2]:
            # ascent is exact up to rounding; keep the previous model
            break
        best = gmm
        new_assign = costs.argmin(axis=1)
        k_max = gmm.n_components
        if np.array_equal(new_assign, assign) and len(trace) > 1:
            break
        assign = new_assign
    return (best, trace) if return_trace else best


def region_sample_weights(data: SceneData) -> np.ndarray:
    """Each region's samples share unit weight, matching the per-region colour normalization."""
    counts = np.diff(data.region_offsets)
    return 1.0 / counts[data.sample_region]


def regress_all(data: SceneData, y: JointLabeling, params_in: SceneParams, weights: EnergyWeights,
                config: Optional[SolverConfig] = None) -> SceneParams:
    config = config or SolverConfig()
    out = params_in.copy()
    for n in sorted(out.plane_lines):
        prob = plane_problem(data, y, n, out.plane_lines[n])
        if prob is None:
            continue
        try:
            out.plane_lines[n] = refine_vanishing_line(prob)
        except CoplanarError as exc:
            log.warning("keeping vanishing line of surface %d: %s", n, exc)
    out.patterns = update_pattern_params(data, y, out.plane_lines)
    if data.n_regions:
        sw = region_sample_weights(data)
        region_of_sample = y.region_surface[data.sample_region]
        for n in np.unique(y.region_surface):
            m = region_of_sample == n
            try:
                out.surface_gmms[int(n)] = fit_surface_gmm(
                    data.region_samples[m], config.gmm_components, config.gmm_iters, sw[m],
                    init=params_in.surface_gmms.get(int(n)), seed=config.seed,
                )
            except (CoplanarError, np.linalg.LinAlgError) as exc:
                log.warning("keeping colour model of surface %d: %s", n, exc)
    return out
