"""Block-coordinate descent: alternate labeling and parameter regression."""
import logging
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .config import EnergyWeights, SolverConfig
from .energy import descriptor_knn_pairs, total_energy
from .errors import CoplanarError
from .geometry import hom_line, normalizing_transform
from .inference import MoveStats, solve_labeling
from .model import BACKGROUND, SINGLETON, JointLabeling, LabelUniverse, SceneData, SceneParams
from .proposals import propose
from .regression import regress_all, update_pattern_params

log = logging.getLogger(__name__)

DESCENT_SLACK = 1e-6


@dataclass
class IterationRecord:
    energy_labeling: float
    energy_regression: float
    moves: int
    accepted: int
    n_labels: int
    seconds: float


@dataclass
class SolveReport:
    labeling: JointLabeling
    params: SceneParams
    energy: float
    initial_energy: float
    iterations: List[IterationRecord] = field(default_factory=list)
    termination: str = ""
    n_proposed_lines: int = 0
    descent_violations: int = 0
    move_increases: int = 0
    seconds: float = 0.0

    @property
    def trace(self) -> List[float]:
        """Energy after the proposal and after every half-step."""
        out = [self.initial_energy]
        for r in self.iterations:
            out += [r.energy_labeling, r.energy_regression]
        return out


def _gc(y: JointLabeling, params: SceneParams, support) -> (SceneParams, LabelUniverse):
    """Drop patterns, (group, plane) statistics, planes and colour models no site uses."""
    used_kp = set(zip(y.kp_group.tolist(), y.kp_surface.tolist()))
    surfaces = set(y.kp_surface.tolist()) | set(y.region_surface.tolist())
    out = params.copy()
    for g in list(out.patterns):
        stats = out.patterns[g].mean_log_rect_scale
        for n in list(stats):
            if (g, n) not in used_kp:
                del stats[n]
        if not any(gg == g for gg, _ in used_kp):
            del out.patterns[g]
    for n in list(out.plane_lines):
        if n not in surfaces:
            del out.plane_lines[n]
    for n in list(out.surface_gmms):
        if n != BACKGROUND and n not in surfaces:
            del out.surface_gmms[n]
    support = {n: s for n, s in support.items() if n in out.plane_lines}
    return out, LabelUniverse.from_params(out, support)


def _relabel(y: JointLabeling, universe: LabelUniverse) -> JointLabeling:
    """Grouped keypoints whose (group, plane) vanished keep their plane as singletons."""
    y = y.copy()
    for i, (g, n) in enumerate(zip(y.kp_group, y.kp_surface)):
        if (int(g), int(n)) not in universe.index:
            y.kp_group[i] = SINGLETON
    return y


def to_pixel_frame(data: SceneData, y: JointLabeling, params: SceneParams, T) -> SceneParams:
    """Map lines fitted in the normalized frame back to pixels; scale statistics are recomputed."""
    out = params.copy()
    out.plane_lines = {n: hom_line(np.asarray(T).T @ l) for n, l in params.plane_lines.items()}
    for g, p in update_pattern_params(data, y, out.plane_lines).items():
        if g in out.patterns:
            out.patterns[g] = p
    return out


def solve(data: SceneData, weights: Optional[EnergyWeights] = None, config: Optional[SolverConfig] = None) -> SolveReport:
    """Propose an initial model, then descend until the relative gain of an iteration drops below tolerance.

    All work happens in the normalized image frame; the returned lines are in pixels.
    """
    weights = weights or EnergyWeights()
    config = config or SolverConfig()
    t_start = time.perf_counter()
    if data.n_keypoints > 1 and not len(data.kp_pairs):
        data = _with_kp_pairs(data, config.knn)
    T = normalizing_transform(*data.image_size)
    nd = data.transformed(T)

    props = propose(nd, config.proposal)
    support = {n: float(h.support) for n, h in enumerate(props.lines, start=1)}
    params, y, universe = props.params, props.labeling, props.universe
    energy = total_energy(nd, y, params, weights, universe)
    report = SolveReport(y, params, energy, energy, n_proposed_lines=len(props.lines))

    def check(before, after, what):
        if after > before + DESCENT_SLACK * max(1.0, abs(before)):
            report.descent_violations += 1
            log.warning("%s raised the energy from %.9g to %.9g", what, before, after)

    for it in range(config.max_iters):
        t0 = time.perf_counter()
        stats = MoveStats()
        try:
            y_new, _ = solve_labeling(nd, params, universe, weights, y, config.sweeps_max, config.debug, stats)
            e_lab = total_energy(nd, y_new, params, weights, universe)
            check(energy, e_lab, "labeling")
            params_gc, universe_gc = _gc(y_new, params, support)
            params_new = regress_all(nd, y_new, params_gc, weights, config)
            universe_new = LabelUniverse.from_params(params_new, universe_gc.support)
            y_new = _relabel(y_new, universe_new)
            e_reg = total_energy(nd, y_new, params_new, weights, universe_new)
            check(e_lab, e_reg, "regression")
        except CoplanarError as exc:
            report.termination = f"sub-step failure: {exc}"
            log.warning("stopping at iteration %d: %s", it + 1, exc)
            break
        report.move_increases += stats.increases
        report.iterations.append(IterationRecord(e_lab, e_reg, stats.moves, stats.accepted, len(universe),
                                                 time.perf_counter() - t0))
        gain = energy - e_reg
        y, params, universe, energy = y_new, params_new, universe_new, e_reg
        if gain <= config.rel_tol * max(abs(energy), 1e-12):
            report.termination = "converged"
            break
    else:
        report.termination = "max_iters"

    report.labeling = y
    report.energy = energy
    report.params = to_pixel_frame(data, y, params, T)
    report.seconds = time.perf_counter() - t_start
    return report


def _with_kp_pairs(data: SceneData, knn) -> SceneData:
    out = SceneData.__new__(SceneData)
    out.__dict__.update(data.__dict__)
    out.kp_pairs = descriptor_knn_pairs(data.descriptors, knn)
    return out
