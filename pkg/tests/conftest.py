import numpy as np
import pytest

from coplanar.config import EnergyWeights
from coplanar.geometry import normalizing_transform, transform_line
from coplanar.model import LabelUniverse, SceneParams
from coplanar.regression import fit_surface_gmm, region_sample_weights, update_pattern_params
from coplanar.synth import PatternSpec, PlaneSpec, SynthSpec, generate, random_spec


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def truth_params(data, truth, frame=None):
    """Parameters fitted to the ground-truth labeling (lines are the true ones)."""
    y = truth.labeling
    if frame is None:
        lines = dict(truth.lines)
    else:
        lines = {n: transform_line(frame, l) for n, l in truth.lines.items()}
    patterns = update_pattern_params(data, y, lines)
    gmms = {}
    if data.n_regions:
        sw = region_sample_weights(data)
        for n in np.unique(y.region_surface):
            m = y.region_surface[data.sample_region] == n
            gmms[int(n)] = fit_surface_gmm(data.region_samples[m], 3, 10, sw[m])
        gmms.setdefault(0, fit_surface_gmm(data.region_samples, 3, 10, sw))
    params = SceneParams(patterns, lines, gmms)
    return params, LabelUniverse.from_params(params)


@pytest.fixture(scope="session")
def two_plane_scene():
    spec = random_spec(2, 120, seed=11, region_cell=40)
    return generate(spec)


@pytest.fixture(scope="session")
def exact_plane_scene():
    """Zero-noise single plane with two patterns."""
    spec = SynthSpec(
        planes=[PlaneSpec([PatternSpec(count=12, size=22.0), PatternSpec(count=10, size=15.0, rotate=True)])],
        sigma_pos=0.0,
        sigma_desc=0.0,
        region_cell=80,
        min_line_distance=1.5,
        max_line_distance=2.0,
        seed=4,
    )
    return generate(spec)


@pytest.fixture(scope="session")
def norm640():
    return normalizing_transform(640, 480)


@pytest.fixture
def weights():
    return EnergyWeights()


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_report():
    """Call with (criterion number, passed, detail); lines are printed in the terminal summary."""

    def report(k, ok, detail):
        ACCEPTANCE_LINES.append((k, bool(ok), detail))
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k, ok, detail in sorted(ACCEPTANCE_LINES, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
