"""Scene, result, ground-truth and weight files.

Scenes, results and ground truth are versioned JSON documents. Weight files
are flat ``key = value`` text with one EnergyWeights field per line.
"""
import json
import math
from dataclasses import asdict, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .config import AUTO, EnergyWeights
from .errors import FormatError
from .model import JointLabeling, PatternParams, SceneData, SceneParams, SurfaceGmm
from .synth import GroundTruth, PatternSpec, PlaneSpec, SynthSpec

SCENE_VERSION = 1
RESULT_VERSION = 1


# --- low-level helpers -------------------------------------------------------

def _load_json(path, kind):
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{kind} file is not valid JSON: {exc.msg}", f"{path}:{exc.lineno}:{exc.colno}") from None
    if not isinstance(doc, dict):
        raise FormatError(f"{kind} file must hold a JSON object", str(path))
    return doc


def _dump_json(doc, path):
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True, allow_nan=False) + "\n")


def _field(doc, key, where, kind=None):
    if key not in doc:
        raise FormatError(f"missing field '{key}'", where)
    v = doc[key]
    if kind is not None and not isinstance(v, kind):
        raise FormatError(f"field '{key}' has the wrong type", f"{where}.{key}")
    return v


def _array(v, where, shape=None, dtype=float):
    try:
        a = np.asarray(v, dtype=dtype)
    except (TypeError, ValueError):
        raise FormatError("expected a numeric array", where) from None
    if shape is not None:
        if a.ndim != len(shape) or any(s is not None and s != d for s, d in zip(shape, a.shape)):
            raise FormatError(f"expected shape {tuple('*' if s is None else s for s in shape)}, got {a.shape}", where)
    if dtype is float and not np.all(np.isfinite(a)):
        raise FormatError("non-finite value", where)
    return a


def _check_version(doc, fmt, version, where):
    if doc.get("format") != fmt:
        raise FormatError(f"expected format '{fmt}'", f"{where}.format")
    v = _field(doc, "version", where)
    if v != version:
        raise FormatError(f"unsupported version {v!r} (expected {version})", f"{where}.version")


def _floats(a):
    return np.asarray(a, dtype=float).tolist()


def _ints(a):
    return np.asarray(a, dtype=np.int64).tolist()


# --- labelings and parameters --------------------------------------------------

def labeling_to_dict(y: JointLabeling):
    return {"kp_group": _ints(y.kp_group), "kp_surface": _ints(y.kp_surface), "region_surface": _ints(y.region_surface)}


def labeling_from_dict(d, where) -> JointLabeling:
    parts = [_array(_field(d, k, where), f"{where}.{k}", (None,), np.int64)
             for k in ("kp_group", "kp_surface", "region_surface")]
    try:
        return JointLabeling(*parts)
    except ValueError as exc:
        raise FormatError(str(exc), where) from None


def params_to_dict(p: SceneParams):
    return {
        "lines": {str(n): _floats(l) for n, l in sorted(p.plane_lines.items())},
        "patterns": {
            str(g): {
                "mean_descriptor": _floats(pp.mean_descriptor),
                "mean_log_rect_scale": {str(n): float(v) for n, v in sorted(pp.mean_log_rect_scale.items())},
            }
            for g, pp in sorted(p.patterns.items())
        },
        "gmms": {
            str(n): {"means": _floats(m.means), "covariances": _floats(m.covariances), "weights": _floats(m.weights)}
            for n, m in sorted(p.surface_gmms.items())
        },
    }


def params_from_dict(d, where) -> SceneParams:
    try:
        lines = {int(n): _array(l, f"{where}.lines.{n}", (3,)) for n, l in _field(d, "lines", where, dict).items()}
        patterns = {}
        for g, pd in _field(d, "patterns", where, dict).items():
            w = f"{where}.patterns.{g}"
            stats = {int(n): float(v) for n, v in _field(pd, "mean_log_rect_scale", w, dict).items()}
            patterns[int(g)] = PatternParams(_array(_field(pd, "mean_descriptor", w), f"{w}.mean_descriptor", (None,)), stats)
        gmms = {}
        for n, gd in _field(d, "gmms", where, dict).items():
            w = f"{where}.gmms.{n}"
            gmms[int(n)] = SurfaceGmm(
                _array(_field(gd, "means", w), f"{w}.means", (None, 3)),
                _array(_field(gd, "covariances", w), f"{w}.covariances", (None, 3, 3)),
                _array(_field(gd, "weights", w), f"{w}.weights", (None,)),
            )
        return SceneParams(patterns, lines, gmms)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise FormatError(str(exc), where) from None


# --- scenes ----------------------------------------------------------------------

def scene_to_dict(data: SceneData, truth: Optional[GroundTruth] = None):
    kps = []
    for i in range(data.n_keypoints):
        k = {"frame": _floats(data.frames[i, :, :2]), "descriptor": _floats(data.descriptors[i])}
        if not np.isnan(data.colors[i]).any():
            k["color"] = _floats(data.colors[i])
        kps.append(k)
    regions = []
    for j in range(data.n_regions):
        a, b = data.region_offsets[j], data.region_offsets[j + 1]
        regions.append({
            "centroid": _floats(data.region_centroids[j]),
            "pixel_count": int(data.region_pixel_counts[j]),
            "samples": _floats(data.region_samples[a:b]),
        })
    doc = {
        "format": "coplanar-scene",
        "version": SCENE_VERSION,
        "image_size": [float(s) for s in data.image_size],
        "keypoints": kps,
        "regions": regions,
        "adjacency": [[int(p), int(q), float(phi)] for (p, q), phi in zip(data.region_pairs, data.region_phi)],
        "overlap": _ints(data.overlap_pairs),
        "kp_pairs": _ints(data.kp_pairs),
    }
    if truth is not None:
        doc["ground_truth"] = truth_to_dict(truth)
    return doc


def scene_from_dict(doc, where="scene") -> SceneData:
    _check_version(doc, "coplanar-scene", SCENE_VERSION, where)
    size = _array(_field(doc, "image_size", where), f"{where}.image_size", (2,))
    frames, descs, colors = [], [], []
    dim = None
    for i, k in enumerate(_field(doc, "keypoints", where, list)):
        w = f"{where}.keypoints[{i}]"
        if not isinstance(k, dict):
            raise FormatError("keypoint must be an object", w)
        f = _array(_field(k, "frame", w), f"{w}.frame", (3, 2))
        d = _array(_field(k, "descriptor", w), f"{w}.descriptor", (None,))
        if dim is None:
            dim = len(d)
        elif len(d) != dim:
            raise FormatError(f"descriptor length {len(d)} differs from the first keypoint's {dim}", f"{w}.descriptor")
        n = np.linalg.norm(d)
        if abs(n - 1.0) > 1e-6:
            raise FormatError("descriptor is not unit-normalized", f"{w}.descriptor")
        frames.append(np.hstack([f, np.ones((3, 1))]))
        descs.append(d)
        colors.append(_array(k["color"], f"{w}.color", (3,)) if "color" in k else np.full(3, np.nan))
    samples, offsets, counts, cents = [], [0], [], []
    for j, r in enumerate(_field(doc, "regions", where, list)):
        w = f"{where}.regions[{j}]"
        s = _array(_field(r, "samples", w), f"{w}.samples", (None, 3))
        if not len(s):
            raise FormatError("region needs at least one colour sample", f"{w}.samples")
        samples.append(s)
        offsets.append(offsets[-1] + len(s))
        c = _field(r, "pixel_count", w)
        if not isinstance(c, int) or c < 1:
            raise FormatError("pixel_count must be a positive integer", f"{w}.pixel_count")
        counts.append(c)
        cents.append(_array(_field(r, "centroid", w), f"{w}.centroid", (2,)))
    adj = _array(doc.get("adjacency", []), f"{where}.adjacency").reshape(-1, 3) if doc.get("adjacency") else np.zeros((0, 3))
    if adj.size and np.any(adj[:, :2] != np.round(adj[:, :2])):
        raise FormatError("adjacency indices must be integers", f"{where}.adjacency")
    overlap = _array(doc.get("overlap", []), f"{where}.overlap", dtype=np.int64).reshape(-1, 2)
    kp_pairs = _array(doc.get("kp_pairs", []), f"{where}.kp_pairs", dtype=np.int64).reshape(-1, 2)
    try:
        return SceneData(
            np.array(frames).reshape(-1, 3, 3),
            np.array(descs).reshape(len(frames), dim or 128),
            np.array(colors).reshape(-1, 3),
            np.vstack(samples) if samples else None,
            np.array(offsets),
            np.array(counts, dtype=np.int64),
            np.array(cents).reshape(-1, 2),
            adj[:, :2].astype(np.int64),
            adj[:, 2],
            overlap,
            kp_pairs,
            tuple(size),
        )
    except Exception as exc:  # validation errors from the container
        if isinstance(exc, FormatError):
            raise
        raise FormatError(str(exc), where) from None


def read_scene(path) -> SceneData:
    return scene_from_dict(_load_json(path, "scene"), str(path))


def write_scene(data: SceneData, path, truth: Optional[GroundTruth] = None):
    _dump_json(scene_to_dict(data, truth), path)


# --- ground truth ------------------------------------------------------------------

def truth_to_dict(t: GroundTruth):
    return {
        "format": "coplanar-truth",
        "version": SCENE_VERSION,
        "labeling": labeling_to_dict(t.labeling),
        "lines": {str(n): _floats(l) for n, l in sorted(t.lines.items())},
        "clusters": _ints(t.clusters),
        "plane_keypoints": {str(n): _ints(v) for n, v in sorted(t.plane_keypoints.items())},
    }


def truth_from_dict(doc, where="truth") -> GroundTruth:
    _check_version(doc, "coplanar-truth", SCENE_VERSION, where)
    return GroundTruth(
        labeling_from_dict(_field(doc, "labeling", where, dict), f"{where}.labeling"),
        {int(n): _array(l, f"{where}.lines.{n}", (3,)) for n, l in _field(doc, "lines", where, dict).items()},
        _array(_field(doc, "clusters", where), f"{where}.clusters", (None,), np.int64),
        {int(n): _array(v, f"{where}.plane_keypoints.{n}", (None,), np.int64)
         for n, v in _field(doc, "plane_keypoints", where, dict).items()},
    )


def read_truth(path) -> GroundTruth:
    doc = _load_json(path, "ground-truth")
    if doc.get("format") == "coplanar-scene":
        if "ground_truth" not in doc:
            raise FormatError("scene file carries no ground truth", str(path))
        doc = doc["ground_truth"]
    return truth_from_dict(doc, str(path))


def write_truth(t: GroundTruth, path):
    _dump_json(truth_to_dict(t), path)


# --- results -------------------------------------------------------------------------

def result_to_dict(report, scene_name="", include_timings=False):
    """Serializable solve report. Wall times are left out unless asked for, so reruns compare equal."""
    doc = {
        "format": "coplanar-result",
        "version": RESULT_VERSION,
        "scene": str(scene_name),
        "labeling": labeling_to_dict(report.labeling),
        "params": params_to_dict(report.params),
        "energy": float(report.energy),
        "trace": [float(e) for e in report.trace],
        "iterations": [
            {"energy_labeling": r.energy_labeling, "energy_regression": r.energy_regression,
             "moves": r.moves, "accepted": r.accepted, "n_labels": r.n_labels}
            for r in report.iterations
        ],
        "termination": report.termination,
        "n_proposed_lines": report.n_proposed_lines,
        "descent_violations": report.descent_violations,
    }
    if include_timings:
        doc["timings"] = {"total_seconds": report.seconds, "iteration_seconds": [r.seconds for r in report.iterations]}
    return doc


def write_result(report, path, scene_name="", include_timings=False):
    _dump_json(result_to_dict(report, scene_name, include_timings), path)


def read_result(path):
    """Returns the raw document with ``labeling`` and ``params`` decoded."""
    doc = _load_json(path, "result")
    where = str(path)
    _check_version(doc, "coplanar-result", RESULT_VERSION, where)
    doc["labeling"] = labeling_from_dict(_field(doc, "labeling", where, dict), f"{where}.labeling")
    doc["params"] = params_from_dict(_field(doc, "params", where, dict), f"{where}.params")
    return doc


# --- synthetic specs -------------------------------------------------------------------

def synth_spec_from_dict(doc, where="spec") -> SynthSpec:
    """Either a full SynthSpec or ``{"random": {...random_spec kwargs}}``."""
    from .synth import random_spec

    if "random" in doc:
        try:
            return random_spec(**doc["random"])
        except TypeError as exc:
            raise FormatError(str(exc), f"{where}.random") from None
    known = {f.name for f in fields(SynthSpec)}
    unknown = set(doc) - known
    if unknown:
        raise FormatError(f"unknown fields {sorted(unknown)}", where)
    kw = dict(doc)
    planes = []
    for i, p in enumerate(kw.pop("planes", [])):
        w = f"{where}.planes[{i}]"
        try:
            pats = [PatternSpec(**q) for q in p.get("patterns", [])]
            planes.append(PlaneSpec(pats, **{k: v for k, v in p.items() if k != "patterns"}))
        except TypeError as exc:
            raise FormatError(str(exc), w) from None
    try:
        return SynthSpec(planes=planes or [PlaneSpec()], **kw)
    except TypeError as exc:
        raise FormatError(str(exc), where) from None


def read_synth_spec(path) -> SynthSpec:
    return synth_spec_from_dict(_load_json(path, "synth spec"), str(path))


def synth_spec_to_dict(spec: SynthSpec):
    return asdict(spec)


# --- weights ---------------------------------------------------------------------------

def parse_weights(text, where="weights") -> EnergyWeights:
    """Flat ``key = value`` lines; ``#`` starts a comment. Unlisted fields keep their defaults."""
    names = {"lambda" if f.name == "lambda_" else f.name: f.name for f in fields(EnergyWeights)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        loc = f"{where}:{lineno}"
        if "=" not in line:
            raise FormatError("expected 'key = value'", loc)
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in names:
            raise FormatError(f"unknown weight '{key}'", loc)
        if names[key] in values:
            raise FormatError(f"weight '{key}' given twice", loc)
        val = val.strip("\"'")
        if key == "lambda" and val.lower() == AUTO:
            values[names[key]] = AUTO
            continue
        try:
            x = float(val)
        except ValueError:
            raise FormatError(f"weight '{key}' is not a number: {val!r}", loc) from None
        if not math.isfinite(x):
            raise FormatError(f"weight '{key}' is not finite", loc)
        values[names[key]] = x
    try:
        return EnergyWeights(**values)
    except ValueError as exc:
        raise FormatError(str(exc), where) from None


def read_weights(path) -> EnergyWeights:
    return parse_weights(Path(path).read_text(), str(path))


def format_weights(w: EnergyWeights) -> str:
    out = []
    for key, v in w.file_items():
        out.append(f"{key} = {v if v == AUTO else repr(float(v))}")
    return "\n".join(out) + "\n"


def write_weights(w: EnergyWeights, path):
    Path(path).write_text(format_weights(w))
