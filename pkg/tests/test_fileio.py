import json

import numpy as np
import pytest

from coplanar import fileio
from coplanar.config import AUTO, EnergyWeights, SolverConfig
from coplanar.errors import FormatError
from coplanar.solver import solve
from coplanar.synth import generate, random_spec

SCENE_FIELDS = ("frames", "descriptors", "colors", "region_samples", "region_offsets", "region_pixel_counts",
                "region_centroids", "region_pairs", "region_phi", "overlap_pairs", "kp_pairs")


@pytest.fixture(scope="module")
def small_scene():
    return generate(random_spec(2, 60, seed=1, region_cell=80))


def test_scene_round_trip(tmp_path, small_scene):
    data, truth = small_scene
    path = tmp_path / "scene.json"
    fileio.write_scene(data, path, truth)
    back = fileio.read_scene(path)
    for name in SCENE_FIELDS:
        np.testing.assert_array_equal(getattr(back, name), getattr(data, name), err_msg=name)
    assert back.image_size == data.image_size
    t = fileio.read_truth(path)
    assert t.labeling == truth.labeling
    for n in truth.lines:
        np.testing.assert_array_equal(t.lines[n], truth.lines[n])


def test_truth_round_trip(tmp_path, small_scene):
    _, truth = small_scene
    path = tmp_path / "truth.json"
    fileio.write_truth(truth, path)
    t = fileio.read_truth(path)
    assert t.labeling == truth.labeling
    np.testing.assert_array_equal(t.clusters, truth.clusters)
    assert {n: v.tolist() for n, v in t.plane_keypoints.items()} == {n: v.tolist() for n, v in truth.plane_keypoints.items()}


def test_result_round_trip(tmp_path, small_scene):
    data, _ = small_scene
    rep = solve(data, config=SolverConfig(max_iters=2))
    path = tmp_path / "r.json"
    fileio.write_result(rep, path, "scene.json")
    doc = fileio.read_result(path)
    assert doc["labeling"] == rep.labeling
    for n, l in rep.params.plane_lines.items():
        np.testing.assert_array_equal(doc["params"].plane_lines[n], l)
    for n, g in rep.params.surface_gmms.items():
        np.testing.assert_array_equal(doc["params"].surface_gmms[n].covariances, g.covariances)
    assert doc["trace"] == rep.trace
    assert "timings" not in doc
    fileio.write_result(rep, path, "scene.json", include_timings=True)
    assert "timings" in json.loads(path.read_text())


def test_bad_json_reports_line(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n "format": "coplanar-scene",\n "version": 1,\n oops\n}\n')
    with pytest.raises(FormatError) as exc:
        fileio.read_scene(path)
    assert f"{path}:4:" in str(exc.value)


def _doc(tmp_path, small_scene):
    data, _ = small_scene
    return fileio.scene_to_dict(data)


def _expect(tmp_path, doc, where):
    path = tmp_path / "s.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(FormatError) as exc:
        fileio.read_scene(path)
    assert where in str(exc.value)


def test_missing_field_located(tmp_path, small_scene):
    doc = _doc(tmp_path, small_scene)
    del doc["keypoints"][3]["frame"]
    _expect(tmp_path, doc, "keypoints[3]")


def test_bad_shape_located(tmp_path, small_scene):
    doc = _doc(tmp_path, small_scene)
    doc["keypoints"][1]["frame"] = [[0, 0], [1, 0]]
    _expect(tmp_path, doc, "keypoints[1].frame")


def test_non_unit_descriptor_located(tmp_path, small_scene):
    doc = _doc(tmp_path, small_scene)
    doc["keypoints"][2]["descriptor"] = [2.0] * len(doc["keypoints"][2]["descriptor"])
    _expect(tmp_path, doc, "keypoints[2].descriptor")


def test_wrong_version(tmp_path, small_scene):
    doc = _doc(tmp_path, small_scene)
    doc["version"] = 99
    _expect(tmp_path, doc, ".version")


def test_index_out_of_range(tmp_path, small_scene):
    doc = _doc(tmp_path, small_scene)
    doc["overlap"] = [[0, 10_000]]
    _expect(tmp_path, doc, str(tmp_path / "s.json"))


def test_region_count_validated(tmp_path, small_scene):
    doc = _doc(tmp_path, small_scene)
    doc["regions"][0]["pixel_count"] = 0
    _expect(tmp_path, doc, "regions[0].pixel_count")


# ---- weights ----

def test_weights_round_trip(tmp_path):
    w = EnergyWeights(w_scale=7.5, lambda_=0.3)
    path = tmp_path / "w.txt"
    fileio.write_weights(w, path)
    assert fileio.read_weights(path) == w
    fileio.write_weights(EnergyWeights(), path)
    assert fileio.read_weights(path).lambda_ == AUTO


def test_weights_partial_with_comments():
    w = fileio.parse_weights("# tuned\nw_app = 2.5   # appearance\n\nlambda = auto\n")
    assert w.w_app == 2.5 and w.lambda_ == AUTO and w.w_scale == EnergyWeights().w_scale


@pytest.mark.parametrize("text,line,msg", [
    ("w_app = 1\nw_bogus = 2\n", 2, "unknown"),
    ("w_app = 1\nw_app = 2\n", 2, "twice"),
    ("w_app 1\n", 1, "key = value"),
    ("\n\nw_app = many\n", 3, "not a number"),
    ("w_app = nan\n", 1, "not finite"),
])
def test_weights_errors_name_the_line(text, line, msg):
    with pytest.raises(FormatError) as exc:
        fileio.parse_weights(text, "w.txt")
    assert f"w.txt:{line}" in str(exc.value) and msg in str(exc.value)


def test_negative_weight_rejected():
    with pytest.raises(FormatError):
        fileio.parse_weights("w_scale = -1\n")


# ---- synthetic specs ----

def test_random_spec_document():
    spec = fileio.synth_spec_from_dict({"random": {"n_planes": 2, "n_keypoints": 40, "seed": 9}})
    assert len(spec.planes) == 2 and spec.seed == 9


def test_full_spec_document():
    doc = {"width": 400, "height": 300, "planes": [{"patterns": [{"count": 5, "size": 12.0}]}], "seed": 2}
    spec = fileio.synth_spec_from_dict(doc)
    assert spec.width == 400 and spec.planes[0].patterns[0].count == 5


def test_unknown_spec_field():
    with pytest.raises(FormatError):
        fileio.synth_spec_from_dict({"colour": 1})
