"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error (unreadable or malformed
input, or a failure inside the pipeline).
"""
import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import fileio
from .config import EnergyWeights, SolverConfig
from .errors import CoplanarError, FormatError
from .evaluation import distortion_cdf, format_cdf, score_planes
from .geometry import normalizing_transform
from .model import JointLabeling, LabelUniverse
from .proposals import propose
from .render import write_svg
from .solver import solve, to_pixel_frame
from .synth import brute_force_labeling, generate

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

log = logging.getLogger("coplanar")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _weights(args) -> EnergyWeights:
    return fileio.read_weights(args.weights) if args.weights else EnergyWeights()


def cmd_synth(args):
    spec = fileio.read_synth_spec(args.spec)
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    data, truth = generate(spec)
    fileio.write_scene(data, args.out_scene, truth if args.embed_truth else None)
    if args.out_truth:
        fileio.write_truth(truth, args.out_truth)
    print(f"{data.n_keypoints} keypoints, {data.n_regions} regions, {len(truth.lines)} planes")


def cmd_propose(args):
    data = fileio.read_scene(args.scene)
    config = SolverConfig(seed=args.seed or 0)
    T = normalizing_transform(*data.image_size)
    ps = propose(data.transformed(T), config.proposal)
    params = to_pixel_frame(data, ps.labeling, ps.params, T)
    doc = {
        "format": "coplanar-proposals",
        "version": 1,
        "clusters": {str(g): fileio._ints(m) for g, m in sorted(ps.clusters.items())},
        "lines": [
            {"surface": n, "line": fileio._floats(params.plane_lines[n]), "support": h.support,
             "inliers": fileio._ints(h.inliers)}
            for n, h in enumerate(ps.lines, start=1)
        ],
        "n_hypotheses": ps.n_hypotheses,
        "labeling": fileio.labeling_to_dict(ps.labeling),
        "params": fileio.params_to_dict(params),
    }
    fileio._dump_json(doc, args.out)
    print(f"{len(ps.lines)} lines from {ps.n_hypotheses} hypotheses, {len(ps.clusters)} clusters")


def cmd_solve(args):
    data = fileio.read_scene(args.scene)
    config = SolverConfig(seed=args.seed or 0, debug=args.debug, threads=args.threads)
    if args.max_iters is not None:
        config.max_iters = args.max_iters
    report = solve(data, _weights(args), config)
    fileio.write_result(report, args.out, Path(args.scene).name, include_timings=args.timings)
    n_planes = len(report.params.plane_lines)
    print(f"energy {report.energy:.6f} after {len(report.iterations)} iterations ({report.termination}); "
          f"{n_planes} planes")
    if report.descent_violations:
        log.warning("%d descent violations", report.descent_violations)


def cmd_eval(args):
    res = fileio.read_result(args.result)
    truth = fileio.read_truth(args.truth)
    frames = fileio.read_scene(args.scene).frames
    scores = score_planes(res["labeling"], res["params"].plane_lines, truth.plane_keypoints, truth.lines, frames)
    print("plane  detected  delta_rms_px")
    for s in scores:
        print(f"{s.annotated:5d}  {s.detected:8d}  {s.delta:12.3f}")
    print(format_cdf(distortion_cdf([s.delta for s in scores], args.thresholds)))


def cmd_render(args):
    data = fileio.read_scene(args.scene)
    if args.result:
        y = fileio.read_result(args.result)["labeling"]
    else:
        y = JointLabeling.background(data.n_keypoints, data.n_regions)
    if len(y.kp_group) != data.n_keypoints or len(y.region_surface) != data.n_regions:
        raise FormatError("result does not match the scene's site counts", str(args.result))
    write_svg(data, y, args.out, title=Path(args.scene).name)


def cmd_oracle(args):
    data = fileio.read_scene(args.scene)
    weights = _weights(args)
    T = normalizing_transform(*data.image_size)
    nd = data.transformed(T)
    ps = propose(nd, SolverConfig(seed=args.seed or 0).proposal)
    universe = LabelUniverse.from_params(ps.params)
    y, e = brute_force_labeling(nd, ps.params, weights, universe)
    print(json.dumps({"oracle_energy": e, "labeling": fileio.labeling_to_dict(y)}, sort_keys=True))


def build_parser():
    p = _Parser(prog="coplanar", description="Coplanar repeat grouping and plane segmentation.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic scene")
    s.add_argument("spec", help="synthetic spec (JSON)")
    s.add_argument("--out-scene", required=True)
    s.add_argument("--out-truth")
    s.add_argument("--embed-truth", action="store_true", help="also store the ground truth inside the scene file")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("propose", help="dump the initial proposals")
    s.add_argument("--scene", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_propose)

    s = sub.add_parser("solve", help="run the full minimization")
    s.add_argument("--scene", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--weights")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--max-iters", type=int)
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--timings", action="store_true", help="record wall times (makes output run-dependent)")
    s.add_argument("--debug", action="store_true", help="check every expansion's predicted energy")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("eval", help="rectification distortion against ground truth")
    s.add_argument("--result", required=True)
    s.add_argument("--truth", required=True)
    s.add_argument("--scene", required=True)
    s.add_argument("--thresholds", type=float, nargs="+", default=[1.0, 2.0, 5.0, 10.0])
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("render", help="SVG overlay of a labeling")
    s.add_argument("--scene", required=True)
    s.add_argument("--result")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_render)

    s = sub.add_parser("oracle", help="exact minimum energy of a tiny scene")
    s.add_argument("--scene", required=True)
    s.add_argument("--weights")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", 1) is not None and getattr(args, "threads", 1) < 1:
        print("coplanar: --threads must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        args.func(args)
    except FormatError as exc:
        where = f" ({exc.where})" if exc.where else ""
        print(f"coplanar: malformed input{where}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (CoplanarError, OSError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"coplanar: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
