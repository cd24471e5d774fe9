"""Wall time of one full labeling pass on the benchmark instances."""
import argparse
import time

import numpy as np

from coplanar.config import EnergyWeights
from coplanar.inference import LabelingProblem, MoveStats, solve_labeling, solve_labeling_problem
from coplanar.model import JointLabeling
from coplanar.synth import labeling_benchmark

INSTANCES = {
    "large": dict(n_planes=5, per_plane=386, patterns_per_plane=4, region_cell=10, n_labels=50),
    "small": dict(n_planes=2, per_plane=154, patterns_per_plane=2, region_cell=40),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()

    # jit warm-up
    solve_labeling_problem(LabelingProblem(np.array([[0.0, 1.0], [1.0, 0.0]]), [(0, 1)], [1.0], [0, 1]), [0, 0])
    for name, kw in INSTANCES.items():
        nd, params, universe = labeling_benchmark(**kw)
        times = []
        for _ in range(args.repeats):
            stats = MoveStats()
            y0 = JointLabeling.background(nd.n_keypoints, nd.n_regions)
            t0 = time.perf_counter()
            solve_labeling(nd, params, universe, EnergyWeights(), y0, stats=stats)
            times.append(time.perf_counter() - t0)
        print(f"{name:6s} {nd.n_keypoints + nd.n_regions:6d} sites {len(universe):3d} labels  "
              f"best {min(times):.3f} s  median {np.median(times):.3f} s  moves {stats.moves}")


if __name__ == "__main__":
    main()
