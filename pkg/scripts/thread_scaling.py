"""Measure how the branch-and-bound wall time scales with worker count.

Runs the same set of resilience queries at several worker counts, checks that
every count returns the same optimum (parallel search must not change the
answer, only the time), and prints wall times with speedups relative to one
worker. Work stealing only pays off once the tree is deep enough; the tiny
bundled fixtures mostly show overhead, which is itself useful to see.

Example:
    python3 scripts/thread_scaling.py --net atan_wide --class 1 \
        --alpha 1.1 --workers 1 2 4 --repeats 3
"""

import argparse
import math
import statistics
import time

from resilmip.dataflow import propagate_intervals
from resilmip.network import load_network
from resilmip.resilience import compute_phi
from resilmip.solver import SolveConfig
from resilmip.zoo import FIXTURES


def _load(name: str):
    if name in FIXTURES:
        return FIXTURES[name]()
    return load_network(name)


def main() -> None:
    ap = argparse.ArgumentParser(
        description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--net", required=True,
                    help="fixture name or path to a network JSON file")
    ap.add_argument("--class", dest="cls", type=int, required=True,
                    help="protected class (1-based)")
    ap.add_argument("--alpha", type=float, default=math.e)
    ap.add_argument("--k", type=int, default=1)
    ap.add_argument("--workers", type=int, nargs="+", default=[1, 2, 4])
    ap.add_argument("--repeats", type=int, default=3,
                    help="timing repetitions per worker count (median reported)")
    ap.add_argument("--segments", type=int, default=8)
    args = ap.parse_args()

    net = _load(args.net)
    bounds = propagate_intervals(net)

    print(f"net {args.net}: class {args.cls}, alpha={args.alpha:.6g}, "
          f"k={args.k}, {args.repeats} repeats")
    header = (f"{'workers':>8}  {'phi':>12}  {'nodes':>7}  "
              f"{'median_s':>9}  {'speedup':>8}")
    print(header)
    print("-" * len(header))

    base_phi = None
    base_time = None
    for w in args.workers:
        times = []
        res = None
        for _ in range(args.repeats):
            t0 = time.perf_counter()
            res = compute_phi(net, args.cls, alpha=args.alpha, k=args.k,
                              bounds=bounds, segments=args.segments,
                              config=SolveConfig(workers=w))
            times.append(time.perf_counter() - t0)
        med = statistics.median(times)
        nodes = res.solve.nodes_explored if res.solve is not None else 0

        if base_phi is None:
            base_phi, base_time = res.phi, med
            speedup = 1.0
        else:
            speedup = base_time / med if med > 0 else float("inf")
            agree = (res.phi == base_phi
                     or abs(res.phi - base_phi) <= 1e-6 * max(1.0, abs(base_phi)))
            if not agree:
                raise SystemExit(f"optimum changed with {w} workers: "
                                 f"{res.phi!r} vs {base_phi!r}")
        phi_txt = "inf" if math.isinf(res.phi) else f"{res.phi:.6g}"
        print(f"{w:>8d}  {phi_txt:>12}  {nodes:>7d}  {med:>9.3f}  {speedup:>8.2f}")

    print("\nall worker counts agree on the optimum (checked at mip_gap)")


if __name__ == "__main__":
    main()
