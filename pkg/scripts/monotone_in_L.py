"""Monte-Carlo volume of the tree-machine implicit set as L grows (n = 2 integrator).

    python scripts/monotone_in_L.py [--L 1 2 3 4] [--samples 10000]
"""
import argparse

from implicit_rcis.cli import RunConfig, build
from implicit_rcis.oracle import maximal_rcis, mc_volume_ratio, polytope_predicate
from implicit_rcis.polytope import bounding_box
from implicit_rcis.rcis import batch_membership


def volumes(n=2, Ls=(1, 2, 3, 4), samples=10_000, seed=0):
    """``[(L, ratio, half_width), ...]`` relative to the maximal RCIS."""
    base = RunConfig.from_dict({"plant": {"preset": "integrator", "n": n},
                                "machine": {"kind": "tree", "L": 1}})
    orc = maximal_rcis(build(base).plant)
    box = bounding_box(orc.set)
    ref = polytope_predicate(orc.set)
    out = []
    for L in Ls:
        base.machine = {"kind": "tree", "L": L}
        rcis = build(base).rcis
        if rcis.is_empty:
            out.append((L, 0.0, 0.0))
            continue
        est = mc_volume_ratio(lambda X: batch_membership(rcis, X), ref, box, samples, seed)
        out.append((L, est.ratio, est.half_width))
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--n", type=int, default=2)
    ap.add_argument("--L", type=int, nargs="+", default=[1, 2, 3, 4])
    ap.add_argument("--samples", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    prev = None
    for L, ratio, hw in volumes(args.n, args.L, args.samples, args.seed):
        flag = ""
        if prev is not None and ratio < prev[0] - 2 * max(prev[1], hw):
            flag = "  (smaller than L-1 beyond 2 CI)"
        print(f"L = {L}: {100 * ratio:6.2f} % +- {100 * hw:.2f}{flag}")
        prev = (ratio, hw)


if __name__ == "__main__":
    main()
