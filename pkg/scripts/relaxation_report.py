#!/usr/bin/env python3
"""Compile one instance and dump relaxation diagnostics plus the serialized
JSON, for eyeballing block sizes or diffing compilations across machines.

    python scripts/relaxation_report.py --n 10 --d 1 --eps 0.2 --r 2 --json /tmp/rel.json
"""

import argparse
import json

from sosmean.adversary import ClusterAtScaledSpike, corrupt
from sosmean.distributions import GaussianIdentity, sample
from sosmean.relax import build_system, compile_relaxation, evaluate_selection, witness


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=10)
    ap.add_argument("--d", type=int, default=1)
    ap.add_argument("--eps", type=float, default=0.2)
    ap.add_argument("--k", type=int, default=2, choices=(2, 4))
    ap.add_argument("--r", type=int, default=2, choices=(1, 2, 3))
    ap.add_argument("--sigma", type=float, default=1.2)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--json", default=None, help="write full serialization here")
    args = ap.parse_args()

    s = sample(GaussianIdentity(mean=(0.0,) * args.d), args.n, seed=args.seed)
    zset = corrupt(s, args.eps, ClusterAtScaledSpike(k=2), seed=args.seed + 1)
    system = build_system(zset, sigma=args.sigma, k=args.k)
    rel = compile_relaxation(system, args.r)
    print(json.dumps(rel.summary(), indent=2))
    w, mu = witness(system)
    rep = evaluate_selection(system, w)
    print(
        f"witness: feasible={rep.feasible} mass={rep.mass:.0f} "
        f"moment_eig={rep.moment_eig_max:.3f} budget={rep.moment_budget:.3f}"
    )
    if args.json:
        with open(args.json, "w") as fh:
            fh.write(rel.to_json())
        print(f"serialized relaxation -> {args.json}")


if __name__ == "__main__":
    main()
