#!/usr/bin/env python3
"""Run the three-tier shifting heavy-hitters experiment end to end.

Generates the synthetic stream, calibrates the evolving monitor to the
requested total budget, runs the trials, and writes rows.csv / summary.json
including the noise-scale comparison against the restart baseline.
"""

import argparse
import json

from dpmon.harness import ExperimentConfig, StreamSpec, run_experiment


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=4096)
    parser.add_argument("--epsilon", type=float, default=1.0)
    parser.add_argument("--delta", type=float, default=1e-6)
    parser.add_argument("--k", type=int, default=3)
    parser.add_argument("--tau-constant", type=float, default=1.0)
    parser.add_argument("--beta", type=float, default=0.01)
    parser.add_argument("--trials", type=int, default=50)
    parser.add_argument("--seed", type=int, default=20240001)
    parser.add_argument("--out", default="out/example1")
    args = parser.parse_args()

    cfg = ExperimentConfig(
        mechanism="tme_heavy_hitters",
        epsilon=args.epsilon, delta=args.delta,
        trials=args.trials, master_seed=args.seed,
        tau_constant=args.tau_constant, beta=args.beta, k=args.k,
        stream=StreamSpec(kind="example1", n=args.n),
    )
    summary = run_experiment(cfg, args.out)
    print(json.dumps({
        "out": args.out,
        "per_tier": summary["results"]["per_tier"],
        "zero_weight_reports": summary["results"]["zero_weight_reports"],
        "scale_comparison": summary.get("scale_comparison"),
        "wallclock_s": summary["wallclock_s"],
    }, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
