#!/usr/bin/env python3
"""Print privacy-budget tables over a grid of budgets k.

For each k: the single-run loss, the composed square-root-in-k loss, and
the per-run parameters plus noise scales obtained by inverting a total
target budget.
"""

import argparse
import json
import math

from dpmon.privacy_calc import (PrivacyBudget, calibrate_evolving, delta_cap,
                                epsilon0_bound, xi_bound)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--epsilon", type=float, default=0.1)
    parser.add_argument("--delta", type=float, default=1e-6)
    parser.add_argument("--target-epsilon", type=float, default=1.0)
    parser.add_argument("--target-delta", type=float, default=1e-6)
    parser.add_argument("--ks", type=int, nargs="+",
                        default=[1, 2, 3, 5, 10, 20, 50, 100])
    args = parser.parse_args()

    target = PrivacyBudget(args.target_epsilon, args.target_delta)
    for k in args.ks:
        bound = epsilon0_bound(args.epsilon, args.delta, k)
        scales = calibrate_evolving(target, k)
        print(json.dumps({
            "k": k,
            "xi": xi_bound(args.epsilon, args.delta, k),
            "epsilon0": bound.epsilon,
            "epsilon0_delta": bound.delta,
            "calibrated_epsilon": scales.epsilon,
            "calibrated_delta": scales.delta,
            "scale1": scales.scale1,
            "scale2": scales.scale2,
            "delta_cap": delta_cap(scales.epsilon, scales.delta),
            "v_scale": math.log(1.0 / scales.delta) / scales.epsilon,
        }, sort_keys=True))


if __name__ == "__main__":
    main()
