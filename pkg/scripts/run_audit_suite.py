#!/usr/bin/env python3
"""Run the three Monte-Carlo audit families and print their verdicts.

Use --trials to trade accuracy for speed; the acceptance-level numbers use
100000 trials.
"""

import argparse
import json

from dpmon.scenarios import event_audit, game_audit, privacy_audit


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--trials", type=int, default=5000)
    parser.add_argument("--seed", type=int, default=20240002)
    parser.add_argument("--kinds", nargs="+", default=["game", "events", "privacy"],
                        choices=["game", "events", "privacy"])
    args = parser.parse_args()

    runners = {"game": game_audit, "events": event_audit, "privacy": privacy_audit}
    for kind in args.kinds:
        result = runners[kind](args.trials, args.seed)
        print(json.dumps({"kind": kind, "all_ok": result["all_ok"]}))


if __name__ == "__main__":
    main()
