"""Command-line interface.

Subcommands: ``monitor`` (run the threshold monitor on a query file), ``hh``
(shifting heavy hitters on a stream), ``baseline`` (restart sparse-vector
baseline), ``audit`` (privacy / event / game audits), ``compose`` (print
budget tables), ``gen-stream`` (emit a synthetic stream file). Config and IO
failures exit nonzero with a one-line JSON error on stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import audit as audit_mod
from . import harness
from .evolving import EvolvingConfig, ShiftingHeavyHitters
from .noise import NoiseSource
from .privacy_calc import (PrivacyBudget, calibrate_evolving, calibrate_monitor,
                           delta_cap, epsilon0_bound, tau, xi_bound)
from .svt import MonitorConfig, ThresholdMonitor


class CliError(Exception):
    pass


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--epsilon", type=float, help="privacy parameter epsilon")
    parser.add_argument("--delta", type=float, help="privacy parameter delta")
    parser.add_argument("--k", type=int, help="contribution budget")
    parser.add_argument("--threshold", type=float, help="decision threshold")
    parser.add_argument("--seed", type=int, help="master seed (required for runs)")
    parser.add_argument("--trials", type=int, help="number of Monte-Carlo trials")
    parser.add_argument("--config", type=str, help="JSON file with default option values")
    parser.add_argument("--out", type=str, help="output directory")
    parser.add_argument("--debug-trace", action="store_true",
                        help="emit non-private per-round instrumentation")


def _require(args, *names):
    missing = [n for n in names if getattr(args, n.replace("-", "_"), None) is None]
    if missing:
        raise CliError(f"missing required options: {', '.join('--' + n for n in missing)}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpmon",
        description="Threshold-monitoring sparse-vector mechanisms and audits")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("monitor", help="run the threshold monitor over a query file")
    p.add_argument("--db", required=True, help="JSON file {element: multiplicity}")
    p.add_argument("--queries", required=True, help="JSONL file of {\"weights\": {...}}")
    _add_common(p)

    p = sub.add_parser("hh", help="shifting heavy hitters over a stream file")
    p.add_argument("--stream", help="JSONL stream file; omit with --example1-n")
    p.add_argument("--example1-n", type=int, help="generate the three-tier stream instead")
    p.add_argument("--tau-constant", type=float,
                   help="derive the threshold from the calibrated error level")
    p.add_argument("--beta", type=float, default=0.01)
    _add_common(p)

    p = sub.add_parser("baseline", help="restart sparse-vector baseline over a query file")
    p.add_argument("--db", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--restarts", type=int, required=True, help="budgeted number of tops")
    _add_common(p)

    p = sub.add_parser("audit", help="run the Monte-Carlo audit suites")
    p.add_argument("--kind", choices=("game", "events", "privacy"), required=True)
    _add_common(p)

    p = sub.add_parser("compose", help="print privacy budget tables")
    p.add_argument("--target-epsilon", type=float, help="invert a total budget")
    p.add_argument("--target-delta", type=float)
    p.add_argument("--m", type=float, help="steps, for the error level")
    p.add_argument("--domain-size", type=float)
    p.add_argument("--beta", type=float, default=0.01)
    p.add_argument("--tau-constant", type=float, default=1.0)
    _add_common(p)

    p = sub.add_parser("gen-stream", help="emit a synthetic three-tier stream file")
    p.add_argument("--n", type=int, required=True)
    _add_common(p)
    return parser


def _apply_config_file(parser, argv):
    # two-phase parse so --config supplies defaults that explicit flags override
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config", type=str)
    known, _ = probe.parse_known_args(argv)
    if known.config:
        with open(known.config, encoding="utf-8") as fh:
            defaults = json.load(fh)
        if not isinstance(defaults, dict):
            raise CliError("--config file must hold a JSON object")
        parser.set_defaults(**{k.replace("-", "_"): v for k, v in defaults.items()})


def _emit(payload: dict, out: str | None, name: str) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True)
    if out:
        path = Path(out)
        path.mkdir(parents=True, exist_ok=True)
        (path / name).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def _cmd_monitor(args) -> None:
    _require(args, "epsilon", "delta", "k", "threshold", "seed")
    db = harness.read_database(args.db)
    queries = harness.read_queries(args.queries)
    cfg = MonitorConfig(args.epsilon, args.delta, args.threshold, args.k)
    monitor = ThresholdMonitor(db, cfg, NoiseSource.seeded(args.seed),
                               record_trace=args.debug_trace)
    transcript = [monitor.step(q).value for q in queries]
    payload = {"transcript": transcript, "delta_cap": cfg.cap,
               "v_scale": cfg.v_scale, "seed": args.seed}
    if args.debug_trace:
        payload["trace"] = [vars(r) | {"answer": r.answer.value}
                            for r in monitor.trace]
    _emit(payload, args.out, "monitor.json")


def _cmd_hh(args) -> None:
    _require(args, "epsilon", "delta", "seed")
    if (args.stream is None) == (args.example1_n is None):
        raise CliError("give exactly one of --stream / --example1-n")
    if args.threshold is None and args.tau_constant is None:
        raise CliError("give one of --threshold / --tau-constant")
    kind = "scripted" if args.stream else "example1"
    spec = harness.StreamSpec(kind=kind, n=args.example1_n, path=args.stream)
    cfg = harness.ExperimentConfig(
        mechanism="tme_heavy_hitters", epsilon=args.epsilon, delta=args.delta,
        trials=args.trials if args.trials is not None else 1,
        master_seed=args.seed, threshold=args.threshold,
        tau_constant=args.tau_constant, beta=args.beta, k=args.k, stream=spec)
    out = args.out or "dpmon-out"
    summary = harness.run_experiment(cfg, out)
    print(json.dumps({"out": out, "summary": "summary.json",
                      "rows": summary["rows_csv"]}))


def _cmd_baseline(args) -> None:
    _require(args, "epsilon", "delta", "threshold", "seed")
    db = harness.read_database(args.db)
    queries = harness.read_queries(args.queries)
    result = harness.run_baseline_restart(
        db, PrivacyBudget(args.epsilon, args.delta), args.threshold, queries,
        args.restarts, NoiseSource.seeded(args.seed))
    payload = {
        "transcript": result.transcript,
        "epsilon_per_instance": result.epsilon_per_instance,
        "per_query_scale": result.per_query_scale,
        "tops_spent": result.tops_spent,
        "ledger": [vars(e) for e in result.ledger],
    }
    _emit(payload, args.out, "baseline.json")


def _cmd_audit(args) -> None:
    _require(args, "seed")
    trials = args.trials if args.trials is not None else 2000
    from . import scenarios
    if args.kind == "game":
        payload = scenarios.game_audit(trials, args.seed)
    elif args.kind == "events":
        payload = scenarios.event_audit(trials, args.seed)
    else:
        payload = scenarios.privacy_audit(trials, args.seed)
    _emit(payload, args.out, f"audit-{args.kind}.json")


def _cmd_compose(args) -> None:
    _require(args, "epsilon", "delta", "k")
    eps, dlt, k = args.epsilon, args.delta, args.k
    table: dict = {
        "epsilon": eps, "delta": dlt, "k": k,
        "delta_cap": delta_cap(eps, dlt),
        "v_scale": math.log(1.0 / dlt) / eps,
        "xi": xi_bound(eps, dlt, k),
        "xi_delta": 3.0 * dlt,
        "epsilon0": epsilon0_bound(eps, dlt, k).epsilon,
        "epsilon0_delta": epsilon0_bound(eps, dlt, k).delta,
    }
    if args.m and args.domain_size:
        table["tau"] = tau(k, eps, dlt, args.m, args.domain_size, args.beta,
                           args.tau_constant)
    if args.target_epsilon is not None and args.target_delta is not None:
        target = PrivacyBudget(args.target_epsilon, args.target_delta)
        cal_eps, cal_delta = calibrate_monitor(target, k)
        scales = calibrate_evolving(target, k)
        table["calibrated"] = {
            "target_epsilon": target.epsilon, "target_delta": target.delta,
            "epsilon_per_run": cal_eps, "delta_per_run": cal_delta,
            "scale1": scales.scale1, "scale2": scales.scale2,
            "achieved_epsilon0": epsilon0_bound(cal_eps, cal_delta, k).epsilon,
            "achieved_delta": epsilon0_bound(cal_eps, cal_delta, k).delta,
        }
    _emit(table, args.out, "compose.json")


def _cmd_gen_stream(args) -> None:
    _require(args, "seed")
    stream = harness.gen_example1(args.n, args.seed)
    out = Path(args.out) if args.out else Path(".")
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"example1-n{args.n}-seed{args.seed}.jsonl"
    harness.write_stream(path, stream.snapshots)
    print(json.dumps({
        "path": str(path), "n": stream.n, "steps": stream.steps,
        "domain_size": stream.domain_size,
        "kstar_counted": harness.kstar_counted(stream.truth, stream.n),
    }))


_COMMANDS = {
    "monitor": _cmd_monitor,
    "hh": _cmd_hh,
    "baseline": _cmd_baseline,
    "audit": _cmd_audit,
    "compose": _cmd_compose,
    "gen-stream": _cmd_gen_stream,
}


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        _COMMANDS[args.command](args)
        return 0
    except (CliError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
