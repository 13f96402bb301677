"""Command-line entry point: ``derivlab exp1|exp2|exp3|attacks|equiv``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

from .adversary import AttackId, run_attack
from .cost import DEFAULT_WEIGHTS, CostWeights
from .errors import DerivLabError, PropertyViolation
from .experiments import (
    DEFAULT_OUTAGE_BLOCKS,
    DEFAULT_OUTAGE_START,
    DEFAULT_TIMEOUTS,
    check_equivalence,
    check_experiment_1,
    check_experiment_2,
    check_experiment_3,
    run_experiment_1,
    run_experiment_2,
    run_experiment_3,
    write_result,
)
from .world import ScenarioConfig

log = logging.getLogger("derivlab")


def _timeouts(text: str) -> tuple[int, ...]:
    try:
        vals = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad timeout list {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("timeout list is empty")
    return vals


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON scenario file")
    common.add_argument("--out", default="results", help="output directory (default: results)")
    common.add_argument("--seed", type=int, help="override the scenario seed")
    common.add_argument("--weights", help="JSON cost-weights file")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="derivlab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, what in (("exp1", "channel-timeout sweep"), ("exp2", "sweep with every bloom saturated")):
        s = sub.add_parser(name, parents=[common], help=what)
        s.add_argument("--timeouts", type=_timeouts, default=DEFAULT_TIMEOUTS,
                       help="comma-separated channel timeouts in seconds")
    s = sub.add_parser("exp3", parents=[common], help="batcher outage replay")
    s.add_argument("--outage-blocks", type=int, default=DEFAULT_OUTAGE_BLOCKS)
    s.add_argument("--outage-start", type=int, default=DEFAULT_OUTAGE_START)
    s = sub.add_parser("attacks", parents=[common], help="run the attack suite")
    s.add_argument("--seeds", type=int, default=100, help="seeds per attack")
    s = sub.add_parser("equiv", parents=[common], help="baseline/optimized equivalence sweep")
    s.add_argument("--scenarios", type=int, default=1000)
    return p


def _load(args) -> tuple[ScenarioConfig, CostWeights]:
    cfg = ScenarioConfig.load(args.config) if args.config else ScenarioConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    weights = CostWeights.load(args.weights) if args.weights else DEFAULT_WEIGHTS
    return cfg, weights


def _run(args) -> None:
    cfg, weights = _load(args)
    if args.command in ("exp1", "exp2"):
        runner, check = {
            "exp1": (run_experiment_1, check_experiment_1),
            "exp2": (run_experiment_2, check_experiment_2),
        }[args.command]
        res = runner(cfg, args.timeouts, weights)
        for path in write_result(res, args.out):
            log.info("wrote %s", path)
        sys.stdout.write(res.to_csv())
        check(res)
    elif args.command == "exp3":
        res = run_experiment_3(cfg, args.outage_blocks, outage_start=args.outage_start, weights=weights)
        for path in write_result(res, args.out):
            log.info("wrote %s", path)
        sys.stdout.write(res.to_csv())
        if res.rows:
            print(f"peak_ratio={res.peak_ratio():.4f} elevated_baseline={len(res.elevated_ranges())} "
                  f"elevated_optimized={len(res.elevated_ranges('optimized'))}")
        check_experiment_3(res)
    elif args.command == "attacks":
        base_seed = cfg.seed
        failed = 0
        for attack in AttackId:
            outs = [run_attack(attack, s) for s in range(base_seed, base_seed + args.seeds)]
            bad = [o for o in outs if not o.passed]
            for o in outs if args.verbose else bad:
                print(o.line())
            observed = sorted({o.observed for o in outs})
            print(f"{attack.value}\tseeds={args.seeds}\texpected={outs[0].expected}\t"
                  f"observed={','.join(observed)}\t{'PASS' if not bad else 'FAIL'}")
            failed += len(bad)
        if failed:
            raise PropertyViolation(f"{failed} attack runs were not stopped by their defense")
    elif args.command == "equiv":
        bad = [s for s in range(cfg.seed, cfg.seed + args.scenarios) if not check_equivalence(s)]
        print(f"equivalent={args.scenarios - len(bad)}/{args.scenarios}")
        if bad:
            raise PropertyViolation(f"outputs differ for seeds {bad[:10]}")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        _run(args)
    except DerivLabError as exc:
        print(json.dumps({"error": exc.code, "message": str(exc)}), file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
