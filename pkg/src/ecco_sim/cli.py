"""Command-line entry point: run, profile, compare, analyze."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .gpu_allocator import POLICIES, InfeasibleScheduleError
from .metrics import UNATTAINED, MetricsTrace, response_time, summary, write_metrics
from .scenario import ScenarioError, load_scenario
from .simulation import Simulation, run_scenario


def _load(args):
    cfg = load_scenario(args.scenario)
    changes = {}
    if getattr(args, "policy", None):
        changes["policy"] = args.policy
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    return cfg.with_(**changes) if changes else cfg


def cmd_run(args) -> int:
    cfg = _load(args)
    trace = run_scenario(cfg)
    out = Path(args.out or f"out/{cfg.name}-{cfg.policy}")
    write_metrics(trace, out, args.target_acc)
    means = trace.mean_accuracy()
    print(f"{cfg.name} policy={cfg.policy} windows={len(means)} "
          f"final_mean_acc={means[-1]:.4f} -> {out}")
    return 0


def cmd_profile(args) -> int:
    cfg = _load(args)
    sim = Simulation(cfg)
    if args.camera not in sim.cameras:
        raise ScenarioError(f"unknown camera {args.camera!r}", "$.cameras")
    table = sim.profile(args.camera)
    out = Path(args.out or f"profile-{args.camera}.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    table.write(out)
    for row in table.rows:
        flag = "" if row.feasible else "  (infeasible)"
        print(f"{row.budget:8.2f} GPU-s  {row.config.frame_rate:g} fps @ "
              f"{row.config.resolution:g}p{flag}")
    print(f"wrote {out}")
    return 0


def cmd_compare(args) -> int:
    base = load_scenario(args.scenario)
    if args.seed is not None:
        base = base.with_(seed=args.seed)
    policies = [p.strip() for p in args.policies.split(",") if p.strip()]
    bad = [p for p in policies if p not in POLICIES]
    if bad:
        raise ScenarioError(f"unknown policies {bad}; choose from {list(POLICIES)}",
                            "--policies")
    results = {p: run_scenario(base.with_(policy=p)).mean_accuracy() for p in policies}
    print("window  " + "  ".join(f"{p:>16}" for p in policies))
    for w in range(len(results[policies[0]])):
        print(f"{w + 1:6d}  " + "  ".join(f"{results[p][w]:16.4f}" for p in policies))
    return 0


def cmd_analyze(args) -> int:
    trace = MetricsTrace.from_camera_csv(args.trace)
    rt = response_time(trace, args.target_acc)
    for cam, secs in rt.items():
        print(f"{cam}\t{UNATTAINED if secs is None else f'{secs:g}'}")
    if args.json:
        print(json.dumps(summary(trace, args.target_acc), indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ecco-sim", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate a scenario and write metrics")
    p.add_argument("scenario")
    p.add_argument("--policy", choices=POLICIES)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--target-acc", type=float, default=0.35)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("profile", help="emit a camera's profile table")
    p.add_argument("scenario")
    p.add_argument("--camera", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("compare", help="mean accuracy per window for several policies")
    p.add_argument("scenario")
    p.add_argument("--policies", default=",".join(POLICIES))
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("analyze", help="response times from a cameras.csv trace")
    p.add_argument("trace")
    p.add_argument("--target-acc", type=float, required=True)
    p.add_argument("--json", action="store_true", help="also print the summary")
    p.set_defaults(func=cmd_analyze)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"error: invalid scenario: {exc}", file=sys.stderr)
        return 2
    except InfeasibleScheduleError as exc:
        print(f"error: infeasible schedule: {exc}", file=sys.stderr)
        return 3
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
