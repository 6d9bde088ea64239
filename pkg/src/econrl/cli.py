"""Command-line surface: train, rollout, best-response, baseline-sweep,
layout, schedule-dump.

Exit codes: 0 success, 2 configuration/usage errors, 1 runtime errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .config import ConfigError, RunConfig
from .curriculum import schedule_rows, terminal_state
from .equilibrium import best_response, fixed_tax_sweep
from .io import export_rollout, load_config, rollout_record
from .observations import ObsEncoder
from .trainer import eval_rng, load_checkpoint, run_episode, train

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2

_TYPE_ALIASES = {
    "c": "consumer",
    "f": "firm",
    "g": "government",
    "consumer": "consumer",
    "firm": "firm",
    "government": "government",
}


def _parse_rates(raw: str) -> list[tuple[float, float]]:
    pairs = []
    for part in raw.split(","):
        part = part.strip()
        if not part:
            continue
        bits = part.split(":")
        if len(bits) != 2:
            raise ConfigError(
                f"bad rate pair {part!r}: expected income:corporate, e.g. 0.2:0.4"
            )
        pairs.append((float(bits[0]), float(bits[1])))
    if not pairs:
        raise ConfigError("no rate pairs given")
    return pairs


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="econrl",
        description="RBC economy simulator with a multi-agent RL training stack.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run the staged training loop")
    p.add_argument("--config", required=True, help="config file (INI-style)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument(
        "--no-curriculum",
        action="store_true",
        help="ablation: full action ranges, constant work disutility, all types train from step 0",
    )
    p.add_argument("--workers", type=int, default=None, help="rollout worker processes")
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    p.add_argument("--log-every", type=int, default=0, help="print progress every N updates")

    p = sub.add_parser("rollout", help="simulate episodes from a checkpoint and export JSON")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="output JSON file")
    p.add_argument("--episodes", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("best-response", help="retrain one agent type, opponents frozen")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--type", required=True, choices=sorted(_TYPE_ALIASES))
    p.add_argument("--updates", type=int, required=True)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--episodes", type=int, default=32, help="evaluation episodes")
    p.add_argument("--out", default=None, help="write the JSON report here")

    p = sub.add_parser("baseline-sweep", help="social welfare under fixed tax rates")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--rates", default=None, help="pairs income:corporate, comma separated")
    p.add_argument("--retrain-updates", type=int, default=0)
    p.add_argument("--episodes", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="prefix for .json and .csv reports")

    p = sub.add_parser("layout", help="print the observation layout as JSON")
    p.add_argument("--config", default=None)

    p = sub.add_parser("schedule-dump", help="emit the curriculum schedule as CSV")
    p.add_argument("--config", default=None)
    p.add_argument("--steps", type=int, default=None, help="last training step to include")
    p.add_argument("--every", type=int, default=1, help="probe interval")
    p.add_argument("--out", default=None, help="CSV path (stdout when omitted)")

    return parser


def _load_or_default(path: str | None) -> RunConfig:
    return load_config(path) if path else RunConfig()


def _cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.no_curriculum:
        cfg.curriculum = dataclasses.replace(cfg.curriculum, enabled=False)
    train(
        cfg,
        seed=args.seed,
        out_dir=args.out,
        resume=args.resume,
        workers=args.workers,
        argv=sys.argv,
        log_every=args.log_every,
    )
    return EXIT_OK


def _cmd_rollout(args) -> int:
    rs = load_checkpoint(args.checkpoint)
    cur = terminal_state(rs.config.curriculum, rs.config.economy)
    encoder = ObsEncoder(rs.config.economy)
    traces = []
    for e in range(args.episodes):
        ep = run_episode(
            rs.config, rs.nets, cur.masks, cur.theta,
            rng=eval_rng(args.seed, e), encoder=encoder, record_trace=True,
        )
        traces.append(ep.trace)
    record = rollout_record(rs.config.economy, traces, args.seed)
    export_rollout(args.out, record)
    print(f"wrote {args.episodes} episode(s) to {args.out}")
    return EXIT_OK


def _cmd_best_response(args) -> int:
    report = best_response(
        args.checkpoint,
        _TYPE_ALIASES[args.type],
        br_updates=args.updates,
        seed=args.seed,
        eval_episodes=args.episodes,
    )
    text = json.dumps(report.to_dict(), indent=2)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)
    return EXIT_OK


def _cmd_baseline_sweep(args) -> int:
    rates = _parse_rates(args.rates) if args.rates else None
    report = fixed_tax_sweep(
        args.checkpoint,
        rates=rates,
        seed=args.seed,
        eval_episodes=args.episodes,
        retrain_updates=args.retrain_updates,
    )
    text = json.dumps(report, indent=2)
    if args.out:
        with open(args.out + ".json", "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
        with open(args.out + ".csv", "w", encoding="utf-8") as fh:
            fh.write("tax_income,tax_corporate,welfare,reward_consumer,reward_firm\n")
            for row in report["rows"]:
                fh.write(
                    f"{row['tax_income']!r},{row['tax_corporate']!r},{row['welfare']!r},"
                    f"{row['reward_consumer']!r},{row['reward_firm']!r}\n"
                )
    print(text)
    return EXIT_OK


def _cmd_layout(args) -> int:
    cfg = _load_or_default(args.config)
    print(json.dumps(ObsEncoder(cfg.economy).layout.to_json_dict(), indent=2))
    return EXIT_OK


def _cmd_schedule_dump(args) -> int:
    cfg = _load_or_default(args.config)
    last = args.steps
    if last is None:
        last = cfg.curriculum.t_start_government + cfg.curriculum.government_anneal_span
    steps = range(0, last + 1, max(1, args.every))
    header, rows = schedule_rows(cfg.curriculum, cfg.economy, steps)
    lines = [",".join(header)]
    lines += [",".join(repr(x) if isinstance(x, float) else str(x) for x in row) for row in rows]
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


_COMMANDS = {
    "train": _cmd_train,
    "rollout": _cmd_rollout,
    "best-response": _cmd_best_response,
    "baseline-sweep": _cmd_baseline_sweep,
    "layout": _cmd_layout,
    "schedule-dump": _cmd_schedule_dump,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # runtime failures get a distinct exit code
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
