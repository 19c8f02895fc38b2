"""
Command-line entry point.

    blossomsim run [--config PATH] [--seed N] [--strategy boundary|center|both]
                   [--replicates N] [--workers N] [--replay LOG] [--out DIR]
                   [--format delimited|structured|plain] [--no-figures]
    blossomsim --dump-default-config
    blossomsim --version

Exit codes: 0 success, 2 configuration or input error, 3 pipeline invariant
violation.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import platform
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .config import STRATEGY_CHOICES, ScenarioConfig, config_to_dict, dump_config, load_config
from .errors import ConfigError, ParseError, PipelineInvariantError
from .pipeline import aggregate, run_replicates, strategies_for
from .replay import bundled_log_path, decisions_from_replicates, load_decision_log, replay
from .report import FORMATS, report_tables, write_artifacts

OUT_ENV = "BLOSSOMSIM_OUT"
DEFAULT_OUT = "blossomsim-out"
EXIT_OK, EXIT_INPUT, EXIT_INVARIANT = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="blossomsim", description="Robotic blossom-thinning pipeline simulator.")
    p.add_argument("--version", action="version", version=f"blossomsim {__version__}")
    p.add_argument("--dump-default-config", action="store_true", help="print the commented default config and exit")
    sub = p.add_subparsers(dest="command")
    r = sub.add_parser("run", help="simulate scenes or replay a decision log")
    r.add_argument("--config", type=Path, help="scenario YAML (defaults apply when omitted)")
    r.add_argument("--seed", type=int, help="override run.seed")
    r.add_argument("--strategy", choices=STRATEGY_CHOICES, help="override run.strategy")
    r.add_argument("--replicates", type=int, help="override run.replicates")
    r.add_argument("--workers", type=int, help="override run.workers")
    r.add_argument(
        "--replay", metavar="LOG",
        help="replay a decision log instead of simulating ('bundled' selects the shipped field-trial log)",
    )
    r.add_argument("--out", type=Path, help=f"output directory (default: ${OUT_ENV} or ./{DEFAULT_OUT})")
    r.add_argument("--format", choices=FORMATS, default="plain", help="report format printed and saved")
    r.add_argument("--no-figures", action="store_true", help="skip PNG figures")
    return p


def _apply_overrides(cfg: ScenarioConfig, args) -> ScenarioConfig:
    over = {}
    for name in ("seed", "strategy", "replicates", "workers"):
        v = getattr(args, name)
        if v is not None:
            over[name] = v
    if over:
        cfg = cfg.replace(run=dataclasses.replace(cfg.run, **over))
        cfg.run.validate()
    return cfg


def _write_meta(out: Path, args, started: float, mode: str) -> None:
    # nondeterministic run metadata lives in a sidecar, never in the golden artifacts
    meta = {
        "created_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "elapsed_s": round(time.perf_counter() - started, 3),
        "host": platform.node(),
        "python": platform.python_version(),
        "blossomsim": __version__,
        "argv": sys.argv[1:],
        "mode": mode,
    }
    (out / "run_meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def cmd_run(args) -> int:
    started = time.perf_counter()
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    cfg = _apply_overrides(cfg, args)
    out = args.out or Path(os.environ.get(OUT_ENV) or DEFAULT_OUT)

    if args.replay:
        log_path = bundled_log_path() if args.replay == "bundled" else Path(args.replay)
        try:
            log = load_decision_log(log_path)
        except OSError as exc:
            raise ConfigError(f"cannot read decision log: {exc.strerror}", str(log_path)) from None
        except ParseError as exc:
            raise ParseError(f"{log_path}: {exc}") from None
        summaries = replay(log)
        mode = "replay"
        extra = {"source": log_path.name}
        write_artifacts(out, summaries, args.format, mode, decisions_text=log.to_text(),
                        extra=extra, figures=not args.no_figures)
    else:
        reps = run_replicates(cfg, strategies=strategies_for(cfg.run.strategy))
        summaries = aggregate(reps)
        mode = "simulation"
        extra = {"seeds": [r.seed for r in reps], "config": config_to_dict(cfg)}
        write_artifacts(out, summaries, args.format, mode, replicates=reps,
                        decisions_text=decisions_from_replicates(reps).to_text(), extra=extra,
                        figures=not args.no_figures)
    _write_meta(out, args, started, mode)
    sys.stdout.write(report_tables(summaries, args.format, mode, extra))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.dump_default_config:
        sys.stdout.write(dump_config())
        return EXIT_OK
    if args.command != "run":
        parser.print_usage(sys.stderr)
        return EXIT_INPUT
    try:
        return cmd_run(args)
    except (ConfigError, ParseError) as exc:
        print(f"blossomsim: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except PipelineInvariantError as exc:
        print(f"blossomsim: invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
