"""``spike-dyn`` command line entry point.

Exit codes: 0 success, 2 config error, 3 numerical divergence, 4 invariant
suite failure under ``validate --strict``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import experiments as ex
from .errors import ConfigError, DivergenceError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_INVARIANT = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spike-dyn",
        description="Simulate and cross-check two-phase learning on spiked-covariance data.",
    )
    parser.add_argument("command", choices=["fig1", "fig2", "fig3", "fig4", "fig5", "validate", "custom"])
    parser.add_argument("--config", type=Path, help="JSON experiment config (defaults used if omitted)")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for independent trials")
    parser.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
    parser.add_argument("--strict", action="store_true", help="validate: exit 4 if any check fails")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def load_config(args) -> ex.ExperimentConfig:
    raw = {}
    if args.config is not None:
        try:
            raw = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    raw["experiment"] = args.command
    if args.out is not None:
        raw["output_dir"] = str(args.out)
    elif "output_dir" not in raw:
        raw["output_dir"] = str(Path("runs") / args.command)
    cfg = ex.ExperimentConfig.from_dict(raw)
    return ex.seed_from_env(cfg)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args)
        if cfg.experiment == "validate":
            manifest, report = ex.run_validate(cfg)
            for check in report["checks"]:
                status = "PASS" if check["passed"] else "FAIL"
                print(f"{status} {check['name']}: value={check['value']} tol={check['tolerance']}")
            if args.strict and not report["passed"]:
                return EXIT_INVARIANT
        elif cfg.experiment in ("fig3", "fig5"):
            runner = ex.run_fig3 if cfg.experiment == "fig3" else ex.run_fig5
            manifest = runner(cfg, threads=args.threads)
        else:
            runner = {"fig1": ex.run_fig1, "fig2": ex.run_fig2, "fig4": ex.run_fig4, "custom": ex.run_custom}
            manifest = runner[cfg.experiment](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"numerical divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    for warning in manifest.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    print(f"wrote {len(manifest.files)} file(s) to {cfg.output_dir}: {', '.join(manifest.files)}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
