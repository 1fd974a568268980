"""Command-line entry point.

    ergodiff run --config FILE [--seed N] [--out DIR]
    ergodiff list-models
    ergodiff validate --config FILE

``run`` exits 0 when every declared tolerance check passes, 2 when a
check fails, and 1 on configuration or runtime errors (with no partial
output files).  Thread count is controlled only by the ERGODIFF_THREADS
environment variable.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import errors, models, runner


def _load_config(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise errors.ConfigError(f"cannot read config {path}: {e}") from e


def _cmd_run(args) -> int:
    raw = _load_config(args.config)
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.out is not None:
        raw["output_dir"] = args.out
    cfg = runner.validate_config(raw)
    if not cfg.output_dir:
        raise errors.ConfigError("an output directory is required "
                                 "(config output_dir or --out)")
    report = runner.run_experiment(cfg)
    files = runner.emit_report(report, cfg.output_dir)
    for c in report.checks:
        status = "PASS" if c.passed else "FAIL"
        print(f"{status} {c.name}: value={c.value:.6g} threshold={c.threshold:.6g}")
    print(f"wrote {len(files)} files to {cfg.output_dir}")
    return 0 if report.passed else 2


def _cmd_list_models(_args) -> int:
    print("models:")
    for name in sorted(models.MODEL_REGISTRY):
        print(f"  {name}")
    print("fast-slow systems:")
    for name in sorted(models.SYSTEM_REGISTRY):
        print(f"  {name}")
    print("functions:")
    for name in sorted(models.FUNCTION_REGISTRY):
        print(f"  {name}")
    return 0


def _cmd_validate(args) -> int:
    raw = _load_config(args.config)
    runner.validate_config(raw)
    print("config is valid")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="ergodiff")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment from a config file")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default=None)
    p_run.set_defaults(fn=_cmd_run)

    p_list = sub.add_parser("list-models", help="list model/system labels")
    p_list.set_defaults(fn=_cmd_list_models)

    p_val = sub.add_parser("validate", help="validate a config file")
    p_val.add_argument("--config", required=True)
    p_val.set_defaults(fn=_cmd_validate)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except errors.ErgodiffError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
