"""Command-line entry point.

    slowecho run   --config FILE --out DIR
    slowecho sweep --config FILE --out DIR [--threads N]
    slowecho fit   --points CSV --c-mode min-tau|fixed:X

Exit codes: 0 success, 2 config error, 3 numeric instability, 4 analysis failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace

from . import config as config_mod
from .analysis import fit_exponential
from .errors import ConfigError, SlowEchoError
from .scenarios import (
    SWEEP_COLUMNS,
    SweepResult,
    _clean,
    read_points_csv,
    run_scenario,
)

log = logging.getLogger("slowecho")


def _probes(text):
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"--probes expects integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--probes", type=_probes, default=None,
                        help="comma-separated z indices (0 = entrance, nz = exit)")
    common.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")
    common.add_argument("--format", choices=("csv", "json"), default="json",
                        help="format of the summary printed to stdout")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="slowecho", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "run a single_run, fig2_pair or backward_control scenario"),
                        ("sweep", "run a fig3_sweep or fig4_scan scenario")):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=None, help="output directory (default: output_dir key)")
    p = sub.add_parser("fit", parents=[common], help="fit A*exp[B(tau-C)] to sweep points")
    p.add_argument("--points", required=True, help="sweep CSV or two-column tau,intensity CSV")
    p.add_argument("--c-mode", default="min-tau", help="min-tau or fixed:<C>")
    return ap


def _emit(summary: dict, fmt: str):
    summary = _clean(summary)
    if fmt == "json":
        print(json.dumps(summary, indent=2, sort_keys=True))
        return
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["key", "value"])
    for k in sorted(summary):
        v = summary[k]
        if isinstance(v, (dict, list)):
            v = json.dumps(v, sort_keys=True)
        w.writerow([k, v])


def _summary(result) -> dict:
    if isinstance(result, SweepResult):
        return {"rows": [dict(zip(SWEEP_COLUMNS, r.values())) for r in result.rows],
                "fit": result.fit.as_dict() if result.fit else None}
    if isinstance(result, dict):
        return result["report"]
    return result.report


def _cmd_run(args, sweep: bool):
    cfg = config_mod.load(args.config)
    if args.probes is not None:
        cfg = replace(cfg, probes=args.probes)
    is_sweep = cfg.scenario in config_mod.SWEEP_SCENARIOS
    if is_sweep != sweep:
        want = "sweep" if is_sweep else "run"
        raise ConfigError(f"scenario {cfg.scenario} is run with the '{want}' command")
    out = args.out or cfg.output_dir
    result = run_scenario(cfg, out, threads=max(1, args.threads))
    _emit(_summary(result), args.format)


def _cmd_fit(args):
    fit = fit_exponential(read_points_csv(args.points), config_mod.parse_c_mode(args.c_mode))
    _emit(fit.as_dict(), args.format)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "fit":
            _cmd_fit(args)
        else:
            _cmd_run(args, sweep=args.command == "sweep")
    except SlowEchoError as exc:
        log.error("%s", exc)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
