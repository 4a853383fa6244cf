"""``meterlink`` command line for airtime and planning tables plus simulation reports.

Exit codes: 0 ok, 2 usage error, 3 scenario validation error, 4 runtime error.
Logging goes to stderr; stdout carries only results.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from pathlib import Path

from .airtime import RadioParams, time_on_air_us
from .net_server import read_log
from .planner import CapacityInputs, daily_data_table, node_capacity, to_csv, wait_time_table
from .regulation import wait_after
from .sim.presets import PRESETS, preset
from .sim.scenario import Scenario, ScenarioError, validate_dict
from .sim.stats import channel_histogram, node_stats_from_log, summarize

log = logging.getLogger("meterlink")

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_RUNTIME = 0, 2, 3, 4
OUTPUT_DIR_ENV = "METERLINK_OUTPUT_DIR"
LOG_NAME = "packets.jsonl"
STATS_NAME = "stats.json"
DUTY_CLASSES = (("1%", Fraction(1, 100)), ("0.1%", Fraction(1, 1000)), ("10%", Fraction(1, 10)))


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _fraction(text: str) -> Fraction:
    try:
        value = Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    return value


# -- toa ------------------------------------------------------------------
def cmd_toa(args) -> int:
    params = RadioParams(sf=args.sf, bw_hz=round(args.bw * 1000), cr_denominator=args.cr,
                         preamble_symbols=args.preamble, ldro=args.ldro)
    if not 0 <= args.payload <= 255:
        raise ValueError(f"payload must be 0..255 bytes, got {args.payload}")
    toa = time_on_air_us(params, args.payload)
    toa_s = Fraction(toa, 1_000_000)
    waits = ", ".join(f"wait@{label}: {float(wait_after(toa_s, d)):.2f} s" for label, d in DUTY_CLASSES)
    print(f"{toa / 1000:.3f} ms, {waits}")
    return EXIT_OK


# -- plan -----------------------------------------------------------------
def cmd_plan(args) -> int:
    if args.kind == "wait":
        out = to_csv(wait_time_table(args.duty, step=args.step))
    elif args.kind == "daily":
        out = to_csv(daily_data_table(args.duty, mode=args.mode))
    else:
        inputs = CapacityInputs(R=args.r, ER=args.er, channels=args.channels,
                                seconds_per_transaction=args.seconds_per_transaction)
        out = to_csv([{"channels": args.channels, "R": _num(args.r), "ER": _num(args.er),
                       "max_nodes": node_capacity(inputs)}])
    _write(out, args.out)
    return EXIT_OK


def _num(x: float):
    return int(x) if float(x).is_integer() else x


def _write(text: str, path) -> None:
    if path:
        Path(path).write_text(text)
        log.info("wrote %s", path)
    else:
        sys.stdout.write(text)


# -- validate / simulate --------------------------------------------------
def _load_scenario(path) -> Scenario:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError([("$", f"not valid JSON: {exc}")]) from None
    errors = validate_dict(data)
    if errors:
        raise ScenarioError(errors)
    return Scenario.from_dict(data)


def cmd_validate(args) -> int:
    _load_scenario(args.scenario)
    print(f"{args.scenario}: ok")
    return EXIT_OK


def _run_one(scenario: Scenario, out_dir: Path) -> tuple[str, str]:
    from .sim.engine import run

    result = run(scenario)
    out_dir.mkdir(parents=True, exist_ok=True)
    text = result.log_text
    (out_dir / LOG_NAME).write_text(text)
    (out_dir / STATS_NAME).write_text(json.dumps(result.stats.to_dict(), indent=1, sort_keys=True)
                                      + "\n")
    return str(out_dir / LOG_NAME), hashlib.sha256(text.encode()).hexdigest()


def _run_job(job):
    scenario_dict, out_dir = job
    return _run_one(Scenario.from_dict(scenario_dict), Path(out_dir))


def cmd_simulate(args) -> int:
    if args.seed is None and os.environ.get("CI"):
        raise UsageError("--seed is required when CI is set")
    if not args.preset and not args.scenarios:
        raise UsageError("give a scenario file or --preset")
    out_root = Path(args.out or os.environ.get(OUTPUT_DIR_ENV) or ".")
    scenarios = []
    if args.preset:
        scenarios.append(preset(args.preset, args.seed))
    for path in args.scenarios:
        sc = _load_scenario(path)
        if args.seed is not None:
            sc.seed = args.seed
        scenarios.append(sc)
    if len(scenarios) > 1 and not args.batch:
        raise UsageError("several scenarios need --batch")
    if len(scenarios) == 1:
        jobs = [(scenarios[0].to_dict(), str(out_root))]
    else:
        jobs = [(sc.to_dict(), str(out_root / f"{i:02d}-{sc.name}")) for i, sc in enumerate(scenarios)]
    if args.batch and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_run_job, jobs))
    else:
        results = [_run_job(j) for j in jobs]
    for path, digest in results:
        print(f"{path} sha256={digest}")
    return EXIT_OK


# -- report ---------------------------------------------------------------
REPORT_METRICS = ("per", "rssi", "snr", "ack", "channels")


def _csv(rows: list[dict], fields: list[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: "" if r.get(k) is None else r[k] for k in fields})
    return buf.getvalue()


def report(rows, metric: str) -> str:
    if metric == "channels":
        hist = channel_histogram(rows)
        total = sum(hist.values())
        ranked = sorted(hist.items(), key=lambda kv: (-kv[1], kv[0]))
        return _csv([{"rank": i + 1, "frequency_mhz": f"{f:.1f}", "received": n,
                      "share_pct": f"{100 * n / total:.2f}" if total else "0.00"}
                     for i, (f, n) in enumerate(ranked)],
                    ["rank", "frequency_mhz", "received", "share_pct"])
    stats = node_stats_from_log(rows)
    out = []
    for eui, st in sorted(stats.items()):
        row = {"dev_eui": eui}
        if metric == "per":
            row.update(sent=st.sent, received=st.received,
                       per_pct=None if st.per is None else f"{st.per:.2f}")
        elif metric == "ack":
            row.update(confirmed_sent=st.confirmed_sent, ack_delivered=st.ack_delivered,
                       ack_missed=st.ack_missed)
        else:
            s = summarize(st.rssi if metric == "rssi" else st.snr)
            row.update(s or {"n": 0})
        out.append(row)
    fields = {
        "per": ["dev_eui", "sent", "received", "per_pct"],
        "ack": ["dev_eui", "confirmed_sent", "ack_delivered", "ack_missed"],
    }.get(metric, ["dev_eui", "n", "min", "q1", "median", "mean", "q3", "max"])
    return _csv(out, fields)


def cmd_report(args) -> int:
    with open(args.log) as fh:
        rows = read_log(fh)
    if not rows:
        raise ValueError(f"{args.log} contains no packet records")
    _write(report(rows, args.metric), args.out)
    return EXIT_OK


# -- entry point ----------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="meterlink", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("toa", help="time on air and duty-cycle wait for one frame")
    t.add_argument("--sf", type=int, required=True, choices=range(7, 13), metavar="7..12")
    t.add_argument("--bw", type=float, default=125.0, help="bandwidth in kHz")
    t.add_argument("--cr", type=int, default=5, help="coding rate denominator 5..8")
    t.add_argument("--payload", type=int, required=True, help="PHY payload bytes")
    t.add_argument("--ldro", choices=("auto", "on", "off"), default="auto",
                   help="low data rate optimisation (auto: on when a symbol lasts 16 ms or more)")
    t.add_argument("--preamble", type=int, default=8, help="preamble symbols")
    t.set_defaults(func=cmd_toa)

    pl = sub.add_parser("plan", help="planning tables as CSV")
    pl.add_argument("kind", choices=("wait", "daily", "capacity"),
                    help="which table to print")
    pl.add_argument("--duty", type=_fraction, default=Fraction(1, 100),
                    help="duty cycle as a decimal or fraction, e.g. 0.01 or 1/100")
    pl.add_argument("--step", type=int, default=8, help="payload size step for the wait table")
    pl.add_argument("--mode", choices=("airtime", "bitrate"), default="airtime",
                    help="daily budget from exact airtime or from the nominal bit rate")
    pl.add_argument("--channels", type=int, default=1, help="capacity: gateway channels")
    pl.add_argument("--r", type=float, default=1, help="capacity: regular packets per node per day")
    pl.add_argument("--er", type=float, default=0,
                    help="capacity: edge responses per node per day, two transactions each")
    pl.add_argument("--seconds-per-transaction", type=float, default=2,
                    help="capacity: channel time per transaction")
    pl.add_argument("--out", help="write CSV here instead of stdout")
    pl.set_defaults(func=cmd_plan)

    s = sub.add_parser("simulate", help="run a scenario or preset")
    s.add_argument("scenarios", nargs="*", help="scenario JSON files")
    s.add_argument("--preset", choices=sorted(PRESETS))
    s.add_argument("--seed", type=int, help="override the scenario seed (required when CI is set)")
    s.add_argument("--out", help=f"output directory (default ${OUTPUT_DIR_ENV} or .)")
    s.add_argument("--batch", action="store_true", help="run several scenarios in parallel")
    s.add_argument("--workers", type=int, help="worker processes for --batch")
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("report", help="per-node tables from a packet log")
    r.add_argument("log", help="packets.jsonl written by simulate")
    r.add_argument("--metric", choices=REPORT_METRICS, default="per")
    r.add_argument("--out", help="write CSV here instead of stdout")
    r.set_defaults(func=cmd_report)

    v = sub.add_parser("validate", help="check a scenario file")
    v.add_argument("scenario")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"meterlink: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"meterlink: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ScenarioError as exc:
        for path, msg in exc.errors:
            print(f"invalid scenario: {path}: {msg}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ValueError, OSError) as exc:
        print(f"meterlink: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
