"""Command-line front end: replay scenarios, score a corpus, decode sentences.

Exit codes: 0 success (eval: all cases passed), 1 failures present,
2 usage or configuration error, 3 unreadable input or schema error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import nmea
from .core import (ContractViolation, ConfigError, DEFAULT_CONFIG, ValidationError,
                   load_config_file)
from .harness import (SchemaError, UnsortedEvents, evaluate_scenarios, load_scenario,
                      log_to_jsonl, render_report, report_json, run)

EXIT_OK = 0
EXIT_FAILURES = 1
EXIT_USAGE = 2
EXIT_IO = 3


def _load_base_config(path: str | None):
    if path is None:
        return DEFAULT_CONFIG
    return load_config_file(path)


def cmd_simulate(args: argparse.Namespace) -> int:
    try:
        base = _load_base_config(args.config)
    except FileNotFoundError:
        print(f"error: config file not found: {args.config}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ValidationError) as exc:
        print(f"error: bad config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        scenario = load_scenario(args.scenario)
    except FileNotFoundError:
        print(f"error: scenario file not found: {args.scenario}", file=sys.stderr)
        return EXIT_IO
    except (SchemaError, UnsortedEvents) as exc:
        print(f"error: {args.scenario}: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        log = run(scenario, base)
    except ValidationError as exc:
        print(f"error: bad config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ContractViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    text = log_to_jsonl(log)
    if args.out is None:
        sys.stdout.write(text)
    else:
        try:
            Path(args.out).write_text(text, encoding="utf-8")
        except OSError as exc:
            print(f"error: cannot write {args.out}: {exc}", file=sys.stderr)
            return EXIT_IO
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    try:
        base = _load_base_config(args.config)
    except FileNotFoundError:
        print(f"error: config file not found: {args.config}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ValidationError) as exc:
        print(f"error: bad config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    directory = Path(args.scenario_dir)
    if not directory.is_dir():
        print(f"error: not a directory: {directory}", file=sys.stderr)
        return EXIT_IO
    paths = sorted(directory.glob("*.jsonl"))
    if not paths:
        print(f"error: no scenario files in {directory}", file=sys.stderr)
        return EXIT_USAGE
    scenarios = []
    for path in paths:
        try:
            scenarios.append(load_scenario(path))
        except (SchemaError, UnsortedEvents) as exc:
            print(f"error: {path}: {exc}", file=sys.stderr)
            return EXIT_IO
    try:
        results = evaluate_scenarios(scenarios, base)
    except ValidationError as exc:
        print(f"error: bad config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ContractViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    text = render_report(results)
    sys.stdout.write(text)
    if args.report is not None:
        report_path = Path(args.report)
        try:
            report_path.write_text(text, encoding="utf-8")
            import json as _json
            report_path.with_suffix(".json").write_text(
                _json.dumps(report_json(results), indent=2) + "\n", encoding="utf-8")
        except OSError as exc:
            print(f"error: cannot write {args.report}: {exc}", file=sys.stderr)
            return EXIT_IO
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILURES


def _print_parsed(line: str) -> bool:
    try:
        rmc = nmea.parse_rmc(line)
    except nmea.ParseError as exc:
        print(f"REJECTED {type(exc).__name__}: {exc}")
        return False
    fix = nmea.to_gps_fix(rmc)
    print(f"OK lat={rmc.point.lat_deg:.6f} lon={rmc.point.lon_deg:.6f} "
          f"speed_kph={fix.speed_kph:.4f} status={rmc.status} "
          f"utc={rmc.utc_time} date={rmc.date} course={rmc.course_deg:.1f}")
    return True


def cmd_nmea(args: argparse.Namespace) -> int:
    if args.line is not None:
        return EXIT_OK if _print_parsed(args.line) else EXIT_FAILURES
    try:
        text = Path(args.file).read_text(encoding="utf-8", errors="replace")
    except OSError as exc:
        print(f"error: cannot read {args.file}: {exc}", file=sys.stderr)
        return EXIT_IO
    ok = True
    for raw in text.splitlines():
        if not raw.strip():
            continue
        ok = _print_parsed(raw) and ok
    return EXIT_OK if ok else EXIT_FAILURES


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="motoguard",
        description="Replay recorded rides against the safety controller.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="replay one scenario, emit the event log")
    p_sim.add_argument("--scenario", required=True, help="scenario .jsonl file")
    p_sim.add_argument("--config", help="key=value config file")
    p_sim.add_argument("--out", help="write the log here instead of stdout")
    p_sim.set_defaults(func=cmd_simulate)

    p_eval = sub.add_parser("eval", help="run a scenario corpus and score it")
    p_eval.add_argument("--scenario-dir", required=True, help="directory of .jsonl scenarios")
    p_eval.add_argument("--config", help="key=value config file")
    p_eval.add_argument("--report", help="also write the text report (and .json twin) here")
    p_eval.set_defaults(func=cmd_eval)

    p_nmea = sub.add_parser("nmea", help="parse RMC sentences")
    src = p_nmea.add_mutually_exclusive_group(required=True)
    src.add_argument("--line", help="one sentence")
    src.add_argument("--file", help="file of sentences, one per line")
    p_nmea.set_defaults(func=cmd_nmea)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


def entry() -> None:
    raise SystemExit(main())
