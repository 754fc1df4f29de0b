"""Operator entry point.

Subcommands: ``serve`` (run the HTTP service), ``simulate`` (run a scenario or
the table1 preset), ``detect`` (offline batch detection over a reports file or
a captured event log), ``report`` (export a region's aggregate from a log).

Exit codes: 0 success, 2 usage/config error, 3 environment error,
4 data corruption.
"""

from __future__ import annotations

import argparse
import json
import socket
import sys
from pathlib import Path

from .aggregate import UnknownRegion, aggregate_region
from .domain import (
    FloodsenseError,
    PeriodConfig,
    QuestionnaireSchema,
    RegionGrid,
    Report,
    UserProfile,
    default_schema,
    load_schema,
)
from .service import ConfigError, CrowdServer, ServiceConfig, ValidationFailed, serve
from .sim import (
    InvalidScenario,
    ScenarioConfig,
    run_scenario,
    table1_experiment,
    write_outputs,
)
from .store import (
    CorruptLog,
    KIND_REPORT_SUBMITTED,
    KIND_USER_REGISTERED,
    Ledger,
    read_events,
)
from .trust import detection_lines

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ENVIRONMENT = 3
EXIT_CORRUPT = 4


def _fail(code: int, message: str) -> int:
    print(f"floodsense: {message}", file=sys.stderr)
    return code


def _cmd_serve(args) -> int:
    try:
        config = ServiceConfig.from_file(args.config)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    # claim the port up front so a taken address fails fast and loudly
    try:
        probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        probe.bind((config.host, config.port))
        probe.close()
    except OSError as exc:
        return _fail(EXIT_ENVIRONMENT, f"cannot bind {config.addr}: {exc}")
    try:
        serve(config)
    except FloodsenseError as exc:
        return _fail(EXIT_ENVIRONMENT, str(exc))
    return EXIT_OK


def _cmd_simulate(args) -> int:
    seed = args.seed
    try:
        if args.preset == "table1":
            rows, result = table1_experiment(seed=0 if seed is None else seed)
            table1_rows = rows
        elif args.scenario is None:
            return _fail(EXIT_CONFIG, "either --scenario or --preset table1 is required")
        else:
            cfg = ScenarioConfig.from_file(args.scenario)
            if seed is not None:
                cfg.seed = seed
            result = run_scenario(cfg)
            table1_rows = None
    except (InvalidScenario, json.JSONDecodeError) as exc:
        return _fail(EXIT_CONFIG, f"invalid scenario: {exc}")
    except OSError as exc:
        return _fail(EXIT_ENVIRONMENT, str(exc))
    try:
        written = write_outputs(result, args.out, table1_rows)
    except OSError as exc:
        return _fail(EXIT_ENVIRONMENT, f"cannot write outputs: {exc}")
    for path in written:
        print(path)
    return EXIT_OK


def _is_event_log(path: Path) -> bool:
    try:
        with open(path, encoding="utf-8") as f:
            first = f.readline()
    except OSError:
        return False
    if not first.strip():
        return False
    try:
        head = json.loads(first)
    except json.JSONDecodeError:
        return False
    return isinstance(head, dict) and "format_version" in head


def _offline_server(schema: QuestionnaireSchema, grid: RegionGrid) -> CrowdServer:
    config = ServiceConfig(log_path="(in-memory)", grid=grid)
    server = CrowdServer(config, in_memory=True)
    server.schema = schema
    server.store.ledger.schema = schema
    return server


def _cmd_detect(args) -> int:
    input_path = Path(args.input)
    if not input_path.exists():
        return _fail(EXIT_ENVIRONMENT, f"input file not found: {input_path}")
    try:
        schema = load_schema(args.schema) if args.schema else default_schema()
        grid = RegionGrid.from_spec(args.grid) if args.grid else RegionGrid(
            -90.0, 90.0, -180.0, 180.0, 1, 1
        )
    except (FloodsenseError, ValueError, OSError) as exc:
        return _fail(EXIT_CONFIG, str(exc))

    try:
        if _is_event_log(input_path):
            # captured service log: replay registrations and accepted reports
            # with their recorded window assignments, then re-run detection
            events = list(read_events(input_path))
            if args.grid is None:
                # assignments are recorded, so only the region bound matters
                max_region = max(
                    (
                        int(e.body["region"])
                        for e in events
                        if e.kind == KIND_REPORT_SUBMITTED
                    ),
                    default=0,
                )
                grid = RegionGrid(-90.0, 90.0, -180.0, 180.0, 1, max_region + 1)
            server = _offline_server(schema, grid)
            for event in events:
                if event.kind in (KIND_USER_REGISTERED, KIND_REPORT_SUBMITTED):
                    try:
                        server.store.append(event.kind, event.body, ts=event.ts)
                    except FloodsenseError as exc:
                        return _fail(EXIT_CORRUPT, f"event seq {event.seq}: {exc}")
        else:
            server = _offline_server(schema, grid)
            with open(input_path, encoding="utf-8") as f:
                for line_no, line in enumerate(f, start=1):
                    if not line.strip():
                        continue
                    try:
                        report = Report.from_dict(json.loads(line))
                    except (json.JSONDecodeError, ValueError) as exc:
                        return _fail(EXIT_CORRUPT, f"line {line_no}: {exc}")
                    if report.user_id not in server.ledger.users:
                        server.register_user(
                            UserProfile(user_id=report.user_id, identity="offline-ingest")
                        )
                    try:
                        server.submit_report(report)
                    except ValidationFailed as exc:
                        return _fail(EXIT_CORRUPT, f"line {line_no}: {exc}")
                    except FloodsenseError as exc:
                        return _fail(EXIT_CORRUPT, f"line {line_no}: {exc}")
    except CorruptLog as exc:
        return _fail(EXIT_CORRUPT, str(exc))

    lines: list[str] = []
    try:
        for region, period in server.ledger.pending_windows():
            summary = server.detect(region, period, force=True)
            lines.extend(detection_lines(summary))
    except UnknownRegion as exc:
        return _fail(EXIT_CONFIG, f"--grid does not cover the input: {exc}")
    try:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    except OSError as exc:
        return _fail(EXIT_ENVIRONMENT, f"cannot write output: {exc}")
    return EXIT_OK


def _cmd_report(args) -> int:
    log_path = Path(args.log)
    if not log_path.exists():
        return _fail(EXIT_ENVIRONMENT, f"log file not found: {log_path}")
    try:
        events = list(read_events(log_path))
    except CorruptLog as exc:
        return _fail(EXIT_CORRUPT, str(exc))
    # the log does not carry the deployment grid; size one wide enough to
    # cover every region the events mention
    max_region = 0
    for event in events:
        if event.kind == KIND_REPORT_SUBMITTED:
            max_region = max(max_region, int(event.body["region"]))
    grid = RegionGrid(-90.0, 90.0, -180.0, 180.0, 1, max_region + 1)
    ledger = Ledger(default_schema(), grid, PeriodConfig())
    for event in events:
        ledger.apply(event)
    try:
        report = aggregate_region(ledger, args.region)
    except UnknownRegion as exc:
        return _fail(EXIT_CONFIG, str(exc))
    try:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(report.to_json_text() + "\n", encoding="utf-8")
    except OSError as exc:
        return _fail(EXIT_ENVIRONMENT, f"cannot write output: {exc}")
    print(out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="floodsense",
        description="Trustable crowd-reporting backend for flooded areas.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_serve = sub.add_parser("serve", help="run the ingestion/query service")
    p_serve.add_argument("--config", required=True, help="path to the JSON config file")
    p_serve.set_defaults(fn=_cmd_serve)

    p_sim = sub.add_parser("simulate", help="run a seeded population scenario")
    p_sim.add_argument("--scenario", help="scenario JSON file")
    p_sim.add_argument("--seed", type=int, help="override the scenario seed")
    p_sim.add_argument("--out", required=True, help="output directory")
    p_sim.add_argument("--preset", choices=["table1"], help="run a canned experiment")
    p_sim.set_defaults(fn=_cmd_simulate)

    p_detect = sub.add_parser("detect", help="offline batch detection")
    p_detect.add_argument(
        "--input", required=True, help="reports JSONL file or captured event log"
    )
    p_detect.add_argument("--schema", help="questionnaire schema JSON (default: built-in)")
    p_detect.add_argument(
        "--grid", help='region grid "latmin,latmax,lonmin,lonmax,rows,cols"'
    )
    p_detect.add_argument("--out", required=True, help="assessments output file (JSONL)")
    p_detect.set_defaults(fn=_cmd_detect)

    p_report = sub.add_parser("report", help="export a region aggregate from a log")
    p_report.add_argument("--log", required=True, help="event log path")
    p_report.add_argument("--region", required=True, type=int, help="region index")
    p_report.add_argument("--out", required=True, help="aggregate JSON output path")
    p_report.set_defaults(fn=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
