"""Command-line entry point: batch runs, the live console backend, and report rendering."""

import argparse
import json
import sys
import traceback
from pathlib import Path

import yaml

from .headtrace import HeadTrace, TraceError
from .metrics import MetricsAggregator, MetricsReport
from .scenario import Scenario, ScenarioError, load_scenario, scenario_to_dict
from .simulation import Simulation

EVENTS_FILE = "events.ndjson"
SNAPSHOTS_FILE = "snapshots.ndjson"
REPORT_FILE = "report.json"
SCENARIO_FILE = "scenario.yaml"


def run_batch(scenario: Scenario, trace: HeadTrace | None, out_dir: str | Path) -> MetricsReport:
    """Run the full scenario and write events, snapshots, and the metrics report."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    aggregator = MetricsAggregator(scenario)

    with (out / EVENTS_FILE).open("w") as events_f, (out / SNAPSHOTS_FILE).open("w") as snaps_f:

        def sink(record: dict) -> None:
            if record["kind"] == "snapshot":
                snaps_f.write(json.dumps(record["snapshot"]) + "\n")
                return
            events_f.write(json.dumps(record) + "\n")
            aggregator(record)

        sim = Simulation(scenario, trace=trace, sinks=[sink])
        sim.run()

    report = aggregator.finalize()
    (out / REPORT_FILE).write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    (out / SCENARIO_FILE).write_text(
        yaml.safe_dump(scenario_to_dict(scenario), sort_keys=True)
    )
    return report


def _cmd_run(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario.seed = args.seed
    trace = None
    if args.trace is not None:
        trace = HeadTrace.load(args.trace, scenario.control.tracking_half_m)
    report = run_batch(scenario, trace, args.out)
    print(f"run complete: {report.frames_captured} frames captured, "
          f"{report.frames_delivered} delivered "
          f"(ratio {_fmt_ratio(report.delivery_ratio)}), "
          f"outputs in {args.out}")
    return 0


def _cmd_serve(args) -> int:
    from .live import LiveServer

    scenario = load_scenario(args.scenario)
    server = LiveServer(scenario, host=args.host, port=args.port)
    print(f"live console backend listening on {args.host}:{server.port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        print("shutting down")
    finally:
        server.stop()
    return 0


def _cmd_report(args) -> int:
    from .report import render_report

    render_report(Path(args.out))
    return 0


def _fmt_ratio(value) -> str:
    return "n/a" if value is None else f"{value:.4f}"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridstream",
        description="Packet-level simulator of drone video streaming over a Wi-Fi receiver grid",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a batch simulation")
    run_p.add_argument("--scenario", required=True, help="scenario YAML file")
    run_p.add_argument("--trace", default=None, help="head-motion trace CSV (default: stationary)")
    run_p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    run_p.add_argument("--out", required=True, help="output directory")
    run_p.set_defaults(func=_cmd_run)

    serve_p = sub.add_parser("serve", help="serve the live operator console backend")
    serve_p.add_argument("--scenario", required=True, help="scenario YAML file")
    serve_p.add_argument("--port", type=int, required=True, help="TCP port (0 = ephemeral)")
    serve_p.add_argument("--host", default="127.0.0.1")
    serve_p.set_defaults(func=_cmd_serve)

    report_p = sub.add_parser("report", help="summarize a completed run and render figures")
    report_p.add_argument("--out", required=True, help="directory of a completed run")
    report_p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, TraceError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        print("internal error:", file=sys.stderr)
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
