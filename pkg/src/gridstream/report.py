"""Post-run reporting: summary table, per-series CSV files, and matplotlib figures."""

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .cli import EVENTS_FILE, REPORT_FILE, SCENARIO_FILE
from .metrics import MetricsAggregator, MetricsReport
from .scenario import load_scenario


class ReportError(ValueError):
    """Run artifacts are missing or corrupt."""


def recompute_from_events(out_dir: Path):
    """Replay the event log through the aggregator; also collect plot series."""
    scenario_path = out_dir / SCENARIO_FILE
    events_path = out_dir / EVENTS_FILE
    if not scenario_path.exists():
        raise ReportError(f"missing run artifact: {scenario_path}")
    if not events_path.exists():
        raise ReportError(f"missing run artifact: {events_path}")
    scenario = load_scenario(scenario_path)
    aggregator = MetricsAggregator(scenario)
    latency_series: list[tuple[float, float]] = []
    path_points: list[tuple[float, float]] = []
    with events_path.open() as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ReportError(f"corrupt event log {events_path} at line {lineno}: {exc}")
            aggregator(record)
            if record["kind"] == "frame_delivered":
                latency_series.append((record["t_us"] / 1000.0, record["latency_ms"]))
            elif record["kind"] == "frame_capture":
                path_points.append((record["x"], record["y"]))
    return scenario, aggregator.finalize(), latency_series, path_points


def load_stored_report(out_dir: Path) -> dict:
    path = out_dir / REPORT_FILE
    if not path.exists():
        raise ReportError(f"missing run artifact: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ReportError(f"corrupt report {path}: {exc}")


def write_series(out_dir: Path, report: MetricsReport, latency_series) -> list[Path]:
    series_dir = out_dir / "series"
    series_dir.mkdir(exist_ok=True)
    written = []

    def dump(name: str, header: list[str], rows) -> None:
        path = series_dir / name
        with path.open("w", newline="") as f:
            w = csv.writer(f)
            w.writerow(header)
            w.writerows(rows)
        written.append(path)

    dump("bitrate.csv", ["t_ms", "bitrate_bps"], report.bitrate_series)
    dump("goodput.csv", ["t_ms", "ewma_goodput_bps"], report.goodput_series)
    dump("latency.csv", ["t_ms", "latency_ms"], latency_series)
    dump(
        "handovers.csv",
        ["t_ms"],
        [[t] for t in report.handover_times_ms],
    )
    dump(
        "motion_to_photon.csv",
        ["t_ms", "delta_deg", "latency_ms"],
        [[m["t_ms"], m["delta_deg"], m["latency_ms"]] for m in report.motion_to_photon],
    )
    return written


def write_figures(out_dir: Path, scenario, report: MetricsReport, latency_series, path_points):
    fig_dir = out_dir / "figures"
    fig_dir.mkdir(exist_ok=True)
    written = []

    fig, ax = plt.subplots(figsize=(8, 4))
    if report.bitrate_series:
        t, v = zip(*report.bitrate_series)
        ax.step([x / 1000.0 for x in t], [x / 1e6 for x in v], where="post",
                label="commanded bitrate")
    if report.goodput_series:
        t, v = zip(*report.goodput_series)
        ax.step([x / 1000.0 for x in t], [x / 1e6 for x in v], where="post",
                label="EWMA goodput", alpha=0.8)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("Mbit/s")
    ax.set_title("Rate control")
    ax.legend(loc="best")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    path = fig_dir / "bitrate_goodput.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(8, 4))
    if latency_series:
        t, v = zip(*latency_series)
        ax.plot([x / 1000.0 for x in t], v, ".", markersize=2, label="frame latency")
        if report.latency_p95_ms is not None:
            ax.axhline(report.latency_p95_ms, color="tab:red", linestyle="--",
                       label=f"p95 = {report.latency_p95_ms:.1f} ms")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("capture-to-render latency (ms)")
    ax.set_title("Frame latency")
    ax.legend(loc="best")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    path = fig_dir / "latency.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(6, 6))
    positions = scenario.receiver_positions()
    rx = [p[0] for p in positions.values()]
    ry = [p[1] for p in positions.values()]
    ax.scatter(rx, ry, marker="s", s=60, color="tab:blue", label="receivers")
    for rid, (x, y) in positions.items():
        ax.annotate(str(rid), (x, y), textcoords="offset points", xytext=(4, 4), fontsize=8)
    if path_points:
        px, py = zip(*path_points)
        ax.plot(px, py, "-", color="tab:orange", linewidth=1.2, label="drone path")
        ax.plot(px[0], py[0], "o", color="tab:green", label="start")
        ax.plot(px[-1], py[-1], "x", color="tab:red", label="end")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_title(f"Flight over the receiver grid ({report.handovers} handovers)")
    ax.axis("equal")
    ax.legend(loc="best")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    path = fig_dir / "map.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)
    return written


def summary_lines(report: MetricsReport) -> list[str]:
    rows = [
        ("frames captured", report.frames_captured),
        ("frames eligible", report.frames_eligible),
        ("frames delivered", report.frames_delivered),
        ("frame delivery ratio", _fmt(report.delivery_ratio)),
        ("frames skipped", report.frames_skipped),
        ("freezes", report.freezes),
        ("late packets", report.late_packets),
        ("checksum failures", report.checksum_failures),
        ("latency mean (ms)", _fmt(report.latency_mean_ms)),
        ("latency p95 (ms)", _fmt(report.latency_p95_ms)),
        ("packets transmitted", report.packets_tx),
        ("packets dropped at sender", report.packets_tx_dropped),
        ("FEC packets repaired", report.fec_repaired_total),
        ("handover events", report.handovers),
    ]
    width = max(len(name) for name, _ in rows)
    lines = [f"{name:<{width}}  {value}" for name, value in rows]
    lines.append("")
    lines.append(f"{'receiver':>8}  {'ingests':>8}  {'bytes':>12}  {'dup ratio':>9}  "
                 f"{'repaired':>8}  {'overdue':>7}  {'acks':>5}")
    for rid, r in sorted(report.receivers.items()):
        lines.append(
            f"{rid:>8}  {r.ingests:>8}  {r.bytes:>12}  {r.duplicate_ratio:>9.4f}  "
            f"{r.repaired:>8}  {r.overdue_dropped:>7}  {r.acks:>5}"
        )
    return lines


def _fmt(value) -> str:
    return "n/a" if value is None else f"{value:.4f}"


def render_report(out_dir: Path) -> MetricsReport:
    """Recompute metrics from the event log, check them against the stored report,
    print the summary table, and emit series CSVs plus figures."""
    scenario, recomputed, latency_series, path_points = recompute_from_events(out_dir)
    stored = load_stored_report(out_dir)
    recomputed_dict = json.loads(json.dumps(recomputed.to_dict()))
    if recomputed_dict != stored:
        raise ReportError(
            f"stored {REPORT_FILE} disagrees with metrics recomputed from {EVENTS_FILE}"
        )
    for line in summary_lines(recomputed):
        print(line)
    series = write_series(out_dir, recomputed, latency_series)
    figures = write_figures(out_dir, scenario, recomputed, latency_series, path_points)
    print()
    for path in series + figures:
        print(f"wrote {path}")
    return recomputed
