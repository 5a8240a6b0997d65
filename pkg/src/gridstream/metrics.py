"""Run metrics, aggregated purely from the event log so every number is recomputable."""

import math
from dataclasses import dataclass, field

from .messages import shortest_angle
from .scenario import Scenario

M2P_STEP_THRESHOLD_DEG = 5.0
M2P_MATCH_TOLERANCE_DEG = 0.25


@dataclass
class ReceiverReport:
    ingests: int = 0
    bytes: int = 0
    duplicates: int = 0
    duplicate_ratio: float = 0.0
    repaired: int = 0
    overdue_dropped: int = 0
    acks: int = 0


@dataclass
class MetricsReport:
    frames_captured: int = 0
    frames_eligible: int = 0
    frames_delivered: int = 0
    delivery_ratio: float | None = None
    frames_skipped: int = 0
    freezes: int = 0
    late_packets: int = 0
    checksum_failures: int = 0
    delivered_checksum_matches: int = 0
    latency_mean_ms: float | None = None
    latency_p95_ms: float | None = None
    packets_tx: int = 0
    packets_tx_dropped: int = 0
    fec_repaired_total: int = 0
    handovers: int = 0
    handover_times_ms: list = field(default_factory=list)
    receivers: dict = field(default_factory=dict)  # id -> ReceiverReport
    motion_to_photon: list = field(default_factory=list)
    bitrate_series: list = field(default_factory=list)  # [t_ms, bps]
    goodput_series: list = field(default_factory=list)  # [t_ms, bps]

    def to_dict(self) -> dict:
        out = {
            k: v
            for k, v in self.__dict__.items()
            if k not in ("receivers", "handover_times_ms", "bitrate_series", "goodput_series")
        }
        out["handover_times_ms"] = list(self.handover_times_ms)
        out["receivers"] = {
            str(rid): vars(rep) for rid, rep in sorted(self.receivers.items())
        }
        out["bitrate_series"] = [list(p) for p in self.bitrate_series]
        out["goodput_series"] = [list(p) for p in self.goodput_series]
        return out


def percentile(values: list[float], q: float) -> float | None:
    """Nearest-rank percentile; deterministic and oracle-friendly."""
    if not values:
        return None
    ordered = sorted(values)
    rank = max(1, math.ceil(q * len(ordered)))
    return ordered[rank - 1]


class MetricsAggregator:
    """Streaming consumer of event records; call as a sink, then finalize()."""

    def __init__(self, scenario: Scenario) -> None:
        self.scenario = scenario
        self._budget_us = round(scenario.playout.budget_ms * 1000)
        self._duration_us = scenario.duration_us
        self._captures: dict[int, tuple[int, int]] = {}  # seq -> (t_us, checksum)
        self._latencies: list[float] = []
        self._head_events: list[tuple[int, float]] = []
        self._render_events: list[tuple[int, float | None]] = []
        self.report = MetricsReport()

    def __call__(self, record: dict) -> None:
        kind = record["kind"]
        entity = record["entity"]
        rep = self.report
        if kind == "frame_capture":
            rep.frames_captured += 1
            self._captures[record["frame"]] = (record["t_us"], record["checksum"])
        elif kind == "frame_delivered":
            rep.frames_delivered += 1
            self._latencies.append(record["latency_ms"])
            if record["checksum"] == record["source_checksum"]:
                rep.delivered_checksum_matches += 1
        elif kind == "frame_skipped":
            rep.frames_skipped += 1
        elif kind == "freeze":
            rep.freezes += 1
        elif kind == "late_packet":
            rep.late_packets += 1
        elif kind == "frame_complete":
            if not record["checksum_ok"]:
                rep.checksum_failures += 1
        elif kind == "packet_tx":
            rep.packets_tx += 1
        elif kind == "packet_tx_drop":
            rep.packets_tx_dropped += 1
        elif kind == "rate_update":
            rep.bitrate_series.append((record["t_us"] / 1000.0, record["bitrate_bps"]))
        elif kind == "ack_apply":
            rep.goodput_series.append((record["t_us"] / 1000.0, record["ewma_bps"]))
        elif kind == "gate_change":
            if not record.get("initial", False):
                rep.handovers += 1
                rep.handover_times_ms.append(record["t_us"] / 1000.0)
        elif kind == "ingest":
            r = self._receiver(record["rx"])
            r.ingests += 1
            r.bytes += record["bytes"]
            if record["dup"]:
                r.duplicates += 1
        elif kind == "fec_decode":
            r = self._receiver(_rx_id(entity))
            r.repaired += record["repaired"]
            rep.fec_repaired_total += record["repaired"]
        elif kind == "overdue_drop":
            self._receiver(_rx_id(entity)).overdue_dropped += 1
        elif kind == "ack_emit":
            self._receiver(_rx_id(entity)).acks += 1
        elif kind == "head":
            self._head_events.append((record["t_us"], record["yaw_deg"]))
        elif kind == "render":
            self._render_events.append((record["t_us"], record["view_yaw_deg"]))

    def _receiver(self, rid: int) -> ReceiverReport:
        rep = self.report.receivers.get(rid)
        if rep is None:
            rep = ReceiverReport()
            self.report.receivers[rid] = rep
        return rep

    def finalize(self) -> MetricsReport:
        rep = self.report
        # Strict inequality: a deadline landing exactly on the run boundary has
        # no render tick left to serve it.
        rep.frames_eligible = sum(
            1 for t_us, _ in self._captures.values() if t_us + self._budget_us < self._duration_us
        )
        rep.delivery_ratio = (
            rep.frames_delivered / rep.frames_eligible if rep.frames_eligible else None
        )
        if self._latencies:
            rep.latency_mean_ms = sum(self._latencies) / len(self._latencies)
            rep.latency_p95_ms = percentile(self._latencies, 0.95)
        for r in rep.receivers.values():
            r.duplicate_ratio = r.duplicates / r.ingests if r.ingests else 0.0
        rep.motion_to_photon = self._motion_to_photon()
        return rep

    def _motion_to_photon(self) -> list[dict]:
        """Per head step: delay until the rendered view direction first matches."""
        steps = []
        for (t0, y0), (t1, y1) in zip(self._head_events, self._head_events[1:]):
            delta = shortest_angle(y1 - y0)
            if abs(delta) >= M2P_STEP_THRESHOLD_DEG:
                steps.append((t1, y1, delta))
        out = []
        for t_step, target, delta in steps:
            latency_ms = None
            for t_render, view_yaw in self._render_events:
                if t_render < t_step or view_yaw is None:
                    continue
                if abs(shortest_angle(view_yaw - target)) <= M2P_MATCH_TOLERANCE_DEG:
                    latency_ms = (t_render - t_step) / 1000.0
                    break
            out.append(
                {"t_ms": t_step / 1000.0, "delta_deg": delta, "latency_ms": latency_ms}
            )
        return out


def _rx_id(entity: str) -> int:
    return int(entity[2:])
