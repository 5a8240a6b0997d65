"""World assembly: builds every entity from a scenario and drives batch runs.

All side effects funnel through the event sink as plain dicts, so the event
log is the single source of truth for metrics, and two runs with the same
(scenario, trace, seed) produce byte-identical output streams.
"""

from typing import Callable

from .drone import Drone, FlightLimits, RateConfig
from .engine import US_PER_S, EventLoop, RngStreams, ms_to_us
from .grid import ReceiverNode
from .headtrace import HeadTrace
from .messages import HeadSample
from .radio import Radio, RadioModel, Uplink, UplinkModel
from .scenario import Scenario
from .server import StreamingServer, ViewGeometry

EventSink = Callable[[dict], None]


class Simulation:
    """One simulated world: drone, receiver grid, server, and their channels."""

    def __init__(
        self,
        scenario: Scenario,
        trace: HeadTrace | None = None,
        sinks: list[EventSink] | None = None,
        gate_audit=None,
    ) -> None:
        self.scenario = scenario
        self.trace = trace
        self._sinks: list[EventSink] = list(sinks or [])
        self.engine = EventLoop()
        self.rng = RngStreams(scenario.seed)
        self.duration_us = scenario.duration_us

        positions = scenario.receiver_positions()
        listeners = {rid: set(scenario.radio.channels) for rid in positions}
        self.radio = Radio(
            engine=self.engine,
            model=RadioModel(
                p_base=scenario.radio.p_base,
                r_reliable=scenario.radio.r_reliable_m,
                d_max=scenario.radio.d_max_m,
                channel_capacity=scenario.radio.channel_capacity_bps,
                channels=list(scenario.radio.channels),
            ),
            rng=self.rng,
            receiver_positions=positions,
            listeners=listeners,
            downlink_latency_us=ms_to_us(scenario.radio.downlink_latency_ms),
            tx_queue_limit_us=ms_to_us(scenario.radio.tx_queue_limit_ms),
        )
        self.uplink = Uplink(
            self.engine,
            UplinkModel(latency_ms=scenario.uplink.latency_ms, loss=scenario.uplink.loss),
            self.rng,
        )

        self.drone = Drone(
            engine=self.engine,
            radio=self.radio,
            home=scenario.home_position(),
            fps=scenario.video.fps,
            mtu=scenario.video.mtu_bytes,
            k=scenario.fec.k,
            r=scenario.fec.r,
            rate_cfg=RateConfig(
                bitrate_min=scenario.video.bitrate_min_bps,
                bitrate_max=scenario.video.bitrate_max_bps,
                bitrate_initial=scenario.video.bitrate_initial_bps,
                beta=scenario.video.beta,
                alpha=scenario.video.alpha,
                ack_timeout_us=ms_to_us(scenario.video.ack_timeout_ms),
            ),
            limits=FlightLimits(
                max_speed=scenario.flight.max_speed_mps,
                max_yaw_rate=scenario.flight.max_yaw_rate_dps,
                max_gimbal_rate=scenario.flight.max_gimbal_rate_dps,
            ),
            control_rate_hz=scenario.control.rate_hz,
            duration_us=self.duration_us,
            emit=self.emit,
        )

        self.receivers: dict[int, ReceiverNode] = {
            rid: ReceiverNode(
                node_id=rid,
                position=pos,
                all_positions=positions,
                engine=self.engine,
                radio=self.radio,
                uplink=self.uplink,
                mtu=scenario.video.mtu_bytes,
                overdue_budget_us=scenario.overdue_budget_us,
                control_rate_hz=scenario.control.rate_hz,
                emit=self.emit,
                drone_pos_fn=lambda: self.drone.pose.position,
                gate_audit=gate_audit,
            )
            for rid, pos in positions.items()
        }

        self.server = StreamingServer(
            engine=self.engine,
            uplink=self.uplink,
            receiver_positions=positions,
            home=scenario.home_position(),
            mtu=scenario.video.mtu_bytes,
            fps=scenario.video.fps,
            playout_budget_us=ms_to_us(scenario.playout.budget_ms),
            geom=ViewGeometry(
                captured_fov_h=scenario.view.captured_fov_h_deg,
                captured_fov_v=scenario.view.captured_fov_v_deg,
                display_fov_h=scenario.view.display_fov_h_deg,
                display_fov_v=scenario.view.display_fov_v_deg,
            ),
            position_gain=scenario.control.position_gain,
            duration_us=self.duration_us,
            emit=self.emit,
        )

        self._head_tick = 0
        self._snapshot_tick = 0
        self.engine.register("world", self._handle_world)
        self._started = False

    # -- event plumbing ------------------------------------------------------

    def add_sink(self, sink: EventSink) -> None:
        self._sinks.append(sink)

    def emit(self, entity: str, kind: str, **fields) -> None:
        if not self._sinks:
            return
        record = {"t_us": self.engine.now, "entity": entity, "kind": kind}
        record.update(fields)
        for sink in self._sinks:
            sink(record)

    # -- lifecycle -------------------------------------------------------------

    def start(self) -> None:
        """Schedule the initial ticks.  Order matters for same-instant ties:
        frame capture, then head sampling, then render, then snapshot."""
        if self._started:
            return
        self._started = True
        self.drone.start()
        if self.trace is not None:
            self.engine.schedule(0, "world", "head_tick")
        self.server.start()
        self.engine.schedule(0, "world", "snapshot_tick")

    def run(self) -> None:
        self.start()
        self.engine.run_until(self.duration_us)

    def advance_to(self, t_us: int) -> None:
        self.start()
        self.engine.run_until(min(t_us, self.duration_us))

    # -- world ticks --------------------------------------------------------------

    def _handle_world(self, ev) -> None:
        if ev.kind == "head_tick":
            self._on_head_tick(self.engine.now)
        elif ev.kind == "snapshot_tick":
            self._on_snapshot_tick(self.engine.now)
        else:
            raise ValueError(f"world got unknown event {ev.kind!r}")

    def _on_head_tick(self, now: int) -> None:
        sample = self.trace.sample(now)
        self.server.on_head(sample, now)
        self._head_tick += 1
        next_t = self._head_tick * US_PER_S // self.scenario.control.head_rate_hz
        if next_t < self.duration_us:
            self.engine.schedule(next_t, "world", "head_tick")

    def _on_snapshot_tick(self, now: int) -> None:
        snap = self.snapshot(now)
        self.emit("world", "snapshot", snapshot=snap)
        self._snapshot_tick += 1
        next_t = self._snapshot_tick * US_PER_S // self.scenario.control.snapshot_hz
        if next_t < self.duration_us:
            self.engine.schedule(next_t, "world", "snapshot_tick")

    def inject_head(self, sample: HeadSample) -> None:
        """Live-mode steering input; applied at the current simulation instant."""
        half = self.scenario.control.tracking_half_m
        clamped = HeadSample(
            t=self.engine.now,
            yaw=sample.yaw,
            pitch=sample.pitch,
            pos=(
                min(max(sample.pos[0], -half), half),
                min(max(sample.pos[1], -half), half),
            ),
        )
        self.server.on_head(clamped, self.engine.now)

    # -- snapshot ----------------------------------------------------------------

    def snapshot(self, now: int | None = None) -> dict:
        """Immutable world snapshot following the documented wire schema."""
        now = self.engine.now if now is None else now
        drone = self.drone
        server = self.server
        sp = drone.setpoint
        window = server.window
        shown = server.displayed
        geom = server.geom
        return {
            "type": "snapshot",
            "t_us": now,
            "drone": {
                "x": drone.pose.position[0],
                "y": drone.pose.position[1],
                "z": drone.pose.position[2],
                "yaw_deg": drone.pose.yaw,
                "gimbal_pitch_deg": drone.pose.gimbal_pitch,
                "bitrate_bps": drone.rate.bitrate,
                "ewma_goodput_bps": drone.rate.ewma_goodput,
            },
            "setpoint": None
            if sp is None
            else {
                "yaw_deg": sp.target_yaw,
                "gimbal_pitch_deg": sp.target_gimbal_pitch,
                "x": sp.target_position[0],
                "y": sp.target_position[1],
                "z": sp.target_position[2],
                "issued_at_us": sp.issued_at,
            },
            "head": {
                "yaw_deg": server.head.yaw,
                "pitch_deg": server.head.pitch,
                "x_m": server.head.pos[0],
                "y_m": server.head.pos[1],
            },
            "gate": list(server.gate_set),
            "rank1": server.rank1,
            "receivers": [
                {
                    "id": rid,
                    "received_packets": node.stats.received_packets,
                    "uploaded_bytes": node.stats.uploaded_bytes,
                    "repaired_packets": node.stats.repaired_packets,
                    "overdue_dropped": node.stats.overdue_dropped,
                    "acks_sent": node.stats.acks_sent,
                }
                for rid, node in sorted(self.receivers.items())
            ],
            "playout": {
                "delivered": server.stats.delivered,
                "skipped": server.stats.skipped,
                "freezes": server.stats.freezes,
                "late_packets": server.stats.late_packets,
                "duplicates": server.stats.duplicates,
                "delivery_ratio": (
                    server.stats.delivered / drone.next_frame_seq
                    if drone.next_frame_seq
                    else None
                ),
                "last_latency_ms": server.stats.last_latency_ms,
            },
            "window": {
                "offset_yaw_deg": window.offset_yaw,
                "offset_pitch_deg": window.offset_pitch,
                "saturated_h": window.saturated_h,
                "saturated_v": window.saturated_v,
                "margin_h_deg": geom.margin_h,
                "margin_v_deg": geom.margin_v,
                "frame_seq": shown.frame_seq if shown is not None else None,
                "view_yaw_deg": (
                    None
                    if shown is None
                    else _norm(shown.camera_yaw + window.offset_yaw)
                ),
                "view_pitch_deg": (
                    None if shown is None else shown.gimbal_pitch + window.offset_pitch
                ),
            },
        }


def _norm(deg: float) -> float:
    return (deg + 180.0) % 360.0 - 180.0
