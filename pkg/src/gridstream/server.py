"""Streaming server: multi-receiver deduplication and reassembly, deadline playout,
display-window view compensation, and head-to-setpoint control routing."""

import math
import zlib
from dataclasses import dataclass, field

from .engine import US_PER_S, EventLoop
from .grid import compute_gate
from .messages import (
    GIMBAL_MAX_DEG,
    GIMBAL_MIN_DEG,
    HeadSample,
    Packet,
    Setpoint,
    ground_distance,
    normalize_angle,
    shortest_angle,
)
from .radio import Uplink


@dataclass(frozen=True)
class ViewGeometry:
    captured_fov_h: float = 110.0
    captured_fov_v: float = 90.0
    display_fov_h: float = 90.0
    display_fov_v: float = 70.0

    def __post_init__(self) -> None:
        if self.display_fov_h > self.captured_fov_h or self.display_fov_v > self.captured_fov_v:
            raise ValueError("display field of view cannot exceed the captured one")

    @property
    def margin_h(self) -> float:
        return (self.captured_fov_h - self.display_fov_h) / 2.0

    @property
    def margin_v(self) -> float:
        return (self.captured_fov_v - self.display_fov_v) / 2.0


@dataclass(frozen=True, slots=True)
class DisplayWindow:
    offset_yaw: float
    offset_pitch: float
    saturated_h: bool
    saturated_v: bool


def compute_display_window(
    head: HeadSample, camera_yaw: float, gimbal_pitch: float, geom: ViewGeometry
) -> DisplayWindow:
    """Shift the display window toward the head direction, clamped to the margins.

    The camera orientation is the one recorded at the displayed frame's
    capture, so the window compensates exactly the staleness of that frame.
    """
    raw_yaw = shortest_angle(head.yaw - camera_yaw)
    raw_pitch = head.pitch - gimbal_pitch
    m_h, m_v = geom.margin_h, geom.margin_v
    return DisplayWindow(
        offset_yaw=min(max(raw_yaw, -m_h), m_h),
        offset_pitch=min(max(raw_pitch, -m_v), m_v),
        saturated_h=abs(raw_yaw) > m_h,
        saturated_v=abs(raw_pitch) > m_v,
    )


def derive_setpoint(
    head: HeadSample,
    origin: tuple[float, float, float],
    gain: float,
    issued_at: int,
) -> Setpoint:
    """Map a head sample to a drone setpoint.

    Head yaw commands drone yaw; head pitch commands the gimbal; tracked
    position, scaled by the gain, displaces the drone in the view-aligned
    ground frame (walking forward flies forward) at held altitude.
    """
    yaw_rad = math.radians(head.yaw)
    fwd = (math.cos(yaw_rad), math.sin(yaw_rad))
    right = (math.sin(yaw_rad), -math.cos(yaw_rad))
    x_right, y_fwd = head.pos
    dx = gain * (y_fwd * fwd[0] + x_right * right[0])
    dy = gain * (y_fwd * fwd[1] + x_right * right[1])
    return Setpoint(
        target_yaw=normalize_angle(head.yaw),
        target_gimbal_pitch=min(max(head.pitch, GIMBAL_MIN_DEG), GIMBAL_MAX_DEG),
        target_position=(origin[0] + dx, origin[1] + dy, origin[2]),
        issued_at=issued_at,
    )


@dataclass
class _FrameAssembly:
    frame_seq: int
    capture_ts: int
    camera_yaw: float
    gimbal_pitch: float
    frame_len: int
    frame_checksum: int
    total_fragments: int
    fragments: dict[int, bytes] = field(default_factory=dict)

    @property
    def complete(self) -> bool:
        return len(self.fragments) == self.total_fragments

    def assemble(self) -> bytes:
        return b"".join(self.fragments[i] for i in range(self.total_fragments))


@dataclass
class PlayoutStats:
    delivered: int = 0
    skipped: int = 0
    freezes: int = 0
    late_packets: int = 0
    checksum_failures: int = 0
    duplicates: int = 0
    last_latency_ms: float | None = None


class StreamingServer:
    """Reassembles the upload streams and runs the fixed-budget playout loop."""

    ENTITY = "server"

    def __init__(
        self,
        engine: EventLoop,
        uplink: Uplink,
        receiver_positions: dict[int, tuple[float, float]],
        home: tuple[float, float, float],
        mtu: int,
        fps: int,
        playout_budget_us: int,
        geom: ViewGeometry,
        position_gain: float,
        duration_us: int,
        emit,
    ) -> None:
        self.engine = engine
        self.uplink = uplink
        self.receiver_positions = receiver_positions
        self.home = home
        self.mtu = mtu
        self.fps = fps
        self.playout_budget_us = playout_budget_us
        self.geom = geom
        self.position_gain = position_gain
        self.duration_us = duration_us
        self._emit = emit

        self.pending: dict[int, _FrameAssembly] = {}
        self.resolved: set[int] = set()
        self.last_delivered_seq = -1
        self.displayed: _FrameAssembly | None = None
        self.head = HeadSample(t=0, yaw=0.0, pitch=0.0, pos=(0.0, 0.0))
        self.window: DisplayWindow = DisplayWindow(0.0, 0.0, False, False)
        self.latest_drone_pos: tuple[float, float, float] | None = None
        self.gate_set: tuple[int, ...] = ()
        self.rank1: int | None = None
        self.latest_setpoint: Setpoint | None = None
        self.stats = PlayoutStats()
        self.per_receiver_ingests: dict[int, int] = {rid: 0 for rid in receiver_positions}
        self.per_receiver_bytes: dict[int, int] = {rid: 0 for rid in receiver_positions}
        self.per_receiver_dups: dict[int, int] = {rid: 0 for rid in receiver_positions}
        self._render_tick = 0
        engine.register(self.ENTITY, self.handle)

    def start(self) -> None:
        self.engine.schedule(0, self.ENTITY, "render_tick")

    def handle(self, ev) -> None:
        if ev.kind == "ingest":
            receiver_id, pkt = ev.payload
            self.ingest(pkt, receiver_id, self.engine.now)
        elif ev.kind == "render_tick":
            self.on_render_tick(self.engine.now)
        else:
            raise ValueError(f"server got unknown event {ev.kind!r}")

    # -- ingest ---------------------------------------------------------------

    def ingest(self, pkt: Packet, receiver_id: int, now: int) -> None:
        if not pkt.is_data:
            raise AssertionError("parity packet reached the server")
        self.latest_drone_pos = pkt.drone_pos
        self._recompute_gate(pkt.drone_pos)

        self.per_receiver_ingests[receiver_id] += 1
        self.per_receiver_bytes[receiver_id] += len(pkt.payload)

        deadline = pkt.capture_ts + self.playout_budget_us
        if now > deadline or pkt.frame_seq in self.resolved:
            self.stats.late_packets += 1
            self._emit(
                self.ENTITY, "late_packet", frame=pkt.frame_seq, frag=pkt.fragment_idx,
                rx=receiver_id,
            )
            return

        asm = self.pending.get(pkt.frame_seq)
        if asm is None:
            asm = _FrameAssembly(
                frame_seq=pkt.frame_seq,
                capture_ts=pkt.capture_ts,
                camera_yaw=pkt.camera_yaw,
                gimbal_pitch=pkt.gimbal_pitch,
                frame_len=pkt.frame_len,
                frame_checksum=pkt.frame_checksum,
                total_fragments=-(-pkt.frame_len // self.mtu),
            )
            self.pending[pkt.frame_seq] = asm
        if pkt.fragment_idx in asm.fragments:
            self.stats.duplicates += 1
            self.per_receiver_dups[receiver_id] += 1
            self._emit(
                self.ENTITY, "ingest", rx=receiver_id, frame=pkt.frame_seq,
                frag=pkt.fragment_idx, bytes=len(pkt.payload), dup=True,
            )
            return
        asm.fragments[pkt.fragment_idx] = pkt.payload
        self._emit(
            self.ENTITY, "ingest", rx=receiver_id, frame=pkt.frame_seq,
            frag=pkt.fragment_idx, bytes=len(pkt.payload), dup=False,
        )
        if asm.complete:
            payload = asm.assemble()
            ok = (zlib.crc32(payload) & 0xFFFFFFFF) == asm.frame_checksum
            self._emit(self.ENTITY, "frame_complete", frame=asm.frame_seq, checksum_ok=ok)
            if not ok:
                self.stats.checksum_failures += 1
                self.resolved.add(asm.frame_seq)
                del self.pending[asm.frame_seq]

    def _recompute_gate(self, drone_pos: tuple[float, ...]) -> None:
        decisions = compute_gate(drone_pos, self.receiver_positions)
        gate = tuple(sorted(rid for rid, d in decisions.items() if d.in_upload_set))
        rank1 = next(rid for rid, d in decisions.items() if d.rank == 1)
        if gate != self.gate_set or rank1 != self.rank1:
            initial = self.rank1 is None
            self.gate_set = gate
            self.rank1 = rank1
            self._emit(
                self.ENTITY, "gate_change", gate=list(gate), rank1=rank1, initial=initial
            )

    # -- playout ----------------------------------------------------------------

    def playout(self, now: int) -> _FrameAssembly | None:
        """Resolve every frame whose deadline has arrived; deliver the newest complete one."""
        due = [
            asm for asm in self.pending.values()
            if asm.capture_ts + self.playout_budget_us <= now
        ]
        if not due:
            return None
        complete = [asm for asm in due if asm.complete and asm.frame_seq > self.last_delivered_seq]
        delivered: _FrameAssembly | None = None
        if complete:
            delivered = max(complete, key=lambda a: a.frame_seq)
        for asm in due:
            del self.pending[asm.frame_seq]
            self.resolved.add(asm.frame_seq)
            if asm is delivered:
                continue
            self.stats.skipped += 1
            self._emit(
                self.ENTITY, "frame_skipped", frame=asm.frame_seq, complete=asm.complete,
            )
        if delivered is None:
            self.stats.freezes += 1
            self._emit(self.ENTITY, "freeze")
            return None
        self.last_delivered_seq = delivered.frame_seq
        self.stats.delivered += 1
        latency_ms = (now - delivered.capture_ts) / 1000.0
        self.stats.last_latency_ms = latency_ms
        payload = delivered.assemble()
        self._emit(
            self.ENTITY,
            "frame_delivered",
            frame=delivered.frame_seq,
            latency_ms=latency_ms,
            bytes=len(payload),
            checksum=zlib.crc32(payload) & 0xFFFFFFFF,
            source_checksum=delivered.frame_checksum,
        )
        return delivered

    def on_render_tick(self, now: int) -> None:
        frame = self.playout(now)
        if frame is not None:
            self.displayed = frame
        shown = self.displayed
        if shown is not None:
            self.window = compute_display_window(
                self.head, shown.camera_yaw, shown.gimbal_pitch, self.geom
            )
            view_yaw = normalize_angle(shown.camera_yaw + self.window.offset_yaw)
            view_pitch = shown.gimbal_pitch + self.window.offset_pitch
        else:
            self.window = DisplayWindow(0.0, 0.0, False, False)
            view_yaw = None
            view_pitch = None
        self._emit(
            self.ENTITY,
            "render",
            frame=shown.frame_seq if shown is not None else None,
            fresh=frame is not None,
            view_yaw_deg=view_yaw,
            view_pitch_deg=view_pitch,
            offset_yaw_deg=self.window.offset_yaw,
            offset_pitch_deg=self.window.offset_pitch,
            saturated_h=self.window.saturated_h,
            saturated_v=self.window.saturated_v,
            head_yaw_deg=self.head.yaw,
            head_pitch_deg=self.head.pitch,
        )
        self._render_tick += 1
        next_t = self._render_tick * US_PER_S // self.fps
        if next_t < self.duration_us:
            self.engine.schedule(next_t, self.ENTITY, "render_tick")

    # -- control ------------------------------------------------------------------

    def on_head(self, sample: HeadSample, now: int) -> None:
        self.head = sample
        self._emit(
            self.ENTITY, "head", yaw_deg=sample.yaw, pitch_deg=sample.pitch,
            x_m=sample.pos[0], y_m=sample.pos[1],
        )
        sp = derive_setpoint(sample, self.home, self.position_gain, issued_at=now)
        self.latest_setpoint = sp
        self.route_control(sp, now)

    def route_control(self, sp: Setpoint, now: int) -> None:
        """Send the setpoint to the closest receiver; before any video arrives,
        fall back to the receiver nearest the drone's home position."""
        if self.rank1 is not None:
            target = self.rank1
        else:
            target = min(
                self.receiver_positions,
                key=lambda rid: (
                    ground_distance(self.home, self.receiver_positions[rid]),
                    rid,
                ),
            )
        self._emit(
            self.ENTITY, "setpoint_route", to_rx=target, yaw_deg=sp.target_yaw,
            gimbal_pitch_deg=sp.target_gimbal_pitch,
            x=sp.target_position[0], y=sp.target_position[1], z=sp.target_position[2],
        )
        self.uplink.send_to_receiver(target, "setpoint", sp)
