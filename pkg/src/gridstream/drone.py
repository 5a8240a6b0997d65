"""On-board device: frame synthesis, packetization, FEC encoding, broadcast,
ACK-driven rate control, and rate-limited flight/gimbal kinematics."""

import math
import random
import zlib
from dataclasses import dataclass

from .engine import US_PER_S, EventLoop
from .fec import codec_for
from .messages import (
    GIMBAL_MAX_DEG,
    GIMBAL_MIN_DEG,
    Ack,
    DronePose,
    Frame,
    Packet,
    Setpoint,
    normalize_angle,
    shortest_angle,
)
from .radio import Radio


@dataclass
class FlightLimits:
    max_speed: float = 10.0          # m/s
    max_yaw_rate: float = 90.0       # deg/s
    max_gimbal_rate: float = 120.0   # deg/s


@dataclass
class RateConfig:
    bitrate_min: float = 1_000_000.0
    bitrate_max: float = 10_000_000.0
    bitrate_initial: float = 4_000_000.0
    beta: float = 0.85
    alpha: float = 0.3
    ack_timeout_us: int = 500_000


class RateController:
    """EWMA goodput estimator with a safety factor and silence decay."""

    def __init__(self, cfg: RateConfig) -> None:
        self.cfg = cfg
        self.ewma_goodput: float | None = None
        self.bitrate: float = min(max(cfg.bitrate_initial, cfg.bitrate_min), cfg.bitrate_max)
        self.last_ack_rx: int = 0
        self.last_ack_issued_at: int = -1

    def on_ack(self, ack: Ack, now: int) -> float | None:
        """Fold one ACK into the goodput estimate; returns the sample or None if ignored."""
        if ack.issued_at <= self.last_ack_issued_at:
            return None  # stale or replayed
        if ack.span_us <= 0:
            return None
        self.last_ack_issued_at = ack.issued_at
        self.last_ack_rx = now
        sample = ack.bytes_received * 8 * US_PER_S / ack.span_us
        if self.ewma_goodput is None:
            self.ewma_goodput = sample
        else:
            a = self.cfg.alpha
            self.ewma_goodput = (1.0 - a) * self.ewma_goodput + a * sample
        return sample

    def update_bitrate(self, now: int) -> tuple[float, bool]:
        """Recompute the commanded bitrate; returns (bitrate, decayed)."""
        if now - self.last_ack_rx > self.cfg.ack_timeout_us:
            self.bitrate = max(self.cfg.bitrate_min, self.bitrate / 2.0)
            return self.bitrate, True
        if self.ewma_goodput is not None:
            target = self.cfg.beta * self.ewma_goodput
            self.bitrate = min(max(target, self.cfg.bitrate_min), self.cfg.bitrate_max)
        return self.bitrate, False


def apply_setpoint(pose: DronePose, sp: Setpoint, dt: float, limits: FlightLimits) -> DronePose:
    """Advance the pose toward the setpoint for dt seconds under the rate limits.

    Yaw takes the shorter angular direction; the gimbal clamps to its
    mechanical range; position moves along the straight line at most at
    max_speed.
    """
    yaw_delta = shortest_angle(sp.target_yaw - pose.yaw)
    yaw_step = math.copysign(min(abs(yaw_delta), limits.max_yaw_rate * dt), yaw_delta)
    new_yaw = normalize_angle(pose.yaw + yaw_step)

    target_pitch = min(max(sp.target_gimbal_pitch, GIMBAL_MIN_DEG), GIMBAL_MAX_DEG)
    pitch_delta = target_pitch - pose.gimbal_pitch
    pitch_step = math.copysign(min(abs(pitch_delta), limits.max_gimbal_rate * dt), pitch_delta)
    new_pitch = pose.gimbal_pitch + pitch_step

    dx = sp.target_position[0] - pose.position[0]
    dy = sp.target_position[1] - pose.position[1]
    dz = sp.target_position[2] - pose.position[2]
    dist = math.sqrt(dx * dx + dy * dy + dz * dz)
    reach = limits.max_speed * dt
    if dist <= reach or dist == 0.0:
        new_pos = sp.target_position
    else:
        s = reach / dist
        new_pos = (
            pose.position[0] + dx * s,
            pose.position[1] + dy * s,
            pose.position[2] + dz * s,
        )
    return DronePose(position=new_pos, yaw=new_yaw, gimbal_pitch=new_pitch)


def frame_payload_size(bitrate: float, fps: int) -> int:
    return round(bitrate / fps / 8)


def capture_frame(frame_seq: int, now: int, bitrate: float, fps: int, pose: DronePose) -> Frame:
    size = frame_payload_size(bitrate, fps)
    payload = random.Random(frame_seq).randbytes(size)
    return Frame(
        frame_seq=frame_seq,
        capture_ts=now,
        camera_yaw=pose.yaw,
        gimbal_pitch=pose.gimbal_pitch,
        payload=payload,
        checksum=zlib.crc32(payload) & 0xFFFFFFFF,
    )


def packetize(frame: Frame, mtu: int) -> list[bytes]:
    """Split the frame payload into <=mtu fragments; empty frames yield none."""
    if mtu <= 0:
        raise ValueError("mtu must be positive")
    return [frame.payload[i : i + mtu] for i in range(0, len(frame.payload), mtu)]


def build_block_packets(
    frame: Frame,
    fragments: list[bytes],
    base: int,
    block_id: int,
    mtu: int,
    k: int,
    r: int,
    drone_pos: tuple[float, float, float],
) -> list[Packet]:
    """Emit the data packets of one block followed by its parity packets.

    A short final block is padded with virtual zero fragments up to k for
    encoding only; the padding never goes on the air.  Parity payloads are
    always mtu-sized.
    """
    common = dict(
        frame_seq=frame.frame_seq,
        block_id=block_id,
        k=k,
        r=r,
        capture_ts=frame.capture_ts,
        drone_pos=drone_pos,
        channel=-1,
        frame_len=len(frame.payload),
        frame_checksum=frame.checksum,
        camera_yaw=frame.camera_yaw,
        gimbal_pitch=frame.gimbal_pitch,
    )
    packets = [
        Packet(fragment_idx=base + i, index_in_block=i, kind="data", payload=frag, **common)
        for i, frag in enumerate(fragments)
    ]
    if r > 0:
        padded = [f.ljust(mtu, b"\0") for f in fragments]
        padded += [bytes(mtu)] * (k - len(fragments))
        parity = codec_for(k, r).encode(padded)
        packets += [
            Packet(
                fragment_idx=base + k + j,
                index_in_block=k + j,
                kind="parity",
                payload=p,
                **common,
            )
            for j, p in enumerate(parity)
        ]
    return packets


class Drone:
    """Event-driven on-board device and airframe."""

    ENTITY = "drone"

    def __init__(
        self,
        engine: EventLoop,
        radio: Radio,
        home: tuple[float, float, float],
        fps: int,
        mtu: int,
        k: int,
        r: int,
        rate_cfg: RateConfig,
        limits: FlightLimits,
        control_rate_hz: int,
        duration_us: int,
        emit,
    ) -> None:
        self.engine = engine
        self.radio = radio
        self.pose = DronePose(position=home)
        self.fps = fps
        self.mtu = mtu
        self.k = k
        self.r = r
        self.rate = RateController(rate_cfg)
        self.limits = limits
        self.control_rate_hz = control_rate_hz
        self.duration_us = duration_us
        self._emit = emit
        self.setpoint: Setpoint | None = None
        self.next_frame_seq = 0
        self.next_block_id = 0
        self._rr_index = 0
        self._frame_tick = 0
        self._control_tick = 0
        self.packets_tx = 0
        self.packets_tx_dropped = 0
        engine.register(self.ENTITY, self.handle)

    def start(self) -> None:
        self.engine.schedule(0, self.ENTITY, "frame_tick")
        self.engine.schedule(0, self.ENTITY, "control_tick")

    def handle(self, ev) -> None:
        if ev.kind == "frame_tick":
            self._on_frame_tick(self.engine.now)
        elif ev.kind == "control_tick":
            self._on_control_tick(self.engine.now)
        elif ev.kind == "ack":
            self._on_ack(ev.payload, self.engine.now)
        elif ev.kind == "setpoint":
            self._on_setpoint(ev.payload, self.engine.now)
        else:
            raise ValueError(f"drone got unknown event {ev.kind!r}")

    # -- video path -------------------------------------------------------

    def _on_frame_tick(self, now: int) -> None:
        bitrate, decayed = self.rate.update_bitrate(now)
        self._emit(
            self.ENTITY,
            "rate_update",
            bitrate_bps=bitrate,
            ewma_bps=self.rate.ewma_goodput,
            decayed=decayed,
        )
        frame = capture_frame(self.next_frame_seq, now, bitrate, self.fps, self.pose)
        self.next_frame_seq += 1
        self._emit(
            self.ENTITY,
            "frame_capture",
            frame=frame.frame_seq,
            bytes=len(frame.payload),
            checksum=frame.checksum,
            yaw_deg=frame.camera_yaw,
            gimbal_pitch_deg=frame.gimbal_pitch,
            x=self.pose.position[0],
            y=self.pose.position[1],
        )
        self.broadcast_frame(frame)

        self._frame_tick += 1
        next_t = self._frame_tick * US_PER_S // self.fps
        if next_t < self.duration_us:
            self.engine.schedule(next_t, self.ENTITY, "frame_tick")

    def broadcast_frame(self, frame: Frame) -> None:
        fragments = packetize(frame, self.mtu)
        channels = self.radio.model.channels
        for base in range(0, len(fragments), self.k):
            block = build_block_packets(
                frame,
                fragments[base : base + self.k],
                base,
                self.next_block_id,
                self.mtu,
                self.k,
                self.r,
                self.pose.position,
            )
            self.next_block_id += 1
            for pkt in block:
                pkt = pkt.with_channel(channels[self._rr_index % len(channels)])
                self._rr_index += 1
                res = self.radio.broadcast_packet(pkt, self.pose.position)
                if res.dropped:
                    self.packets_tx_dropped += 1
                    self._emit(
                        self.ENTITY,
                        "packet_tx_drop",
                        frame=pkt.frame_seq,
                        frag=pkt.fragment_idx,
                        pkt_kind=pkt.kind,
                        channel=pkt.channel,
                    )
                else:
                    self.packets_tx += 1
                    self._emit(
                        self.ENTITY,
                        "packet_tx",
                        frame=pkt.frame_seq,
                        frag=pkt.fragment_idx,
                        block=pkt.block_id,
                        pkt_kind=pkt.kind,
                        channel=pkt.channel,
                        bytes=len(pkt.payload),
                        start_us=res.started,
                        arrival_us=res.arrival,
                    )

    # -- control path -----------------------------------------------------

    def _on_control_tick(self, now: int) -> None:
        dt = 1.0 / self.control_rate_hz
        if self.setpoint is not None:
            self.pose = apply_setpoint(self.pose, self.setpoint, dt, self.limits)
        self._control_tick += 1
        next_t = self._control_tick * US_PER_S // self.control_rate_hz
        if next_t < self.duration_us:
            self.engine.schedule(next_t, self.ENTITY, "control_tick")

    def _on_setpoint(self, sp: Setpoint, now: int) -> None:
        if self.setpoint is not None and sp.issued_at <= self.setpoint.issued_at:
            return
        self.setpoint = sp
        self._emit(
            self.ENTITY,
            "setpoint_apply",
            yaw_deg=sp.target_yaw,
            gimbal_pitch_deg=sp.target_gimbal_pitch,
            x=sp.target_position[0],
            y=sp.target_position[1],
            z=sp.target_position[2],
            issued_at_us=sp.issued_at,
        )

    def _on_ack(self, ack: Ack, now: int) -> None:
        sample = self.rate.on_ack(ack, now)
        if sample is None:
            self._emit(self.ENTITY, "ack_stale", issued_at_us=ack.issued_at)
        else:
            self._emit(
                self.ENTITY,
                "ack_apply",
                sample_bps=sample,
                ewma_bps=self.rate.ewma_goodput,
                bytes=ack.bytes_received,
                span_us=ack.span_us,
                receiver=ack.receiver_id,
            )
