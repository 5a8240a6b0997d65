"""Receiver nodes: capture broadcasts, FEC-repair blocks, drop overdue packets,
gate uploads to the 3 closest nodes, emit ACKs and downlink control when ranked closest."""

from dataclasses import dataclass, field, replace
from typing import Callable

from .engine import US_PER_S, EventLoop
from .fec import UnrecoverableBlockError, codec_for
from .messages import Ack, Packet, Setpoint, ground_distance
from .radio import Radio, Uplink

UPLOAD_SET_SIZE = 3
ACK_EVERY_PACKETS = 10


@dataclass(frozen=True, slots=True)
class GateDecision:
    receiver_id: int
    in_upload_set: bool
    rank: int  # 1-based distance rank


def compute_gate(
    drone_pos: tuple[float, ...],
    receiver_positions: dict[int, tuple[float, float]],
) -> dict[int, GateDecision]:
    """Rank every receiver by ground distance to the drone; ties break on lower id.

    The 3 nearest are gated in; with fewer than 3 receivers everyone uploads.
    A pure function of its inputs, so every node reaches the same decision
    from the same position.
    """
    order = sorted(
        receiver_positions,
        key=lambda rid: (ground_distance(drone_pos, receiver_positions[rid]), rid),
    )
    return {
        rid: GateDecision(receiver_id=rid, in_upload_set=rank <= UPLOAD_SET_SIZE, rank=rank)
        for rank, rid in enumerate(order, start=1)
    }


def is_overdue(pkt: Packet, now: int, budget_us: int) -> bool:
    """A packet is overdue strictly beyond the budget; the boundary is kept."""
    return now - pkt.capture_ts > budget_us


@dataclass
class _BlockState:
    packets: dict[int, Packet] = field(default_factory=dict)  # index_in_block -> packet
    resolved: bool = False


@dataclass
class ReceiverStats:
    received_packets: int = 0
    duplicate_packets: int = 0
    uploaded_packets: int = 0
    uploaded_bytes: int = 0
    repaired_packets: int = 0
    overdue_dropped: int = 0
    acks_sent: int = 0


class ReceiverNode:
    """One Wi-Fi grid receiver."""

    def __init__(
        self,
        node_id: int,
        position: tuple[float, float],
        all_positions: dict[int, tuple[float, float]],
        engine: EventLoop,
        radio: Radio,
        uplink: Uplink,
        mtu: int,
        overdue_budget_us: int,
        control_rate_hz: int,
        emit,
        drone_pos_fn: Callable[[], tuple[float, float, float]],
        gate_audit: Callable[[tuple[float, ...], frozenset[int]], None] | None = None,
    ) -> None:
        self.id = node_id
        self.entity = f"rx{node_id}"
        self.position = position
        self.all_positions = all_positions
        self.engine = engine
        self.radio = radio
        self.uplink = uplink
        self.mtu = mtu
        self.overdue_budget_us = overdue_budget_us
        self.control_rate_hz = control_rate_hz
        self._emit = emit
        self._drone_pos_fn = drone_pos_fn
        self._gate_audit = gate_audit

        self.blocks: dict[int, _BlockState] = {}
        self.gate: GateDecision | None = None
        self.packets_since_ack = 0
        self.bytes_since_ack = 0
        self.last_ack_ts = 0
        self.latest_setpoint: Setpoint | None = None
        self._emit_pending = False
        self.stats = ReceiverStats()
        engine.register(self.entity, self.handle)

    def handle(self, ev) -> None:
        if ev.kind == "radio_rx":
            self.on_radio_packet(ev.payload, self.engine.now)
        elif ev.kind == "block_expiry":
            self._on_block_expiry(ev.payload, self.engine.now)
        elif ev.kind == "setpoint":
            self._on_setpoint(ev.payload, self.engine.now)
        elif ev.kind == "emit_tick":
            self._on_emit_tick(self.engine.now)
        else:
            raise ValueError(f"{self.entity} got unknown event {ev.kind!r}")

    # -- reception ----------------------------------------------------------

    def on_radio_packet(self, pkt: Packet, now: int) -> None:
        self.stats.received_packets += 1
        self._update_gate(pkt.drone_pos)

        self.packets_since_ack += 1
        self.bytes_since_ack += len(pkt.payload)
        self.maybe_ack(now)

        block = self.blocks.get(pkt.block_id)
        if block is None:
            block = _BlockState()
            self.blocks[pkt.block_id] = block
            expiry = max(pkt.capture_ts + self.overdue_budget_us, now)
            self.engine.schedule(expiry, self.entity, "block_expiry", pkt.block_id)
        if block.resolved or pkt.index_in_block in block.packets:
            self.stats.duplicate_packets += 1
            return
        block.packets[pkt.index_in_block] = pkt
        self._try_decode(pkt.block_id, block, now)

    def _update_gate(self, drone_pos: tuple[float, ...]) -> None:
        decisions = compute_gate(drone_pos, self.all_positions)
        if self._gate_audit is not None:
            self._gate_audit(
                drone_pos,
                frozenset(rid for rid, d in decisions.items() if d.in_upload_set),
            )
        mine = decisions[self.id]
        previous = self.gate
        self.gate = mine
        if previous is None or previous.in_upload_set != mine.in_upload_set or (
            (previous.rank == 1) != (mine.rank == 1)
        ):
            self._emit(
                self.entity, "gate_update", in_set=mine.in_upload_set, rank=mine.rank
            )
            if mine.rank == 1 and self.latest_setpoint is not None:
                self._schedule_emit(self.engine.now)

    # -- FEC repair and upload ------------------------------------------------

    def _block_geometry(self, pkt: Packet) -> tuple[int, int]:
        """(n_data, n_virtual) for the block a packet belongs to.

        The final block of a frame may be short; it was padded with virtual
        zero fragments up to k for encoding, and those count as always-known
        shards on the decode side.
        """
        total_frags = -(-pkt.frame_len // self.mtu)
        n_data = min(pkt.k, total_frags - pkt.block_first_fragment)
        return n_data, pkt.k - n_data

    def _try_decode(self, block_id: int, block: _BlockState, now: int) -> None:
        any_pkt = next(iter(block.packets.values()))
        k, r = any_pkt.k, any_pkt.r
        n_data, n_virtual = self._block_geometry(any_pkt)
        if len(block.packets) + n_virtual < k:
            return

        shards: dict[int, bytes] = {
            idx: p.payload.ljust(self.mtu, b"\0") for idx, p in block.packets.items()
        }
        for idx in range(n_data, k):
            shards[idx] = bytes(self.mtu)
        try:
            decoded = codec_for(k, r).decode(shards)
        except UnrecoverableBlockError:
            return

        base = any_pkt.block_first_fragment
        repaired = 0
        out: list[Packet] = []
        for i in range(n_data):
            received = block.packets.get(i)
            if received is not None:
                out.append(received)
                continue
            frag_idx = base + i
            size = min(self.mtu, any_pkt.frame_len - frag_idx * self.mtu)
            out.append(
                replace(
                    any_pkt,
                    fragment_idx=frag_idx,
                    index_in_block=i,
                    kind="data",
                    payload=decoded[i][:size],
                )
            )
            repaired += 1
        block.resolved = True
        self.stats.repaired_packets += repaired
        self._emit(
            self.entity,
            "fec_decode",
            block=block_id,
            received=len(block.packets),
            repaired=repaired,
        )
        self.upload_useful(out, now)
        block.packets.clear()

    def _on_block_expiry(self, block_id: int, now: int) -> None:
        block = self.blocks.get(block_id)
        if block is None or block.resolved:
            return
        data = sorted(
            (p for p in block.packets.values() if p.is_data), key=lambda p: p.fragment_idx
        )
        block.resolved = True
        self._emit(
            self.entity,
            "block_expire",
            block=block_id,
            received=len(block.packets),
            data_packets=len(data),
        )
        self.upload_useful(data, now)
        block.packets.clear()

    def upload_useful(self, packets: list[Packet], now: int) -> int:
        """Forward data packets to the server if gated in; overdue ones are dropped."""
        if self.gate is None or not self.gate.in_upload_set:
            return 0
        uploaded = 0
        for pkt in packets:
            if not pkt.is_data:
                continue
            if is_overdue(pkt, now, self.overdue_budget_us):
                self.stats.overdue_dropped += 1
                self._emit(
                    self.entity,
                    "overdue_drop",
                    frame=pkt.frame_seq,
                    frag=pkt.fragment_idx,
                    age_ms=(now - pkt.capture_ts) / 1000.0,
                )
                continue
            self.uplink.send_to_server(self.id, pkt)
            self.stats.uploaded_packets += 1
            self.stats.uploaded_bytes += len(pkt.payload)
            uploaded += 1
        return uploaded

    # -- feedback and control --------------------------------------------------

    def maybe_ack(self, now: int) -> Ack | None:
        """Emit an ACK after every tenth received packet while ranked closest."""
        if self.gate is None or self.gate.rank != 1:
            return None
        if self.packets_since_ack < ACK_EVERY_PACKETS:
            return None
        span = now - self.last_ack_ts
        if span <= 0:
            return None
        ack = Ack(
            receiver_id=self.id,
            issued_at=now,
            bytes_received=self.bytes_since_ack,
            span_us=span,
        )
        self.packets_since_ack = 0
        self.bytes_since_ack = 0
        self.last_ack_ts = now
        self.stats.acks_sent += 1
        self._emit(self.entity, "ack_emit", bytes=ack.bytes_received, span_us=ack.span_us)
        self.radio.send_to_drone(self.id, "ack", ack, self._drone_pos_fn())
        return ack

    def _on_setpoint(self, sp: Setpoint, now: int) -> None:
        if self.latest_setpoint is None or sp.issued_at > self.latest_setpoint.issued_at:
            self.latest_setpoint = sp
        self._schedule_emit(now)

    def _schedule_emit(self, now: int) -> None:
        if not self._emit_pending:
            self._emit_pending = True
            self.engine.schedule(now, self.entity, "emit_tick")

    def _on_emit_tick(self, now: int) -> None:
        self._emit_pending = False
        if self.latest_setpoint is None or self.gate is None or self.gate.rank != 1:
            return  # re-armed by _update_gate when rank 1 returns
        self.emit_control(self.latest_setpoint, now)
        self._emit_pending = True
        self.engine.schedule_in(US_PER_S // self.control_rate_hz, self.entity, "emit_tick")

    def emit_control(self, sp: Setpoint, now: int) -> None:
        self._emit(self.entity, "control_emit", issued_at_us=sp.issued_at)
        self.radio.send_to_drone(self.id, "setpoint", sp, self._drone_pos_fn())
