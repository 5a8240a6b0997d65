"""Radio broadcast and LAN uplink channel models.

Loss is distance-driven: a flat floor ``p_base`` out to ``r_reliable``, then a
linear ramp reaching 1.0 at ``d_max``.  Each Wi-Fi channel serializes one
packet at a time at ``channel_capacity`` bits/s; a bounded transmit queue
drops packets whose queueing delay would exceed the configured limit, which
keeps latency finite when the offered load exceeds capacity.
"""

from dataclasses import dataclass, field

from .engine import US_PER_S, EventLoop, RngStreams
from .messages import Packet, slant_distance


@dataclass
class RadioModel:
    p_base: float = 0.05
    r_reliable: float = 300.0
    d_max: float = 700.0
    channel_capacity: float = 10_000_000.0
    channels: list[int] = field(default_factory=lambda: [0, 1])

    def loss_probability(self, distance: float) -> float:
        if distance <= self.r_reliable:
            return self.p_base
        if distance >= self.d_max:
            return 1.0
        frac = (distance - self.r_reliable) / (self.d_max - self.r_reliable)
        return self.p_base + frac * (1.0 - self.p_base)


@dataclass
class UplinkModel:
    latency_ms: float = 5.0
    loss: float = 0.0

    @property
    def latency_us(self) -> int:
        return round(self.latency_ms * 1000)


@dataclass(frozen=True, slots=True)
class TxResult:
    started: int
    arrival: int
    deliveries: tuple[tuple[int, int], ...]  # (receiver_id, arrival time)
    dropped: bool = False


class Radio:
    """Shared broadcast medium between the drone and the receiver grid."""

    DOWNLINK_BYTES = 64  # control/ACK messages; sized well under one MTU

    def __init__(
        self,
        engine: EventLoop,
        model: RadioModel,
        rng: RngStreams,
        receiver_positions: dict[int, tuple[float, float]],
        listeners: dict[int, set[int]],
        downlink_latency_us: int = 1000,
        tx_queue_limit_us: int = 100_000,
    ) -> None:
        self.engine = engine
        self.model = model
        self._rng = rng
        self.receiver_positions = receiver_positions
        self.listeners = listeners  # receiver id -> set of channel ids
        self.downlink_latency_us = downlink_latency_us
        self.tx_queue_limit_us = tx_queue_limit_us
        self._busy_until: dict[int, int] = {ch: 0 for ch in model.channels}
        for rid, chans in listeners.items():
            unknown = chans - set(model.channels)
            if unknown:
                raise ValueError(f"receiver {rid} listens on unknown channels {sorted(unknown)}")

    def serialization_us(self, n_bytes: int) -> int:
        return round(n_bytes * 8 * US_PER_S / self.model.channel_capacity)

    def broadcast_packet(self, pkt: Packet, from_pos: tuple[float, float, float]) -> TxResult:
        """Serialize ``pkt`` on its channel and run one loss trial per in-range listener.

        Loss draws come from a per-receiver stream so the outcome at one node
        never depends on how many other nodes exist.
        """
        if pkt.channel not in self._busy_until:
            raise ValueError(f"packet on unknown channel {pkt.channel}")
        now = self.engine.now
        queue_ahead = self._busy_until[pkt.channel] - now
        if queue_ahead > self.tx_queue_limit_us:
            return TxResult(started=now, arrival=now, deliveries=(), dropped=True)
        start = max(now, self._busy_until[pkt.channel])
        arrival = start + self.serialization_us(len(pkt.payload))
        self._busy_until[pkt.channel] = arrival

        deliveries = []
        for rid in sorted(self.receiver_positions):
            if pkt.channel not in self.listeners[rid]:
                continue
            d = slant_distance(from_pos, self.receiver_positions[rid])
            if d >= self.model.d_max:
                continue
            p_loss = self.model.loss_probability(d)
            if self._rng.stream(f"radio/rx{rid}").random() < p_loss:
                continue
            deliveries.append((rid, arrival))
            self.engine.schedule(arrival, f"rx{rid}", "radio_rx", pkt)
        return TxResult(started=start, arrival=arrival, deliveries=tuple(deliveries))

    def send_to_drone(
        self,
        sender_id: int,
        kind: str,
        payload,
        drone_pos: tuple[float, float, float],
    ) -> int | None:
        """Downlink one small control-plane message from a receiver to the drone.

        Subject to the same distance loss as the broadcast path; carried on a
        dedicated control channel, so it does not contend with video traffic.
        Returns the arrival time, or None when the loss trial failed.
        """
        d = slant_distance(drone_pos, self.receiver_positions[sender_id])
        if d >= self.model.d_max:
            return None
        p_loss = self.model.loss_probability(d)
        if self._rng.stream(f"downlink/rx{sender_id}").random() < p_loss:
            return None
        arrival = self.engine.now + self.downlink_latency_us
        self.engine.schedule(arrival, "drone", kind, payload)
        return arrival

    def set_capacity(self, bits_per_second: float) -> None:
        self.model.channel_capacity = bits_per_second


class Uplink:
    """Receiver-to-server LAN link (and the reverse control path)."""

    def __init__(self, engine: EventLoop, model: UplinkModel, rng: RngStreams) -> None:
        self.engine = engine
        self.model = model
        self._rng = rng

    def send_to_server(self, receiver_id: int, payload) -> int | None:
        if self.model.loss > 0.0:
            if self._rng.stream(f"uplink/rx{receiver_id}").random() < self.model.loss:
                return None
        arrival = self.engine.now + self.model.latency_us
        self.engine.schedule(arrival, "server", "ingest", (receiver_id, payload))
        return arrival

    def send_to_receiver(self, receiver_id: int, kind: str, payload) -> int | None:
        if self.model.loss > 0.0:
            if self._rng.stream(f"uplink_down/rx{receiver_id}").random() < self.model.loss:
                return None
        arrival = self.engine.now + self.model.latency_us
        self.engine.schedule(arrival, f"rx{receiver_id}", kind, payload)
        return arrival
