"""Shared builders for integration and acceptance tests."""

from gridstream.drone import build_block_packets, packetize
from gridstream.engine import EventLoop, RngStreams
from gridstream.grid import ReceiverNode
from gridstream.headtrace import HeadTrace
from gridstream.messages import Frame, Packet
from gridstream.metrics import MetricsAggregator, MetricsReport
from gridstream.radio import Radio, RadioModel, Uplink, UplinkModel
from gridstream.scenario import Scenario, scenario_from_dict
from gridstream.simulation import Simulation


def lossless_radio(**extra) -> dict:
    base = {"p_base": 0.0, "r_reliable_m": 50_000.0, "d_max_m": 100_000.0}
    base.update(extra)
    return base


class EventCollector:
    """Sink that keeps only the requested event kinds."""

    def __init__(self, kinds: set[str]):
        self.kinds = kinds
        self.records: list[dict] = []

    def __call__(self, record: dict) -> None:
        if record["kind"] in self.kinds:
            self.records.append(record)

    def of(self, kind: str) -> list[dict]:
        return [r for r in self.records if r["kind"] == kind]


def run_scenario(
    scenario: Scenario,
    trace: HeadTrace | None = None,
    collect: set[str] | None = None,
    gate_audit=None,
) -> tuple[MetricsReport, EventCollector]:
    collector = EventCollector(collect or set())
    aggregator = MetricsAggregator(scenario)

    def sink(record):
        collector(record)
        aggregator(record)

    sim = Simulation(scenario, trace=trace, sinks=[sink], gate_audit=gate_audit)
    sim.run()
    return aggregator.finalize(), collector


def make_frame(size: int, seq: int = 0, capture_ts: int = 0) -> Frame:
    payload = bytes((i * 13 + seq) % 256 for i in range(size))
    return Frame(
        frame_seq=seq,
        capture_ts=capture_ts,
        camera_yaw=0.0,
        gimbal_pitch=0.0,
        payload=payload,
        checksum=Frame.payload_checksum(payload),
    )


def block_for(size=8 * 1400, k=8, r=2, seq=0, capture_ts=0, mtu=1400):
    frame = make_frame(size, seq, capture_ts)
    frags = packetize(frame, mtu)
    return frame, build_block_packets(frame, frags, 0, 0, mtu, k, r, (0.0, 0.0, 50.0))


class ReceiverHarness:
    """One receiver wired to capture its uploads and downlink traffic."""

    def __init__(self, node_id=0, positions=None, budget_us=180_000, mtu=1400):
        positions = positions or {0: (0.0, 0.0)}
        self.engine = EventLoop()
        rng = RngStreams(3)
        model = RadioModel(p_base=0.0, r_reliable=10_000.0, d_max=20_000.0, channels=[0])
        listeners = {rid: {0} for rid in positions}
        self.radio = Radio(self.engine, model, rng, positions, listeners)
        self.uplink = Uplink(self.engine, UplinkModel(latency_ms=1.0), rng)
        self.uploads: list = []
        self.downlink: list = []
        self.events: list = []
        self.engine.register("server", lambda ev: self.uploads.append(ev.payload))
        self.engine.register("drone", lambda ev: self.downlink.append((ev.kind, ev.payload)))
        self.node = ReceiverNode(
            node_id=node_id,
            position=positions[node_id],
            all_positions=positions,
            engine=self.engine,
            radio=self.radio,
            uplink=self.uplink,
            mtu=mtu,
            overdue_budget_us=budget_us,
            control_rate_hz=50,
            emit=lambda entity, kind, **f: self.events.append((entity, kind, f)),
            drone_pos_fn=lambda: (0.0, 0.0, 50.0),
        )

    def feed(self, pkt: Packet, at: int | None = None):
        at = self.engine.now if at is None else at
        self.engine.schedule(at, self.node.entity, "radio_rx", pkt)
        self.engine.run_until(at)

    def drain(self, t: int):
        self.engine.run_until(t)


def crossing_flight_setup(duration_s: float = 60.0, travel_s: float = 50.0):
    """A 3x4 grid and a head trace that walks the drone eastward across cells.

    The drone starts at the grid centre (750, 500); walking forward to the
    tracking-space edge at gain 300 commands a straight line to x = 1440,
    crossing several closest-3 cell boundaries on the way.
    """
    scenario = scenario_from_dict(
        {
            "seed": 1234,
            "duration_s": duration_s,
            "grid": {"rows": 3, "cols": 4, "spacing_m": 500.0},
            "video": {"bitrate_min_bps": 4e6, "bitrate_max_bps": 4e6,
                      "bitrate_initial_bps": 4e6},
            "flight": {"max_speed_mps": 40.0},
            "control": {"position_gain": 300.0},
        }
    )
    trace = HeadTrace.from_rows(
        [
            (0.0, 0.0, 0.0, 0.0, 0.0),
            (travel_s * 1000.0, 0.0, 0.0, 0.0, 2.3),
        ]
    )
    return scenario, trace
