"""Acceptance suite: one test per release criterion, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines on success; without ``-s`` they appear in captured output on failure.
"""

import itertools
import math
import random
import time
from contextlib import contextmanager

from gridstream.cli import run_batch
from gridstream.drone import build_block_packets, packetize
from gridstream.fec import ErasureCodec, UnrecoverableBlockError
from gridstream.headtrace import HeadTrace
from gridstream.metrics import MetricsAggregator
from gridstream.scenario import scenario_from_dict
from gridstream.simulation import Simulation

from helpers import ReceiverHarness, crossing_flight_setup, lossless_radio, make_frame


@contextmanager
def criterion(num: int, title: str):
    started = time.monotonic()
    try:
        yield
    except BaseException:
        print(f"\nACCEPTANCE {num}: FAIL - {title}")
        raise
    print(f"\nACCEPTANCE {num}: PASS - {title} ({time.monotonic() - started:.1f}s)")


def test_criterion_1_fec_exhaustive_recovery():
    with criterion(1, "FEC exhaustive recovery (k=8, r=2, all erasure patterns)"):
        started = time.monotonic()
        codec = ErasureCodec(8, 2)
        rng = random.Random(20240801)
        data = [rng.randbytes(1400) for _ in range(8)]
        parity = codec.encode(data)
        shards_full = dict(enumerate(data + parity))

        for n_erase, expect_ok in ((1, True), (2, True)):
            for erased in itertools.combinations(range(10), n_erase):
                shards = {i: p for i, p in shards_full.items() if i not in erased}
                decoded = codec.decode(shards)
                assert decoded == data, f"pattern {erased} failed to round-trip"
        for erased in itertools.combinations(range(10), 3):
            shards = {i: p for i, p in shards_full.items() if i not in erased}
            try:
                codec.decode(shards)
            except UnrecoverableBlockError:
                continue
            raise AssertionError(f"3-erasure pattern {erased} decoded unexpectedly")
        elapsed = time.monotonic() - started
        assert elapsed < 5.0, f"runtime {elapsed:.2f}s exceeds the 5 s budget"


class _UnionLossCounter:
    """Counts transmitted vs server-unique data packets for frames below a cutoff."""

    def __init__(self, cutoff_frame: int):
        self.cutoff = cutoff_frame
        self.tx = 0
        self.unique = 0

    def __call__(self, record: dict) -> None:
        kind = record["kind"]
        if kind == "packet_tx":
            if record["pkt_kind"] == "data" and record["frame"] < self.cutoff:
                self.tx += 1
        elif kind == "ingest":
            if not record["dup"] and record["frame"] < self.cutoff:
                self.unique += 1


def _aggregation_run(n_receivers: int, seed: int) -> tuple[int, int]:
    duration_s = 73.0
    measured_s = 70.0
    scenario = scenario_from_dict(
        {
            "seed": seed,
            "duration_s": duration_s,
            "grid": {"rows": 1, "cols": n_receivers, "spacing_m": 10.0},
            "radio": {
                "p_base": 0.2, "r_reliable_m": 50_000.0, "d_max_m": 100_000.0,
                "channel_capacity_bps": 20e6, "channels": [0, 1],
            },
            "fec": {"k": 8, "r": 0},  # FEC off: no parity
            "video": {"bitrate_min_bps": 16e6, "bitrate_max_bps": 16e6,
                      "bitrate_initial_bps": 16e6},
        }
    )
    counter = _UnionLossCounter(cutoff_frame=int(measured_s) * scenario.video.fps)
    sim = Simulation(scenario, sinks=[counter])
    sim.run()
    return counter.tx, counter.unique


def test_criterion_2_aggregation_gain():
    with criterion(2, "aggregation gain: 3-receiver union loss 0.8% vs 20% single"):
        started = time.monotonic()
        tx3, uniq3 = _aggregation_run(3, seed=2024)
        assert tx3 >= 100_000, f"only {tx3} packets measured"
        loss3 = 1.0 - uniq3 / tx3
        assert abs(loss3 - 0.008) <= 0.002, f"union loss {loss3:.4%} outside 0.8% +/- 0.2%"

        tx1, uniq1 = _aggregation_run(1, seed=2025)
        assert tx1 >= 100_000
        loss1 = 1.0 - uniq1 / tx1
        assert abs(loss1 - 0.20) <= 0.005, f"single loss {loss1:.4%} outside 20% +/- 0.5%"
        elapsed = time.monotonic() - started
        assert elapsed < 30.0, f"runtime {elapsed:.1f}s exceeds the 30 s budget"


def test_criterion_3_gate_handover_oracle():
    with criterion(3, "closest-3 gate equals brute force at every recomputation"):
        scenario, trace = crossing_flight_setup(duration_s=60.0, travel_s=50.0)
        positions = scenario.receiver_positions()
        audits: list[tuple[tuple, frozenset]] = []
        aggregator = MetricsAggregator(scenario)
        sim = Simulation(
            scenario,
            trace=trace,
            sinks=[aggregator],
            gate_audit=lambda pos, gate: audits.append((pos, gate)),
        )
        sim.run()
        report = aggregator.finalize()

        assert len(audits) > 10_000
        for drone_pos, upload_set in audits:
            oracle = frozenset(
                sorted(
                    positions,
                    key=lambda rid: (math.dist(drone_pos[:2], positions[rid]), rid),
                )[:3]
            )
            assert upload_set == oracle, f"gate mismatch at {drone_pos}"
        assert report.handovers >= 2, f"only {report.handovers} handover events"


def test_criterion_4_rate_controller_convergence():
    with criterion(4, "bitrate converges to beta*capacity within 2 s of a step"):
        scenario = scenario_from_dict(
            {
                "seed": 99,
                "duration_s": 20.0,
                "grid": {"rows": 1, "cols": 1, "spacing_m": 10.0},
                "radio": {"p_base": 0.0, "r_reliable_m": 50_000.0, "d_max_m": 100_000.0,
                          "channel_capacity_bps": 8e6, "channels": [0]},
                "video": {"bitrate_min_bps": 1e6, "bitrate_max_bps": 12e6,
                          "bitrate_initial_bps": 4e6},
            }
        )
        rates: list[tuple[int, float, float | None]] = []

        def sink(rec):
            if rec["kind"] == "rate_update":
                rates.append((rec["t_us"], rec["bitrate_bps"], rec["ewma_bps"]))

        sim = Simulation(scenario, sinks=[sink])
        sim.engine.register("hook", lambda ev: sim.radio.set_capacity(4e6))
        sim.start()
        sim.engine.schedule(10_000_000, "hook", "capacity_step")
        sim.run()

        beta = scenario.video.beta
        target = beta * 4e6
        settled = [r for r in rates if r[0] >= 12_000_000]
        assert settled
        for t_us, bitrate, _ in settled:
            assert abs(bitrate - target) <= 0.15 * target, (
                f"bitrate {bitrate/1e6:.2f} Mbit/s at t={t_us/1e6:.2f}s "
                f"outside +/-15% of {target/1e6:.2f}"
            )
        for t_us, bitrate, ewma in rates:
            if ewma is not None:
                assert bitrate <= beta * ewma + 1e-6, (
                    f"bitrate exceeded beta*ewma at t={t_us/1e6:.2f}s"
                )


def _fast_view_run(yaw_step: float, yaw_rate: float, seed: int = 5):
    scenario = scenario_from_dict(
        {
            "seed": seed,
            "duration_s": 8.0,
            "grid": {"rows": 1, "cols": 1, "spacing_m": 10.0},
            "radio": lossless_radio(),
            "playout": {"budget_ms": 300.0},  # forced end-to-end video latency
            "flight": {"max_speed_mps": 0.0, "max_yaw_rate_dps": yaw_rate,
                       "max_gimbal_rate_dps": 0.0},
        }
    )
    trace = HeadTrace.from_rows(
        [
            (0.0, 0.0, 0.0, 0.0, 0.0),
            (4999.0, 0.0, 0.0, 0.0, 0.0),
            (5000.0, yaw_step, 0.0, 0.0, 0.0),
        ]
    )
    renders, heads = [], []

    def sink(rec):
        if rec["kind"] == "render":
            renders.append(rec)
        elif rec["kind"] == "head":
            heads.append(rec)

    Simulation(scenario, trace=trace, sinks=[sink]).run()
    t_step = next(h["t_us"] for h in heads if h["yaw_deg"] == yaw_step)
    after = [r for r in renders if r["t_us"] >= t_step]
    return t_step, after


def test_criterion_5_fast_view_motion_to_photon():
    with criterion(5, "display window absorbs sub-margin head steps at the next tick"):
        # 8 deg step (< 10 deg margin): fully reflected at the next render tick
        # even though the displayed video is 300 ms stale.
        t_step, after = _fast_view_run(8.0, yaw_rate=0.0)
        first = after[0]
        assert first["t_us"] - t_step <= 33_400
        assert first["view_yaw_deg"] == 8.0
        assert not first["saturated_h"]
        # Delivered frames really are 300 ms old: the drone never turned.
        assert all(r["view_yaw_deg"] == 8.0 for r in after)

        # 15 deg step: only the 10 deg margin is available while the drone
        # cannot turn.
        t_step, after = _fast_view_run(15.0, yaw_rate=0.0)
        assert after[0]["view_yaw_deg"] == 10.0
        assert after[0]["saturated_h"]
        assert all(r["view_yaw_deg"] == 10.0 for r in after)

        # Same step with the drone able to turn: the view converges to the
        # full 15 deg once fresh frames catch up, and saturation clears.
        t_step, after = _fast_view_run(15.0, yaw_rate=90.0)
        assert after[0]["view_yaw_deg"] == 10.0 and after[0]["saturated_h"]
        full = next(
            r for r in after
            if r["view_yaw_deg"] is not None and abs(r["view_yaw_deg"] - 15.0) < 1e-9
        )
        assert not full["saturated_h"]
        assert full["t_us"] - t_step <= 1_000_000


def test_criterion_6_lossless_roundtrip():
    with criterion(6, "zero radio loss: delivered stream equals source, 60 s"):
        scenario = scenario_from_dict(
            {"seed": 7, "duration_s": 60.0, "radio": lossless_radio()}
        )
        captures: dict[int, int] = {}
        delivered: list[dict] = []

        def sink(rec):
            if rec["kind"] == "frame_capture":
                captures[rec["frame"]] = rec["checksum"]
            elif rec["kind"] == "frame_delivered":
                delivered.append(rec)

        aggregator = MetricsAggregator(scenario)
        sim = Simulation(scenario, sinks=[sink, aggregator])
        sim.run()
        report = aggregator.finalize()

        assert report.frames_eligible > 0
        assert report.frames_delivered == report.frames_eligible
        assert report.delivery_ratio == 1.0
        assert report.frames_skipped == 0 and report.freezes == 0
        for rec in delivered:
            assert rec["checksum"] == captures[rec["frame"]]
        seqs = [r["frame"] for r in delivered]
        assert seqs == sorted(set(seqs))


def test_criterion_7_determinism(tmp_path):
    with criterion(7, "identical (scenario, trace, seed) gives byte-identical outputs"):
        scenario, trace = crossing_flight_setup(duration_s=10.0, travel_s=8.0)
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        run_batch(scenario, trace, out_a)
        scenario_again, trace_again = crossing_flight_setup(duration_s=10.0, travel_s=8.0)
        run_batch(scenario_again, trace_again, out_b)
        for name in ("events.ndjson", "snapshots.ndjson", "report.json"):
            a, b = (out_a / name).read_bytes(), (out_b / name).read_bytes()
            assert a == b, f"{name} differs between identical runs"
        assert (out_a / "events.ndjson").stat().st_size > 100_000


def test_criterion_8_ack_cadence():
    with criterion(8, "ACK emitted exactly every tenth received packet"):
        for n_packets in (9, 10, 25, 137):
            h = ReceiverHarness()
            t = 1_000
            for seq in range(n_packets):
                frame = make_frame(1400, seq)
                pkt = build_block_packets(
                    frame, packetize(frame, 1400), 0, seq, 1400, 1, 0, (0.0, 0.0, 50.0)
                )[0]
                h.feed(pkt, t)
                t += 1_000
            h.drain(t + 10_000)
            acks = [p for kind, p in h.downlink if kind == "ack"]
            assert len(acks) == n_packets // 10, (
                f"{n_packets} packets produced {len(acks)} ACKs, "
                f"expected {n_packets // 10}"
            )
