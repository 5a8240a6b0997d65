"""Live operator-console backend: real-time stepping over one NDJSON socket.

Exactly two logical activities run here: the simulation stepper thread and
connection I/O.  They exchange only complete immutable messages through
queues; the simulation never blocks on the socket.  With no client connected
the clock idles, and a reconnect resumes where it paused.
"""

import json
import queue
import socket
import threading
import time

from .engine import US_PER_S
from .messages import HeadSample
from .scenario import Scenario
from .simulation import Simulation

SCHEMA_VERSION = 1
LIVE_DURATION_US = 10**15  # effectively unbounded; live mode runs until stopped
STEP_QUANTUM_US = 50_000


class LiveServer:
    def __init__(self, scenario: Scenario, host: str = "127.0.0.1", port: int = 0) -> None:
        self.scenario = scenario
        self._inbox: queue.Queue = queue.Queue()
        self._outbox: queue.Queue = queue.Queue()
        self._connected = threading.Event()
        self._stopped = threading.Event()
        self._client_lock = threading.Lock()
        self._client: socket.socket | None = None

        self.sim = Simulation(scenario, trace=None, sinks=[self._snapshot_sink])
        self.sim.duration_us = LIVE_DURATION_US
        self.sim.drone.duration_us = LIVE_DURATION_US
        self.sim.server.duration_us = LIVE_DURATION_US

        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._listener.bind((host, port))
        self._listener.listen(2)
        self._listener.settimeout(0.2)
        self.port = self._listener.getsockname()[1]

        self._sim_thread = threading.Thread(target=self._step_loop, daemon=True)
        self._writer_thread = threading.Thread(target=self._write_loop, daemon=True)

    # -- sinks ---------------------------------------------------------------

    def _snapshot_sink(self, record: dict) -> None:
        if record["kind"] == "snapshot":
            self._outbox.put(json.dumps(record["snapshot"]))

    # -- lifecycle -------------------------------------------------------------

    def serve_forever(self) -> None:
        self._sim_thread.start()
        self._writer_thread.start()
        while not self._stopped.is_set():
            try:
                conn, _addr = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            self._handle_connection(conn)
        self._listener.close()

    def stop(self) -> None:
        self._stopped.set()
        self._connected.clear()
        with self._client_lock:
            if self._client is not None:
                _close_quietly(self._client)
                self._client = None
        try:
            self._listener.close()
        except OSError:
            pass

    # -- connection handling ------------------------------------------------------

    def _handle_connection(self, conn: socket.socket) -> None:
        with self._client_lock:
            if self._client is not None:
                msg = json.dumps({"type": "error", "message": "console already connected"})
                try:
                    conn.sendall((msg + "\n").encode())
                finally:
                    _close_quietly(conn)
                return
            self._client = conn
        hello = {
            "type": "hello",
            "schema_version": SCHEMA_VERSION,
            "scenario": {
                "receivers": [
                    {"id": rid, "x": pos[0], "y": pos[1]}
                    for rid, pos in sorted(self.scenario.receiver_positions().items())
                ],
                "grid_spacing_m": self.scenario.grid.spacing_m,
                "tracking_half_m": self.scenario.control.tracking_half_m,
                "snapshot_hz": self.scenario.control.snapshot_hz,
                "margin_h_deg": self.sim.server.geom.margin_h,
                "margin_v_deg": self.sim.server.geom.margin_v,
                "home": list(self.scenario.home_position()),
            },
        }
        try:
            conn.sendall((json.dumps(hello) + "\n").encode())
        except OSError:
            self._drop_client(conn)
            return
        self._connected.set()
        reader = threading.Thread(target=self._read_loop, args=(conn,), daemon=True)
        reader.start()

    def _drop_client(self, conn: socket.socket) -> None:
        with self._client_lock:
            if self._client is conn:
                self._client = None
                self._connected.clear()
        _close_quietly(conn)

    def _read_loop(self, conn: socket.socket) -> None:
        try:
            f = conn.makefile("r", encoding="utf-8")
            for line in f:
                line = line.strip()
                if not line:
                    continue
                try:
                    msg = json.loads(line)
                except json.JSONDecodeError:
                    continue
                if msg.get("type") == "input":
                    self._inbox.put(msg)
        except OSError:
            pass
        finally:
            self._drop_client(conn)

    def _write_loop(self) -> None:
        while not self._stopped.is_set():
            try:
                line = self._outbox.get(timeout=0.2)
            except queue.Empty:
                continue
            with self._client_lock:
                conn = self._client
            if conn is None:
                continue  # drop snapshots while disconnected
            try:
                conn.sendall((line + "\n").encode())
            except OSError:
                self._drop_client(conn)

    # -- simulation stepping ----------------------------------------------------------

    def _step_loop(self) -> None:
        anchor: float | None = None
        while not self._stopped.is_set():
            if not self._connected.is_set():
                anchor = None
                time.sleep(0.02)
                continue
            if anchor is None:
                anchor = time.monotonic() - self.sim.engine.now / US_PER_S
            self._drain_inputs()
            target_us = int((time.monotonic() - anchor) * US_PER_S)
            if target_us <= self.sim.engine.now:
                time.sleep(0.002)
                continue
            step_to = min(target_us, self.sim.engine.now + STEP_QUANTUM_US)
            self.sim.advance_to(step_to)

    def _drain_inputs(self) -> None:
        while True:
            try:
                msg = self._inbox.get_nowait()
            except queue.Empty:
                return
            try:
                sample = HeadSample(
                    t=self.sim.engine.now,
                    yaw=float(msg["yaw_deg"]),
                    pitch=float(msg["pitch_deg"]),
                    pos=(float(msg["x_m"]), float(msg["y_m"])),
                )
            except (KeyError, TypeError, ValueError):
                continue
            self.sim.inject_head(sample)


def _close_quietly(conn: socket.socket) -> None:
    try:
        conn.shutdown(socket.SHUT_RDWR)
    except OSError:
        pass
    try:
        conn.close()
    except OSError:
        pass
