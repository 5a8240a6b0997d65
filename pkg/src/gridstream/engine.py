"""Deterministic discrete-event engine: simulated clock, event queue, seeded RNG streams.

Time is integer microseconds since scenario start.  Events with equal fire
times are delivered in insertion order, which makes every run a total order
and therefore bit-reproducible for a fixed (scenario, seed).
"""

import hashlib
import heapq
import random
from dataclasses import dataclass, field
from typing import Any, Callable

US_PER_S = 1_000_000


def sec_to_us(seconds: float) -> int:
    return round(seconds * US_PER_S)


def ms_to_us(ms: float) -> int:
    return round(ms * 1000)


class SchedulingError(Exception):
    """Raised when an event is scheduled in the past."""


@dataclass(frozen=True, slots=True)
class Event:
    fire_at: int
    seq: int
    target: str
    kind: str
    payload: Any = None


@dataclass(order=True, slots=True)
class _HeapEntry:
    fire_at: int
    seq: int
    event: Event = field(compare=False)


class EventLoop:
    """Priority-queue event loop with a monotone integer-microsecond clock."""

    def __init__(self) -> None:
        self.now: int = 0
        self._heap: list[_HeapEntry] = []
        self._seq = 0
        self._handlers: dict[str, Callable[[Event], None]] = {}

    def register(self, entity_id: str, handler: Callable[[Event], None]) -> None:
        self._handlers[entity_id] = handler

    def schedule(self, fire_at: int, target: str, kind: str, payload: Any = None) -> Event:
        if fire_at < self.now:
            raise SchedulingError(
                f"cannot schedule {kind!r} for {target!r} at t={fire_at}us: clock is {self.now}us"
            )
        ev = Event(fire_at=fire_at, seq=self._seq, target=target, kind=kind, payload=payload)
        self._seq += 1
        heapq.heappush(self._heap, _HeapEntry(fire_at, ev.seq, ev))
        return ev

    def schedule_in(self, delay_us: int, target: str, kind: str, payload: Any = None) -> Event:
        return self.schedule(self.now + delay_us, target, kind, payload)

    def run_until(self, t_end: int) -> int:
        """Process every event with fire_at <= t_end; leave the clock at t_end."""
        if t_end < self.now:
            raise SchedulingError(f"run_until({t_end}) is before current clock {self.now}")
        while self._heap and self._heap[0].fire_at <= t_end:
            entry = heapq.heappop(self._heap)
            self.now = entry.fire_at
            handler = self._handlers.get(entry.event.target)
            if handler is None:
                raise KeyError(f"no handler registered for entity {entry.event.target!r}")
            handler(entry.event)
        self.now = t_end
        return self.now

    def pending(self) -> int:
        return len(self._heap)


class RngStreams:
    """Per-entity PRNG streams derived from one scenario seed.

    Each stream is seeded from sha256(seed, name) so that adding or removing
    one entity never perturbs the draws of any other.
    """

    def __init__(self, seed: int) -> None:
        self.seed = seed
        self._streams: dict[str, random.Random] = {}

    def stream(self, name: str) -> random.Random:
        rng = self._streams.get(name)
        if rng is None:
            digest = hashlib.sha256(f"{self.seed}/{name}".encode()).digest()
            rng = random.Random(int.from_bytes(digest[:8], "big"))
            self._streams[name] = rng
        return rng
