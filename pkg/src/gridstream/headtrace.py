"""Head-motion traces: the batch-mode stand-in for a live headset.

CSV with the exact header ``t_ms,yaw_deg,pitch_deg,x_m,y_m``; samples are
linearly interpolated, and the trace holds its last value past the end.
"""

import bisect
import csv
from dataclasses import dataclass
from pathlib import Path

from .messages import HeadSample

TRACE_HEADER = ["t_ms", "yaw_deg", "pitch_deg", "x_m", "y_m"]


class TraceError(ValueError):
    """Head trace failed to parse or validate."""


@dataclass
class HeadTrace:
    times_us: list[int]
    yaws: list[float]
    pitches: list[float]
    xs: list[float]
    ys: list[float]

    @classmethod
    def stationary(cls) -> "HeadTrace":
        return cls([], [], [], [], [])

    @classmethod
    def from_rows(cls, rows: list[tuple[float, float, float, float, float]],
                  tracking_half_m: float = 2.3) -> "HeadTrace":
        times, yaws, pitches, xs, ys = [], [], [], [], []
        for i, (t_ms, yaw, pitch, x, y) in enumerate(rows):
            t_us = round(t_ms * 1000)
            if i == 0 and t_us != 0:
                raise TraceError("trace: first sample must be at t_ms=0")
            if times and t_us <= times[-1]:
                raise TraceError(f"trace row {i}: t_ms must be strictly increasing")
            if abs(x) > tracking_half_m or abs(y) > tracking_half_m:
                raise TraceError(
                    f"trace row {i}: position outside the ±{tracking_half_m} m tracking space"
                )
            times.append(t_us)
            yaws.append(float(yaw))
            pitches.append(float(pitch))
            xs.append(float(x))
            ys.append(float(y))
        return cls(times, yaws, pitches, xs, ys)

    @classmethod
    def load(cls, path: str | Path, tracking_half_m: float = 2.3) -> "HeadTrace":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise TraceError(f"cannot read trace file {path}: {exc}") from exc
        reader = csv.reader(text.splitlines())
        try:
            header = next(reader)
        except StopIteration:
            raise TraceError(f"trace file {path} is empty (missing header)") from None
        if [h.strip() for h in header] != TRACE_HEADER:
            raise TraceError(
                f"trace file {path}: header must be {','.join(TRACE_HEADER)}"
            )
        rows = []
        for i, row in enumerate(reader):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 5:
                raise TraceError(f"trace file {path} row {i}: expected 5 columns")
            try:
                rows.append(tuple(float(cell) for cell in row))
            except ValueError as exc:
                raise TraceError(f"trace file {path} row {i}: {exc}") from exc
        return cls.from_rows(rows, tracking_half_m)

    def __len__(self) -> int:
        return len(self.times_us)

    def sample(self, t_us: int) -> HeadSample:
        if not self.times_us:
            return HeadSample(t=t_us, yaw=0.0, pitch=0.0, pos=(0.0, 0.0))
        if t_us <= self.times_us[0]:
            i = 0
            return HeadSample(t_us, self.yaws[i], self.pitches[i], (self.xs[i], self.ys[i]))
        if t_us >= self.times_us[-1]:
            i = len(self.times_us) - 1
            return HeadSample(t_us, self.yaws[i], self.pitches[i], (self.xs[i], self.ys[i]))
        hi = bisect.bisect_right(self.times_us, t_us)
        lo = hi - 1
        t0, t1 = self.times_us[lo], self.times_us[hi]
        w = (t_us - t0) / (t1 - t0)

        def lerp(a: list[float]) -> float:
            return a[lo] + (a[hi] - a[lo]) * w

        return HeadSample(
            t=t_us,
            yaw=lerp(self.yaws),
            pitch=lerp(self.pitches),
            pos=(lerp(self.xs), lerp(self.ys)),
        )
