"""Domain records exchanged between entities: frames, packets, ACKs, poses, setpoints."""

import math
import zlib
from dataclasses import dataclass, replace


def normalize_angle(deg: float) -> float:
    """Map an angle to [-180, 180)."""
    return (deg + 180.0) % 360.0 - 180.0


def shortest_angle(deg: float) -> float:
    """Signed shortest rotation equivalent to ``deg``."""
    return normalize_angle(deg)


GIMBAL_MIN_DEG = -90.0
GIMBAL_MAX_DEG = 30.0


@dataclass(frozen=True, slots=True)
class Frame:
    frame_seq: int
    capture_ts: int
    camera_yaw: float
    gimbal_pitch: float
    payload: bytes
    checksum: int

    @staticmethod
    def payload_checksum(payload: bytes) -> int:
        return zlib.crc32(payload) & 0xFFFFFFFF


@dataclass(frozen=True, slots=True)
class Packet:
    """Atomic radio unit.

    ``fragment_idx`` is ``first_fragment_of_block + index_in_block`` for both
    data and parity packets, so the block's base fragment index is always
    recoverable as ``fragment_idx - index_in_block``.  Frame-level metadata
    (length, checksum, camera orientation) rides in every header so that any
    single packet is enough to describe its frame's geometry.
    """

    frame_seq: int
    fragment_idx: int
    block_id: int
    index_in_block: int
    kind: str  # "data" | "parity"
    k: int
    r: int
    capture_ts: int
    drone_pos: tuple[float, float, float]
    channel: int
    payload: bytes
    frame_len: int
    frame_checksum: int
    camera_yaw: float
    gimbal_pitch: float

    @property
    def is_data(self) -> bool:
        return self.kind == "data"

    @property
    def block_first_fragment(self) -> int:
        return self.fragment_idx - self.index_in_block

    def with_channel(self, channel: int) -> "Packet":
        return replace(self, channel=channel)


@dataclass(frozen=True, slots=True)
class Ack:
    receiver_id: int
    issued_at: int
    bytes_received: int
    span_us: int


@dataclass(frozen=True, slots=True)
class Setpoint:
    target_yaw: float
    target_gimbal_pitch: float
    target_position: tuple[float, float, float]
    issued_at: int


@dataclass(slots=True)
class DronePose:
    position: tuple[float, float, float]
    yaw: float = 0.0
    gimbal_pitch: float = 0.0

    def __post_init__(self) -> None:
        self.yaw = normalize_angle(self.yaw)
        self.gimbal_pitch = min(max(self.gimbal_pitch, GIMBAL_MIN_DEG), GIMBAL_MAX_DEG)

    def copy(self) -> "DronePose":
        return DronePose(self.position, self.yaw, self.gimbal_pitch)


@dataclass(frozen=True, slots=True)
class HeadSample:
    t: int
    yaw: float
    pitch: float
    pos: tuple[float, float]


def ground_distance(a: tuple[float, ...], b: tuple[float, ...]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def slant_distance(drone_pos: tuple[float, float, float], rx_pos: tuple[float, float]) -> float:
    return math.sqrt(
        (drone_pos[0] - rx_pos[0]) ** 2 + (drone_pos[1] - rx_pos[1]) ** 2 + drone_pos[2] ** 2
    )
