"""Systematic MDS erasure code over GF(256) for packet-level loss repair.

Any k of the k+r coded packets reconstruct the k originals.  The encoding
matrix is a Vandermonde matrix normalized so its top k rows are the identity
(data packets go on the air unmodified); every k-row submatrix of a
Vandermonde matrix with distinct evaluation points is invertible, and that
property survives the normalization, which is exactly the MDS guarantee.

Symbol arithmetic uses the 0x11d field polynomial.  Payload operations run at
C speed: scalar multiplication via bytes.translate against precomputed
256-byte tables, accumulation via big-integer XOR.
"""

GF_POLY = 0x11D
FIELD_SIZE = 256

_EXP = [0] * 512
_LOG = [0] * 256
_x = 1
for _i in range(255):
    _EXP[_i] = _x
    _LOG[_x] = _i
    _x <<= 1
    if _x & 0x100:
        _x ^= GF_POLY
for _i in range(255, 512):
    _EXP[_i] = _EXP[_i - 255]


def gf_mul(a: int, b: int) -> int:
    if a == 0 or b == 0:
        return 0
    return _EXP[_LOG[a] + _LOG[b]]


def gf_inv(a: int) -> int:
    if a == 0:
        raise ZeroDivisionError("no inverse of 0 in GF(256)")
    return _EXP[255 - _LOG[a]]


_MUL_TABLE = [bytes(gf_mul(c, x) for x in range(256)) for c in range(256)]


def _mul_bytes(c: int, data: bytes) -> bytes:
    if c == 0:
        return bytes(len(data))
    if c == 1:
        return data
    return data.translate(_MUL_TABLE[c])


def _xor_bytes(a: bytes, b: bytes) -> bytes:
    n = len(a)
    return (int.from_bytes(a, "big") ^ int.from_bytes(b, "big")).to_bytes(n, "big")


def _invert_matrix(m: list[list[int]]) -> list[list[int]]:
    """Gauss-Jordan inversion in GF(256)."""
    n = len(m)
    a = [row[:] + [1 if i == j else 0 for j in range(n)] for i, row in enumerate(m)]
    for col in range(n):
        pivot = next((row for row in range(col, n) if a[row][col] != 0), None)
        if pivot is None:
            raise ValueError("singular matrix")
        a[col], a[pivot] = a[pivot], a[col]
        inv = gf_inv(a[col][col])
        a[col] = [gf_mul(inv, v) for v in a[col]]
        for row in range(n):
            if row != col and a[row][col] != 0:
                factor = a[row][col]
                a[row] = [v ^ gf_mul(factor, p) for v, p in zip(a[row], a[col])]
    return [row[n:] for row in a]


class UnrecoverableBlockError(Exception):
    """Fewer than k coded packets survived; the block cannot be rebuilt."""


class ErasureCodec:
    """Encoder/decoder for one (k, r) block geometry."""

    def __init__(self, k: int, r: int) -> None:
        if k < 1 or r < 0:
            raise ValueError(f"invalid block geometry k={k}, r={r}")
        if k + r > FIELD_SIZE:
            raise ValueError(f"k+r={k + r} exceeds the GF(256) limit of {FIELD_SIZE}")
        self.k = k
        self.r = r
        vand = [[_pow(x, j) for j in range(k)] for x in range(k + r)]
        top_inv = _invert_matrix([row[:] for row in vand[:k]])
        self.matrix = [
            [_dot(vand[i], [top_inv[t][j] for t in range(k)]) for j in range(k)]
            for i in range(k + r)
        ]

    def encode(self, data: list[bytes]) -> list[bytes]:
        """Return the r parity payloads for exactly k equal-length data payloads."""
        if len(data) != self.k:
            raise ValueError(f"encode expects exactly k={self.k} payloads, got {len(data)}")
        size = len(data[0])
        if any(len(d) != size for d in data):
            raise ValueError("all payloads in a block must have equal length")
        parity = []
        for i in range(self.k, self.k + self.r):
            acc = bytes(size)
            for j, coeff in enumerate(self.matrix[i]):
                if coeff:
                    acc = _xor_bytes(acc, _mul_bytes(coeff, data[j]))
            parity.append(acc)
        return parity

    def decode(self, shards: dict[int, bytes]) -> list[bytes]:
        """Rebuild all k data payloads from any k of the k+r coded payloads.

        ``shards`` maps coded index (0..k-1 data, k..k+r-1 parity) to payload.
        Raises UnrecoverableBlockError when fewer than k shards are present.
        """
        if len(shards) < self.k:
            raise UnrecoverableBlockError(
                f"need {self.k} of {self.k + self.r} packets, have {len(shards)}"
            )
        if any(i < 0 or i >= self.k + self.r for i in shards):
            raise ValueError("shard index out of range")
        data_present = [i for i in range(self.k) if i in shards]
        if len(data_present) == self.k:
            return [shards[i] for i in range(self.k)]

        use = (data_present + sorted(i for i in shards if i >= self.k))[: self.k]
        sub = [self.matrix[i] for i in use]
        inv = _invert_matrix(sub)
        size = len(shards[use[0]])
        out: list[bytes] = [b""] * self.k
        for i in data_present:
            out[i] = shards[i]
        for i in range(self.k):
            if i in shards:
                continue
            acc = bytes(size)
            for j, idx in enumerate(use):
                coeff = inv[i][j]
                if coeff:
                    acc = _xor_bytes(acc, _mul_bytes(coeff, shards[idx]))
            out[i] = acc
        return out


def _pow(x: int, n: int) -> int:
    if n == 0:
        return 1
    if x == 0:
        return 0
    return _EXP[(_LOG[x] * n) % 255]


def _dot(a: list[int], b: list[int]) -> int:
    acc = 0
    for x, y in zip(a, b):
        acc ^= gf_mul(x, y)
    return acc


_codec_cache: dict[tuple[int, int], ErasureCodec] = {}


def codec_for(k: int, r: int) -> ErasureCodec:
    key = (k, r)
    if key not in _codec_cache:
        _codec_cache[key] = ErasureCodec(k, r)
    return _codec_cache[key]
