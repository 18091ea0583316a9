"""Counter-based random streams.

Every random draw in the package is a pure function of ``(seed, stream_id,
position)``.  The underlying block cipher is Philox4x32-10 (Salmon, Moraes,
Dror & Shaw, SC'11), evaluated with numpy so that thousands of streams can be
advanced in one vectorized call.  The 64-bit seed is the Philox key, the
128-bit counter is ``(block_lo, block_hi, stream_lo, stream_hi)``, and each
block yields four consecutive 32-bit words of the stream.

Because a trial's stream depends only on its index, a campaign split across
any number of workers consumes exactly the same random words.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK32 = np.uint64(0xFFFFFFFF)
_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_ROUNDS = 10
_U64 = (1 << 64) - 1


def philox4x32(c0, c1, c2, c3, k0: int, k1: int):
    """Philox4x32-10 on arrays of 32-bit counter words (held in uint64).

    Returns the four output words as uint64 arrays with values < 2**32.
    """
    x0 = np.asarray(c0, dtype=np.uint64)
    x1 = np.asarray(c1, dtype=np.uint64)
    x2 = np.asarray(c2, dtype=np.uint64)
    x3 = np.asarray(c3, dtype=np.uint64)
    x0, x1, x2, x3 = np.broadcast_arrays(x0, x1, x2, x3)
    for r in range(_ROUNDS):
        key0 = np.uint64((k0 + r * _W0) & 0xFFFFFFFF)
        key1 = np.uint64((k1 + r * _W1) & 0xFFFFFFFF)
        p0 = x0 * _M0
        p1 = x2 * _M1
        x0, x1, x2, x3 = (
            (p1 >> np.uint64(32)) ^ x1 ^ key0,
            p1 & _MASK32,
            (p0 >> np.uint64(32)) ^ x3 ^ key1,
            p0 & _MASK32,
        )
    return x0, x1, x2, x3


def stream_words(seed: int, streams, count: int, start: int = 0) -> np.ndarray:
    """Words ``start .. start+count-1`` of each stream, shape ``(len(streams), count)``.

    ``streams`` is any integer array-like of stream ids; the dtype of the
    result is uint64 with every value below ``2**32``.
    """
    streams = np.atleast_1d(np.asarray(streams, dtype=np.uint64))
    if count <= 0:
        return np.zeros((streams.size, 0), dtype=np.uint64)
    seed &= _U64
    k0, k1 = seed & 0xFFFFFFFF, seed >> 32
    first = start // 4
    last = (start + count - 1) // 4
    blocks = np.arange(first, last + 1, dtype=np.uint64)
    s_lo = (streams & _MASK32)[:, None]
    s_hi = (streams >> np.uint64(32))[:, None]
    b_lo = (blocks & _MASK32)[None, :]
    b_hi = (blocks >> np.uint64(32))[None, :]
    out = philox4x32(b_lo, b_hi, s_lo, s_hi, k0, k1)
    words = np.stack(out, axis=-1).reshape(streams.size, -1)
    offset = start - 4 * first
    return words[:, offset:offset + count]


def words_to_uniform(hi: np.ndarray, lo: np.ndarray) -> np.ndarray:
    """Two 32-bit words -> float64 uniform on [0, 1) with 53 random bits."""
    a = (hi >> np.uint64(5)).astype(np.float64)
    b = (lo >> np.uint64(6)).astype(np.float64)
    return (a * 67108864.0 + b) / 9007199254740992.0


def bernoulli_threshold(p: float) -> int:
    """Integer threshold so that ``word < threshold`` has probability ~p.

    Resolution is 2**-32; p = 1 gives a threshold above every word.
    """
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability out of range: {p}")
    return int(round(p * 4294967296.0))


def bounded(words: np.ndarray, k) -> np.ndarray:
    """Map 32-bit words to integers in ``[0, k)`` by multiply-shift.

    The bias is at most ``k / 2**32`` per draw.
    """
    return ((words * np.asarray(k, dtype=np.uint64)) >> np.uint64(32)).astype(np.int64)


@dataclass(frozen=True)
class RandomSource:
    """A single reproducible stream: word ``j`` is a function of (seed, stream_id, j)."""

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            v = getattr(self, name)
            if not 0 <= v <= _U64:
                raise ValueError(f"{name} must be a 64-bit unsigned integer, got {v}")

    def words(self, count: int, start: int = 0) -> np.ndarray:
        return stream_words(self.seed, [self.stream_id], count, start)[0]

    def uniforms(self, count: int, start: int = 0) -> np.ndarray:
        """``count`` uniforms on [0,1); uniform ``j`` uses words ``2j`` and ``2j+1``."""
        w = self.words(2 * count, 2 * start)
        return words_to_uniform(w[0::2], w[1::2])

    def child(self, tag: int) -> "RandomSource":
        """An independent source keyed by ``tag``, for sub-tasks of one trial."""
        return RandomSource(derive_seed(self.seed, "child", self.stream_id, tag), 0)


def derive_stream(seed: int, trial_index: int) -> RandomSource:
    """The stream owned by trial ``trial_index`` of a campaign seeded with ``seed``."""
    return RandomSource(seed, trial_index)


def derive_seed(seed: int, *tags) -> int:
    """Deterministic 64-bit sub-seed for a labelled sub-experiment.

    Uses the Philox permutation itself as the hash: the tags are folded into
    a counter block one at a time.
    """
    h = seed & _U64
    for tag in tags:
        t = _tag_to_int(tag)
        for chunk in range(0, max(1, (t.bit_length() + 63) // 64)):
            part = (t >> (64 * chunk)) & _U64
            out = philox4x32(part & 0xFFFFFFFF, part >> 32, chunk, 0x5EED,
                             h & 0xFFFFFFFF, h >> 32)
            h = int(out[0]) | (int(out[1]) << 32)
    return h


def _tag_to_int(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        return int(tag) & ((1 << 256) - 1)
    data = str(tag).encode("utf-8")
    return int.from_bytes(data, "little") + (len(data) << (8 * len(data)))
