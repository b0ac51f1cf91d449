"""Portable deterministic randomness.

Everything random in this package flows through the primitives below, so
that any implementation of the same definitions (in any language)
reproduces identical samples bit for bit. The definitions are normative:

* ``mix64`` — the splitmix64 finalizer (Steele et al.):
  ``z ^= z >> 30; z *= 0xBF58476D1CE4E5B9; z ^= z >> 27;
  z *= 0x94D049BB133111EB; z ^= z >> 31`` with all arithmetic mod 2**64.
* ``SplitMix64`` — the splitmix64 sequence: state advances by the odd
  constant 0x9E3779B97F4A7C15 and each output is ``mix64(state)``.
* ``hash64`` — FNV-1a over UTF-8 bytes (offset 0xCBF29CE484222325,
  prime 0x100000001B3). ``hash64_parts`` feeds each part's UTF-8 bytes
  followed by a single 0x00 separator byte, so part boundaries matter.
* ``noise_u8(seed, prompt_hash, x, y, c)`` — the mock-backend noise field:
  ``base = mix64(seed XOR (prompt_hash * 0x9E3779B97F4A7C15))`` and the
  sample is the top byte (``>> 56``) of
  ``mix64(base XOR (x*KX + y*KY + c*KC))`` with
  KX=0x9E3779B185EBCA87, KY=0xC2B2AE3D27D4EB4F, KC=0x165667B19E3779F9.

``random_below`` draws uniformly from ``range(n)`` by rejection (no modulo
bias), which keeps sampling exactly uniform and portable.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1

_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3

NOISE_KX = 0x9E3779B185EBCA87
NOISE_KY = 0xC2B2AE3D27D4EB4F
NOISE_KC = 0x165667B19E3779F9


def mix64(z: int) -> int:
    """splitmix64 finalizer over a 64-bit value."""
    z &= _MASK
    z ^= z >> 30
    z = (z * _MIX1) & _MASK
    z ^= z >> 27
    z = (z * _MIX2) & _MASK
    z ^= z >> 31
    return z


class SplitMix64:
    """The splitmix64 generator; cheap, portable, and serializable."""

    def __init__(self, seed: int):
        self._state = seed & _MASK

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK
        return mix64(self._state)

    def random_below(self, n: int) -> int:
        """Uniform draw from range(n) via rejection sampling."""
        if n <= 0:
            raise ValueError("random_below needs n >= 1")
        limit = ((1 << 64) // n) * n
        while True:
            u = self.next_u64()
            if u < limit:
                return u % n


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & _MASK
    return h


def hash64(text: str) -> int:
    """FNV-1a 64 of the UTF-8 encoding of `text`."""
    return fnv1a64(text.encode("utf-8"))


def hash64_parts(*parts: str) -> int:
    """FNV-1a 64 over each part's UTF-8 bytes, each followed by 0x00."""
    h = _FNV_OFFSET
    for part in parts:
        for b in part.encode("utf-8"):
            h ^= b
            h = (h * _FNV_PRIME) & _MASK
        h ^= 0x00
        h = (h * _FNV_PRIME) & _MASK
    return h


def derive_job_seed(session_id: str, frame_index: int, buffer_id: str) -> int:
    """Per-stylize-job seed; replaying the same session reproduces it."""
    return hash64_parts(session_id, str(frame_index), buffer_id)


def noise_base(seed: int, prompt_hash: int) -> int:
    return mix64((seed & _MASK) ^ ((prompt_hash * _GAMMA) & _MASK))


def noise_u8(seed: int, prompt_hash: int, x: int, y: int, c: int) -> int:
    """Scalar reference for one noise sample; the backends use a fused kernel."""
    base = noise_base(seed, prompt_hash)
    lane = (x * NOISE_KX + y * NOISE_KY + c * NOISE_KC) & _MASK
    return mix64(base ^ lane) >> 56


def noise_field(seed: int, prompt_hash: int, width: int, height: int) -> np.ndarray:
    """(height, width, 3) uint8 array of noise_u8 samples, vectorized."""
    base = np.uint64(noise_base(seed, prompt_hash))
    xs = np.arange(width, dtype=np.uint64) * np.uint64(NOISE_KX)
    ys = np.arange(height, dtype=np.uint64) * np.uint64(NOISE_KY)
    lane = ys[:, None] + xs[None, :]
    out = np.empty((height, width, 3), dtype=np.uint8)
    for c in range(3):
        z = (lane + np.uint64((c * NOISE_KC) & _MASK)) ^ base
        z ^= z >> np.uint64(30)
        z *= np.uint64(_MIX1)
        z ^= z >> np.uint64(27)
        z *= np.uint64(_MIX2)
        z ^= z >> np.uint64(31)
        out[:, :, c] = (z >> np.uint64(56)).astype(np.uint8)
    return out
