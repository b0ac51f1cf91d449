"""numba kernels for the per-pixel hot paths.

These are the single production implementations; the test suite checks
them against pure-Python scalar oracles. All float arithmetic is IEEE
float64 in the exact operation order the contracts document (no fastmath),
so results are bit-identical to an unfused scalar evaluation.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_U = np.uint64
_GAMMA = _U(0x9E3779B97F4A7C15)
_MIX1 = _U(0xBF58476D1CE4E5B9)
_MIX2 = _U(0x94D049BB133111EB)
_KX = _U(0x9E3779B185EBCA87)
_KY = _U(0xC2B2AE3D27D4EB4F)
_KC = _U(0x165667B19E3779F9)


@njit(cache=True, nogil=True)
def _mix64(z):
    z ^= z >> _U(30)
    z *= _MIX1
    z ^= z >> _U(27)
    z *= _MIX2
    z ^= z >> _U(31)
    return z


@njit(cache=True, nogil=True)
def blend_pair(dst, src, out):
    """Non-premultiplied source-over of src onto dst, rounded half-up.

    The a_s in {0, 1} branches are byte-exact shortcuts of the general
    formula: with a_s=1 it reduces to src, and with a_s=0 the quotient
    (c_d*a_d)/a_d stays within an ulp of c_d, far inside the half-up
    rounding window.
    """
    h, w = dst.shape[0], dst.shape[1]
    for y in range(h):
        for x in range(w):
            sa = src[y, x, 3]
            if sa == 255:
                out[y, x, 0] = src[y, x, 0]
                out[y, x, 1] = src[y, x, 1]
                out[y, x, 2] = src[y, x, 2]
                out[y, x, 3] = 255
                continue
            if sa == 0:
                out[y, x, 0] = dst[y, x, 0]
                out[y, x, 1] = dst[y, x, 1]
                out[y, x, 2] = dst[y, x, 2]
                out[y, x, 3] = dst[y, x, 3]
                if dst[y, x, 3] == 0:
                    out[y, x, 0] = 0
                    out[y, x, 1] = 0
                    out[y, x, 2] = 0
                continue
            a_s = sa / 255.0
            a_d = dst[y, x, 3] / 255.0
            a_o = a_s + a_d * (1.0 - a_s)
            for c in range(3):
                v = (src[y, x, c] * a_s + dst[y, x, c] * a_d * (1.0 - a_s)) / a_o
                out[y, x, c] = np.uint8(np.floor(v + 0.5))
            out[y, x, 3] = np.uint8(np.floor(a_o * 255.0 + 0.5))


@njit(cache=True, nogil=True)
def pack_opaque(px, out):
    """Pack opaque pixels of a (n, 4) uint8 view as 0xRRGGBB into out.

    Returns the number packed; out must hold at least px.shape[0] items.
    """
    n = px.shape[0]
    k = 0
    for i in range(n):
        if px[i, 3] > 0:
            out[k] = (np.int32(px[i, 0]) << 16) | (np.int32(px[i, 1]) << 8) \
                | np.int32(px[i, 2])
            k += 1
    return k


@njit(cache=True, nogil=True)
def most_frequent_packed(sorted_packed):
    """Longest run in an ascending int32 array of packed 0xRRGGBB values.

    Returns (value, count); scanning ascending means ties keep the lowest
    packed value automatically. Sorting stays in numpy (its introsort beats
    numba's quicksort ~3x on this data).
    """
    n = sorted_packed.size
    best_val = -1
    best_count = 0
    i = 0
    while i < n:
        j = i + 1
        while j < n and sorted_packed[j] == sorted_packed[i]:
            j += 1
        if j - i > best_count:
            best_count = j - i
            best_val = sorted_packed[i]
        i = j
    return best_val, best_count


@njit(cache=True, nogil=True)
def clear_alpha_near(src, out, br, bg, bb, thr_sq):
    """Copy src, zeroing alpha where squared RGB distance to (br,gb,bb) <= thr_sq."""
    h, w = src.shape[0], src.shape[1]
    for y in range(h):
        for x in range(w):
            dr = np.int64(src[y, x, 0]) - br
            dg = np.int64(src[y, x, 1]) - bg
            db = np.int64(src[y, x, 2]) - bb
            d2 = dr * dr + dg * dg + db * db
            out[y, x, 0] = src[y, x, 0]
            out[y, x, 1] = src[y, x, 1]
            out[y, x, 2] = src[y, x, 2]
            if d2 <= thr_sq:
                out[y, x, 3] = 0
            else:
                out[y, x, 3] = src[y, x, 3]


@njit(cache=True, nogil=True)
def stylize_lerp(img, out, seed, prompt_hash, strength):
    """out = round((1-s)*img + s*noise) per RGB channel; alpha preserved."""
    h, w = img.shape[0], img.shape[1]
    base = _mix64(_U(seed) ^ (_U(prompt_hash) * _GAMMA))
    for y in range(h):
        row = _U(y) * _KY
        for x in range(w):
            lane = row + _U(x) * _KX
            for c in range(3):
                v = np.float64(_mix64(base ^ (lane + _U(c) * _KC)) >> _U(56))
                o = np.floor((1.0 - strength) * img[y, x, c] + strength * v + 0.5)
                out[y, x, c] = np.uint8(o)
            out[y, x, 3] = img[y, x, 3]


@njit(cache=True, nogil=True)
def noise_tinted(out, seed, prompt_hash, mr, mg, mb):
    """out = round(noise * mean/255) per RGB channel; alpha forced opaque."""
    h, w = out.shape[0], out.shape[1]
    base = _mix64(_U(seed) ^ (_U(prompt_hash) * _GAMMA))
    for y in range(h):
        row = _U(y) * _KY
        for x in range(w):
            lane = row + _U(x) * _KX
            n0 = np.float64(_mix64(base ^ (lane + _U(0) * _KC)) >> _U(56))
            n1 = np.float64(_mix64(base ^ (lane + _U(1) * _KC)) >> _U(56))
            n2 = np.float64(_mix64(base ^ (lane + _U(2) * _KC)) >> _U(56))
            out[y, x, 0] = np.uint8(np.floor(n0 * mr / 255.0 + 0.5))
            out[y, x, 1] = np.uint8(np.floor(n1 * mg / 255.0 + 0.5))
            out[y, x, 2] = np.uint8(np.floor(n2 * mb / 255.0 + 0.5))
            out[y, x, 3] = 255


def warmup():
    """Force-compile every kernel (first call JIT or cache load)."""
    img = np.zeros((2, 2, 4), dtype=np.uint8)
    out = np.empty_like(img)
    blend_pair(img, img, out)
    pack_opaque(img.reshape(-1, 4), np.empty(4, dtype=np.int32))
    most_frequent_packed(np.zeros(1, dtype=np.int32))
    clear_alpha_near(img, out, np.int64(0), np.int64(0), np.int64(0), 0.0)
    stylize_lerp(img, out, _U(0), _U(0), 0.5)
    noise_tinted(out, _U(0), _U(0), 255.0, 255.0, 255.0)
