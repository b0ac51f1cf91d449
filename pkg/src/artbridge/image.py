"""Pure pixel operations: background removal, source-over compositing,
cropping, nearest-neighbor resizing, and PNG serialization.

All operations treat images as values: inputs are never mutated and the
same inputs always produce byte-identical outputs. PNG (RGBA8,
non-interlaced) is the only on-disk format.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path
from typing import NamedTuple, Sequence

import cv2
import numpy as np

from . import _kernels
from .errors import (
    DimensionMismatchError,
    InvalidInputError,
    OutOfBoundsError,
    ProtocolError,
)

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"

# Deflate tuning measured on 512x512 frames: full LZ77 matching costs
# 30-60 ms there, Z_RLE 2-8 ms, stored blocks ~3 ms. Rows are Sub-filtered
# (flat RGBA spans become zero runs RLE can crush); a cheap sampled probe
# falls back to stored blocks when the data is effectively incompressible
# (stylized noise). Both paths are pure functions of the pixels, so output
# stays byte-stable.
_PNG_ZLIB_LEVEL = 1
_PNG_PROBE_STEP = 16
_PNG_PROBE_RATIO = 0.9


class ColorRGBA(NamedTuple):
    r: int
    g: int
    b: int
    a: int

    def packed_rgb(self) -> int:
        return (self.r << 16) | (self.g << 8) | self.b

    def hex_rgb(self) -> str:
        return f"#{self.r:02X}{self.g:02X}{self.b:02X}"


class Rect(NamedTuple):
    x: int
    y: int
    w: int
    h: int


class RasterImage:
    """RGBA8 pixel grid backed by a read-only (h, w, 4) uint8 array."""

    __slots__ = ("width", "height", "_array")

    def __init__(self, array: np.ndarray, *, _copy: bool = True):
        if array.ndim != 3 or array.shape[2] != 4 or array.dtype != np.uint8:
            raise InvalidInputError(
                "image array must be (h, w, 4) uint8",
                context={"shape": list(array.shape), "dtype": str(array.dtype)},
            )
        h, w = int(array.shape[0]), int(array.shape[1])
        if w <= 0 or h <= 0:
            raise InvalidInputError("image dimensions must be positive")
        arr = np.ascontiguousarray(array)
        if _copy and arr is array:
            arr = array.copy()
        arr.flags.writeable = False
        self.width = w
        self.height = h
        self._array = arr

    @classmethod
    def from_array(cls, array: np.ndarray) -> "RasterImage":
        return cls(array)

    @classmethod
    def _adopt(cls, array: np.ndarray) -> "RasterImage":
        """Wrap a freshly allocated array without copying (internal)."""
        return cls(array, _copy=False)

    @classmethod
    def filled(cls, width: int, height: int, color: tuple[int, int, int, int]) -> "RasterImage":
        if width <= 0 or height <= 0:
            raise InvalidInputError("image dimensions must be positive")
        arr = np.empty((height, width, 4), dtype=np.uint8)
        arr[:, :] = color
        return cls._adopt(arr)

    @property
    def array(self) -> np.ndarray:
        return self._array

    @property
    def size(self) -> tuple[int, int]:
        return self.width, self.height

    def pixel(self, x: int, y: int) -> ColorRGBA:
        r, g, b, a = self._array[y, x]
        return ColorRGBA(int(r), int(g), int(b), int(a))

    def tobytes(self) -> bytes:
        return self._array.tobytes()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RasterImage):
            return NotImplemented
        return self.size == other.size and np.array_equal(self._array, other._array)

    def __hash__(self):
        return hash((self.width, self.height, self._array.tobytes()))

    def __repr__(self) -> str:
        return f"RasterImage({self.width}x{self.height})"


class BackgroundRemoval(NamedTuple):
    image: RasterImage
    background: ColorRGBA | None  # None: no opaque pixel existed


def find_background_color(img: RasterImage) -> ColorRGBA | None:
    """Most frequent opaque color; ties to the lowest packed 0xRRGGBB."""
    px = img.array.reshape(-1, 4)
    packed = np.empty(px.shape[0], dtype=np.int32)
    n = _kernels.pack_opaque(px, packed)
    if n == 0:
        return None
    packed = packed[:n]
    packed.sort()
    val, _count = _kernels.most_frequent_packed(packed)
    return ColorRGBA((val >> 16) & 0xFF, (val >> 8) & 0xFF, val & 0xFF, 255)


def remove_background(img: RasterImage, threshold: float = 30.0) -> BackgroundRemoval:
    """Zero the alpha of every pixel whose RGB distance to the detected
    background color is <= threshold (compared as squared distance).

    RGB channels are never altered. An image with no opaque pixels comes
    back unchanged with background=None.
    """
    if threshold < 0:
        raise InvalidInputError("threshold must be >= 0")
    if img.width <= 0 or img.height <= 0:
        raise InvalidInputError("empty image")
    bg = find_background_color(img)
    if bg is None:
        return BackgroundRemoval(img, None)
    out = np.empty_like(img.array)
    _kernels.clear_alpha_near(
        img.array, out, np.int64(bg.r), np.int64(bg.g), np.int64(bg.b),
        float(threshold) * float(threshold),
    )
    return BackgroundRemoval(RasterImage._adopt(out), bg)


def composite(layers: Sequence[RasterImage]) -> RasterImage:
    """Source-over stack, bottom to top, quantized to bytes after each pair."""
    if len(layers) == 0:
        raise InvalidInputError("composite needs at least one layer")
    base = layers[0]
    for i, layer in enumerate(layers[1:], start=1):
        if layer.size != base.size:
            raise DimensionMismatchError(
                f"layer {i} is {layer.width}x{layer.height}, "
                f"expected {base.width}x{base.height}",
                context={"layer_index": i},
            )
    if len(layers) == 1:
        return layers[0]
    # blend_pair reads each destination sample before writing it, so the
    # accumulator can double as the output buffer
    acc = layers[0].array.copy()
    for layer in layers[1:]:
        _kernels.blend_pair(acc, layer.array, acc)
    return RasterImage._adopt(acc)


def crop(img: RasterImage, rect: Rect) -> RasterImage:
    x, y, w, h = rect
    if w <= 0 or h <= 0 or x < 0 or y < 0 or x + w > img.width or y + h > img.height:
        sx = min(max(x, 0), img.width - 1)
        sy = min(max(y, 0), img.height - 1)
        sw = max(1, min(w if w > 0 else img.width, img.width - sx))
        sh = max(1, min(h if h > 0 else img.height, img.height - sy))
        raise OutOfBoundsError(
            f"rect {rect} outside {img.width}x{img.height} image",
            context={"suggested": {"x": sx, "y": sy, "w": sw, "h": sh}},
        )
    return RasterImage._adopt(img.array[y : y + h, x : x + w].copy())


def resize_nearest(img: RasterImage, width: int, height: int) -> RasterImage:
    """Nearest-neighbor resample: src index = floor(dst_index * src / dst)."""
    if width <= 0 or height <= 0:
        raise InvalidInputError("target dimensions must be positive")
    if (width, height) == img.size:
        return img
    xs = (np.arange(width, dtype=np.int64) * img.width) // width
    ys = (np.arange(height, dtype=np.int64) * img.height) // height
    return RasterImage._adopt(np.ascontiguousarray(img.array[ys][:, xs]))


def _png_chunk(tag: bytes, payload: bytes) -> bytes:
    return (
        struct.pack(">I", len(payload))
        + tag
        + payload
        + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF)
    )


def _rle_deflate(data) -> bytes:
    comp = zlib.compressobj(_PNG_ZLIB_LEVEL, zlib.DEFLATED, 15, 8, zlib.Z_RLE)
    return comp.compress(data) + comp.flush()


def _sub_filter_rows(flat: np.ndarray) -> np.ndarray:
    """Prefix each row with filter tag 1 and Sub-encode it (mod 256)."""
    h, w4 = flat.shape
    raw = np.empty((h, 1 + w4), dtype=np.uint8)
    raw[:, 0] = 1
    raw[:, 1:5] = flat[:, :4]
    np.subtract(flat[:, 4:], flat[:, :-4], out=raw[:, 5:])
    return raw


def encode_png(img: RasterImage) -> bytes:
    """RGBA8, non-interlaced; Sub-filtered RLE deflate, or stored blocks
    when a sampled probe finds the content incompressible.

    cv2/PIL encoders measured 9-14x slower on noise-heavy frames, which
    would dominate the real-time frame budget; output here is byte-stable
    for a given input.
    """
    h, w = img.height, img.width
    flat = img.array.reshape(h, w * 4)
    sample = _sub_filter_rows(np.ascontiguousarray(flat[::_PNG_PROBE_STEP]))
    if len(_rle_deflate(sample)) <= _PNG_PROBE_RATIO * sample.size:
        idat = _rle_deflate(_sub_filter_rows(flat))
    else:
        raw = np.empty((h, 1 + w * 4), dtype=np.uint8)
        raw[:, 0] = 0
        raw[:, 1:] = flat
        idat = zlib.compress(raw, 0)
    ihdr = struct.pack(">IIBBBBB", w, h, 8, 6, 0, 0, 0)
    return (
        PNG_SIGNATURE
        + _png_chunk(b"IHDR", ihdr)
        + _png_chunk(b"IDAT", idat)
        + _png_chunk(b"IEND", b"")
    )


def decode_png(data: bytes) -> RasterImage:
    """Decode PNG bytes to RGBA8 (gray/RGB inputs gain an opaque alpha)."""
    buf = np.frombuffer(data, dtype=np.uint8)
    arr = cv2.imdecode(buf, cv2.IMREAD_UNCHANGED)
    if arr is None:
        raise ProtocolError("undecodable image payload")
    if arr.dtype == np.uint16:
        arr = (arr >> 8).astype(np.uint8)
    if arr.dtype != np.uint8:
        raise ProtocolError(f"unsupported sample type {arr.dtype}")
    if arr.ndim == 2:
        rgba = np.empty((*arr.shape, 4), dtype=np.uint8)
        rgba[..., 0] = rgba[..., 1] = rgba[..., 2] = arr
        rgba[..., 3] = 255
    elif arr.shape[2] == 2:  # gray + alpha
        rgba = np.empty((*arr.shape[:2], 4), dtype=np.uint8)
        rgba[..., 0] = rgba[..., 1] = rgba[..., 2] = arr[..., 0]
        rgba[..., 3] = arr[..., 1]
    elif arr.shape[2] == 3:
        rgba = np.empty((*arr.shape[:2], 4), dtype=np.uint8)
        rgba[..., :3] = arr[..., ::-1]  # BGR -> RGB
        rgba[..., 3] = 255
    elif arr.shape[2] == 4:
        rgba = np.ascontiguousarray(arr[..., [2, 1, 0, 3]])  # BGRA -> RGBA
    else:
        raise ProtocolError(f"unsupported channel count {arr.shape[2]}")
    return RasterImage._adopt(rgba)


def save_png(img: RasterImage, path: str | Path) -> None:
    Path(path).write_bytes(encode_png(img))


def load_png(path: str | Path) -> RasterImage:
    return decode_png(Path(path).read_bytes())
