"""Conditioning structure extracted from images: contour maps, sampled
contour points, nearest-contour queries, and sampled color palettes.

Deterministic throughout: sampling uses the package's portable splitmix64
stream, so the same (inputs, seed) reproduce identical results anywhere.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from .errors import InvalidInputError
from .image import ColorRGBA, RasterImage
from .rng import SplitMix64

DEFAULT_FG_THRESHOLD = 128


class ContourMap(NamedTuple):
    """Foreground-boundary pixels of a source image.

    `points` are unique (x, y) pairs held in canonical (y, x) order.
    """

    width: int
    height: int
    points: tuple[tuple[int, int], ...]

    @classmethod
    def from_points(cls, width: int, height: int,
                    points: Iterable[tuple[int, int]]) -> "ContourMap":
        seen = set()
        for x, y in points:
            if not (0 <= x < width and 0 <= y < height):
                raise InvalidInputError(f"point ({x}, {y}) outside {width}x{height}")
            seen.add((int(x), int(y)))
        ordered = tuple(sorted(seen, key=lambda p: (p[1], p[0])))
        return cls(width, height, ordered)

    def to_json(self) -> str:
        return json.dumps(
            {"width": self.width, "height": self.height,
             "points": [[x, y] for x, y in self.points]},
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, text: str) -> "ContourMap":
        obj = json.loads(text)
        return cls.from_points(obj["width"], obj["height"],
                               [(p[0], p[1]) for p in obj["points"]])


class Palette(NamedTuple):
    """Colors in extraction-rank order, most common bin first."""

    colors: tuple[ColorRGBA, ...]

    def to_json(self) -> str:
        return json.dumps({"colors": [c.hex_rgb() for c in self.colors]},
                          separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "Palette":
        obj = json.loads(text)
        colors = []
        for s in obj["colors"]:
            v = int(s.lstrip("#"), 16)
            colors.append(ColorRGBA((v >> 16) & 0xFF, (v >> 8) & 0xFF, v & 0xFF, 255))
        return cls(tuple(colors))


def luminance_u8(img: RasterImage) -> np.ndarray:
    """round(0.299 R + 0.587 G + 0.114 B) per pixel, half-up, as uint8."""
    rgb = img.array[..., :3].astype(np.float64)
    lum = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
    return np.floor(lum + 0.5).astype(np.uint8)


def extract_contours(img: RasterImage, fg_threshold: int = DEFAULT_FG_THRESHOLD,
                     invert: bool = False) -> ContourMap:
    """Foreground pixels with at least one background 4-neighbor.

    Foreground means alpha > 0 and luminance >= fg_threshold (with
    invert=True: luminance < fg_threshold). Pixels outside the image count
    as background.
    """
    lum = luminance_u8(img)
    if invert:
        fg = (img.array[..., 3] > 0) & (lum < fg_threshold)
    else:
        fg = (img.array[..., 3] > 0) & (lum >= fg_threshold)
    padded = np.zeros((img.height + 2, img.width + 2), dtype=bool)
    padded[1:-1, 1:-1] = fg
    interior = (
        padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    )
    contour = fg & ~interior
    ys, xs = np.nonzero(contour)  # row-major: already (y, x) canonical order
    points = tuple((int(x), int(y)) for x, y in zip(xs, ys))
    return ContourMap(img.width, img.height, points)


def sample_contour_points(cmap: ContourMap, n: int, seed: int) -> list[tuple[int, int]]:
    """Uniform sample without replacement; n >= |points| returns all points.

    Partial Fisher-Yates over the canonical (y, x)-ordered list, driven by
    rejection-sampled splitmix64 draws, so every implementation of the
    documented generator produces the same selection.
    """
    if n < 0:
        raise InvalidInputError("sample count must be >= 0")
    pts = list(cmap.points)
    if n >= len(pts):
        return pts
    rng = SplitMix64(seed)
    for i in range(n):
        j = i + rng.random_below(len(pts) - i)
        pts[i], pts[j] = pts[j], pts[i]
    return pts[:n]


def find_nearest_contour(cmap: ContourMap,
                         p: tuple[float, float]) -> tuple[tuple[int, int], float]:
    """Closest contour point to p; ties resolve to the lowest (y, x)."""
    if not cmap.points:
        raise InvalidInputError("contour map has no points")
    px, py = float(p[0]), float(p[1])
    xs = np.fromiter((pt[0] for pt in cmap.points), dtype=np.float64, count=len(cmap.points))
    ys = np.fromiter((pt[1] for pt in cmap.points), dtype=np.float64, count=len(cmap.points))
    d2 = (xs - px) ** 2 + (ys - py) ** 2
    best = d2.min()
    idx = int(np.nonzero(d2 == best)[0][0])  # canonical order => first tie is (y, x)-lowest
    return cmap.points[idx], float(np.sqrt(best))


def sample_colors(img: RasterImage, n: int, seed: int = 0) -> Palette:
    """Top-n colors by 4-bit-per-channel bin population.

    Opaque pixels are binned into 4096 RGB bins; bins rank by count with
    ties to the lower bin index, and each palette entry is the bin's mean
    RGB rounded half-up. Extraction is deterministic; the seed parameter
    is reserved and ignored.
    """
    del seed  # reserved for a future stochastic mode
    if n < 0:
        raise InvalidInputError("sample count must be >= 0")
    px = img.array.reshape(-1, 4)
    opaque = px[px[:, 3] > 0]
    if n == 0 or opaque.shape[0] == 0:
        return Palette(())
    bins = (
        (opaque[:, 0].astype(np.int64) >> 4) << 8
        | (opaque[:, 1].astype(np.int64) >> 4) << 4
        | (opaque[:, 2].astype(np.int64) >> 4)
    )
    counts = np.bincount(bins, minlength=4096)
    sums_r = np.bincount(bins, weights=opaque[:, 0].astype(np.float64), minlength=4096)
    sums_g = np.bincount(bins, weights=opaque[:, 1].astype(np.float64), minlength=4096)
    sums_b = np.bincount(bins, weights=opaque[:, 2].astype(np.float64), minlength=4096)
    nonempty = np.nonzero(counts)[0]
    # sort by (-count, bin index); stable sort on index-ordered input
    order = nonempty[np.argsort(-counts[nonempty], kind="stable")]
    top = order[: min(n, order.size)]
    colors = []
    for b in top:
        cnt = counts[b]
        colors.append(ColorRGBA(
            int(np.floor(sums_r[b] / cnt + 0.5)),
            int(np.floor(sums_g[b] / cnt + 0.5)),
            int(np.floor(sums_b[b] / cnt + 0.5)),
            255,
        ))
    return Palette(tuple(colors))


def save_contour_map(cmap: ContourMap, path: str | Path) -> None:
    Path(path).write_text(cmap.to_json() + "\n", encoding="utf-8")


def load_contour_map(path: str | Path) -> ContourMap:
    return ContourMap.from_json(Path(path).read_text(encoding="utf-8"))


def save_palette(palette: Palette, path: str | Path) -> None:
    Path(path).write_text(palette.to_json() + "\n", encoding="utf-8")


def load_palette(path: str | Path) -> Palette:
    return Palette.from_json(Path(path).read_text(encoding="utf-8"))
