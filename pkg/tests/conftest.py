from __future__ import annotations

import contextlib

import numpy as np
import pytest

from artbridge.image import RasterImage

# ---------------------------------------------------------------------------
# acceptance reporting: one PASS/FAIL line per criterion in the summary
# ---------------------------------------------------------------------------

_ACCEPTANCE: list[tuple[str, bool]] = []


@contextlib.contextmanager
def criterion(name: str):
    try:
        yield
    except BaseException:
        _ACCEPTANCE.append((name, False))
        raise
    else:
        _ACCEPTANCE.append((name, True))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for name, ok in _ACCEPTANCE:
            terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {name}")


# ---------------------------------------------------------------------------
# image builders
# ---------------------------------------------------------------------------

def make_image(arr) -> RasterImage:
    return RasterImage.from_array(np.asarray(arr, dtype=np.uint8))


def random_image(rng: np.random.Generator, width: int, height: int,
                 colors: int = 5, alpha_choices=(0, 128, 255)) -> RasterImage:
    """Small random image drawn from a limited palette."""
    palette = rng.integers(0, 256, size=(colors, 3), dtype=np.uint8)
    idx = rng.integers(0, colors, size=(height, width))
    arr = np.empty((height, width, 4), dtype=np.uint8)
    arr[..., :3] = palette[idx]
    arr[..., 3] = rng.choice(np.asarray(alpha_choices, dtype=np.uint8),
                             size=(height, width))
    return RasterImage.from_array(arr)


@pytest.fixture
def nprng() -> np.random.Generator:
    return np.random.default_rng(20260809)
