"""Stylization backends: a deterministic mock and a remote HTTP client.

The mock is normative for tests: its noise field and blend arithmetic are
pinned down to the bit (see rng module docs). The remote client speaks a
small JSON-over-HTTP contract::

    POST {endpoint}/stylize      {"prompt", "image_b64", "strength", "seed"}
    POST {endpoint}/style_learn  {"prompt", "image_b64", "seed"}
    GET  {endpoint}/health

with responses {"image_b64": ...}; images are base64 PNG. API keys are
read from an environment variable named in the config, never stored.
"""

from __future__ import annotations

import base64
import os
import threading
import time
from dataclasses import dataclass, field

import numpy as np
import requests

from . import _kernels
from .errors import (
    BackendUnavailableError,
    InvalidConfigError,
    InvalidInputError,
    InvalidReferenceError,
    ProtocolError,
)
from .image import RasterImage, decode_png, encode_png, resize_nearest
from .rng import hash64

MAX_PROMPT_BYTES = 2000
RETRY_BASE_DELAY_S = 0.25


@dataclass(frozen=True)
class StyleRequest:
    image: RasterImage
    prompt: str
    strength: float
    seed: int

    def __post_init__(self):
        if not (0.0 <= self.strength <= 1.0):
            raise InvalidInputError(f"strength {self.strength} outside [0, 1]")
        if len(self.prompt.encode("utf-8")) > MAX_PROMPT_BYTES:
            raise InvalidInputError("prompt exceeds 2000 UTF-8 bytes")


@dataclass(frozen=True)
class StyleLearnRequest:
    reference: RasterImage
    prompt: str
    seed: int

    def __post_init__(self):
        if len(self.prompt.encode("utf-8")) > MAX_PROMPT_BYTES:
            raise InvalidInputError("prompt exceeds 2000 UTF-8 bytes")


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "mock"  # "mock" | "remote"
    endpoint: str = ""
    api_key_env: str = "ARTBRIDGE_API_KEY"
    timeout_s: float = 30.0
    max_retries: int = 2
    output_size: int = 512
    concurrency: int = 4

    def __post_init__(self):
        if self.kind not in ("mock", "remote"):
            raise InvalidConfigError(f"unknown backend kind {self.kind!r}")
        if self.kind == "remote" and not self.endpoint:
            raise InvalidConfigError("remote backend requires an endpoint")
        if self.timeout_s <= 0:
            raise InvalidConfigError("timeout must be > 0")
        if self.output_size <= 0 or self.concurrency <= 0 or self.max_retries < 0:
            raise InvalidConfigError("counts must be positive")


@dataclass
class HealthReport:
    kind: str
    healthy: bool
    latency_ms: float | None = None
    error: str | None = None
    detail: dict = field(default_factory=dict)


class MockBackend:
    """Bit-deterministic stand-in for a diffusion model."""

    kind = "mock"

    def __init__(self, config: BackendConfig | None = None):
        self.config = config or BackendConfig(kind="mock")
        _kernels.warmup()

    def stylize(self, req: StyleRequest) -> RasterImage:
        out = np.empty_like(req.image.array)
        _kernels.stylize_lerp(req.image.array, out,
                              np.uint64(req.seed & (2**64 - 1)),
                              np.uint64(hash64(req.prompt)), float(req.strength))
        return RasterImage._adopt(out)

    def style_learn(self, req: StyleLearnRequest) -> RasterImage:
        px = req.reference.array.reshape(-1, 4)
        opaque = px[px[:, 3] > 0]
        if opaque.shape[0] == 0:
            raise InvalidReferenceError("reference has no opaque pixels")
        mean = np.floor(opaque[:, :3].astype(np.float64).sum(axis=0)
                        / opaque.shape[0] + 0.5).astype(np.int64)
        size = self.config.output_size
        out = np.empty((size, size, 4), dtype=np.uint8)
        _kernels.noise_tinted(out, np.uint64(req.seed & (2**64 - 1)),
                              np.uint64(hash64(req.prompt)),
                              float(mean[0]), float(mean[1]), float(mean[2]))
        return RasterImage._adopt(out)

    def health_check(self) -> HealthReport:
        return HealthReport(kind="mock", healthy=True, latency_ms=0.0)

    def close(self):
        pass


class RemoteBackend:
    """Thin HTTP client with bounded retries and a concurrency cap.

    Safe to share across threads; at most `config.concurrency` requests
    are in flight at once.
    """

    kind = "remote"

    def __init__(self, config: BackendConfig):
        if config.kind != "remote":
            raise InvalidConfigError("RemoteBackend requires kind='remote'")
        self.config = config
        self._session = requests.Session()
        self._gate = threading.BoundedSemaphore(config.concurrency)

    def _headers(self) -> dict:
        key = os.environ.get(self.config.api_key_env, "")
        return {"Authorization": f"Bearer {key}"} if key else {}

    def _post(self, path: str, payload: dict) -> dict:
        url = self.config.endpoint.rstrip("/") + path
        attempts = 0
        last_err: Exception | None = None
        while attempts <= self.config.max_retries:
            if attempts:
                time.sleep(RETRY_BASE_DELAY_S * (2 ** (attempts - 1)))
            attempts += 1
            try:
                with self._gate:
                    resp = self._session.post(url, json=payload,
                                              headers=self._headers(),
                                              timeout=self.config.timeout_s)
                if resp.status_code >= 500 or resp.status_code == 429:
                    last_err = ProtocolError(f"HTTP {resp.status_code}")
                    continue
                if resp.status_code != 200:
                    raise BackendUnavailableError(
                        f"{url} answered HTTP {resp.status_code}", attempts=attempts)
                return resp.json()
            except (requests.ConnectionError, requests.Timeout) as exc:
                last_err = exc
        raise BackendUnavailableError(
            f"{url} unreachable after {attempts} attempts: {last_err}",
            attempts=attempts)

    def _decode_image(self, body: dict) -> RasterImage:
        try:
            raw = base64.b64decode(body["image_b64"], validate=True)
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"bad backend response: {exc}") from exc
        return decode_png(raw)

    def stylize(self, req: StyleRequest) -> RasterImage:
        body = self._post("/stylize", {
            "prompt": req.prompt,
            "image_b64": base64.b64encode(encode_png(req.image)).decode("ascii"),
            "strength": req.strength,
            "seed": req.seed,
        })
        img = self._decode_image(body)
        return resize_nearest(img, req.image.width, req.image.height)

    def style_learn(self, req: StyleLearnRequest) -> RasterImage:
        body = self._post("/style_learn", {
            "prompt": req.prompt,
            "image_b64": base64.b64encode(encode_png(req.reference)).decode("ascii"),
            "seed": req.seed,
        })
        img = self._decode_image(body)
        return resize_nearest(img, self.config.output_size, self.config.output_size)

    def health_check(self) -> HealthReport:
        url = self.config.endpoint.rstrip("/") + "/health"
        t0 = time.perf_counter()
        try:
            resp = self._session.get(url, headers=self._headers(),
                                     timeout=self.config.timeout_s)
            latency = (time.perf_counter() - t0) * 1000.0
            if resp.status_code == 200:
                return HealthReport(kind="remote", healthy=True, latency_ms=latency)
            return HealthReport(kind="remote", healthy=False, latency_ms=latency,
                                error=f"HTTP {resp.status_code}")
        except requests.RequestException as exc:
            return HealthReport(kind="remote", healthy=False,
                                error=type(exc).__name__,
                                detail={"message": str(exc)})

    def close(self):
        self._session.close()


Backend = MockBackend | RemoteBackend


def create_backend(config: BackendConfig) -> Backend:
    if config.kind == "mock":
        return MockBackend(config)
    return RemoteBackend(config)


def health_check(config: BackendConfig) -> HealthReport:
    backend = create_backend(config)
    try:
        return backend.health_check()
    finally:
        backend.close()
