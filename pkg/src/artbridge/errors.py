"""Exception hierarchy. Every error carries a short machine-readable code
that doubles as the wire-protocol error code."""

from __future__ import annotations

from typing import Any


class ArtBridgeError(Exception):
    """Base class; `code` is stable and wire-safe, `context` is JSON-safe."""

    code = "INTERNAL"

    def __init__(self, message: str, *, context: dict[str, Any] | None = None):
        super().__init__(message)
        self.message = message
        self.context = context or {}


class InvalidInputError(ArtBridgeError):
    code = "INVALID_INPUT"


class InvalidConfigError(ArtBridgeError):
    code = "INVALID_CONFIG"


class DimensionMismatchError(ArtBridgeError):
    code = "DIM_MISMATCH"


class OutOfBoundsError(ArtBridgeError):
    """Raised for rects outside an image; context carries a clamped suggestion."""

    code = "OUT_OF_BOUNDS"


class UnknownBufferError(ArtBridgeError):
    code = "UNKNOWN_BUFFER"


class DuplicateBufferError(ArtBridgeError):
    code = "DUPLICATE_BUFFER"


class UnknownSessionError(ArtBridgeError):
    code = "UNKNOWN_SESSION"


class NotFoundError(ArtBridgeError):
    """Frame not in the store; context carries the currently stored range."""

    code = "NOT_FOUND"


class BackendUnavailableError(ArtBridgeError):
    """Remote backend failed after retries; `attempts` is the total tried."""

    code = "BACKEND_UNAVAILABLE"

    def __init__(self, message: str, *, attempts: int, context: dict[str, Any] | None = None):
        ctx = dict(context or {})
        ctx["attempts"] = attempts
        super().__init__(message, context=ctx)
        self.attempts = attempts


class InvalidReferenceError(ArtBridgeError):
    code = "INVALID_REFERENCE"


class ProtocolError(ArtBridgeError):
    """Malformed wire message or undecodable backend response."""

    code = "BAD_MESSAGE"
