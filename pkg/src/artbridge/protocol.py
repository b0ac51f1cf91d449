"""WebSocket wire protocol: one JSON message per text frame.

Client to server: create_session, register_buffer, frame_layer,
frame_complete, get_frame, style_capture. Server to client:
session_created, frame_ready, store_progress, frame_data, style_result,
error. Every message except create_session carries a session_id. Image
payloads travel as base64-encoded PNG in `png_b64` fields. Seeds are JSON
integers; values above 2^53-1 should be sent by clients that can
represent them exactly (the Python side accepts the full 64-bit range).
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from typing import Any

from .errors import ProtocolError
from .image import Rect
from .session import BufferSpec


@dataclass(frozen=True)
class CreateSession:
    config: dict
    type: str = field(default="create_session", init=False)


@dataclass(frozen=True)
class RegisterBuffer:
    session_id: str
    spec: BufferSpec
    type: str = field(default="register_buffer", init=False)


@dataclass(frozen=True)
class FrameLayerMsg:
    session_id: str
    frame_index: int
    buffer_id: str
    png_b64: str
    type: str = field(default="frame_layer", init=False)


@dataclass(frozen=True)
class FrameComplete:
    session_id: str
    frame_index: int
    type: str = field(default="frame_complete", init=False)


@dataclass(frozen=True)
class GetFrame:
    session_id: str
    frame_index: int
    type: str = field(default="get_frame", init=False)


@dataclass(frozen=True)
class StyleCapture:
    session_id: str
    frame_index: int
    rect: Rect
    prompt: str
    seed: int
    type: str = field(default="style_capture", init=False)


@dataclass(frozen=True)
class SessionCreated:
    session_id: str
    type: str = field(default="session_created", init=False)


@dataclass(frozen=True)
class FrameReadyMsg:
    session_id: str
    frame_index: int
    png_b64: str
    type: str = field(default="frame_ready", init=False)


@dataclass(frozen=True)
class StoreProgressMsg:
    session_id: str
    stored: int
    capacity: int
    type: str = field(default="store_progress", init=False)


@dataclass(frozen=True)
class FrameData:
    session_id: str
    frame_index: int
    png_b64: str
    type: str = field(default="frame_data", init=False)


@dataclass(frozen=True)
class StyleResult:
    session_id: str
    png_b64: str
    type: str = field(default="style_result", init=False)


@dataclass(frozen=True)
class ErrorMsg:
    code: str
    message: str
    context: dict = field(default_factory=dict)
    session_id: str | None = None
    type: str = field(default="error", init=False)


# types.UnionType (PEP 604) so isinstance() checks work on these unions
ClientMessage = (CreateSession | RegisterBuffer | FrameLayerMsg
                 | FrameComplete | GetFrame | StyleCapture)
ServerMessage = (SessionCreated | FrameReadyMsg | StoreProgressMsg
                 | FrameData | StyleResult | ErrorMsg)
WireMessage = ClientMessage | ServerMessage


def encode(msg: WireMessage) -> str:
    obj: dict[str, Any] = {"type": msg.type}
    if isinstance(msg, CreateSession):
        obj["config"] = msg.config
    elif isinstance(msg, RegisterBuffer):
        obj["session_id"] = msg.session_id
        obj["spec"] = msg.spec.to_dict()
    elif isinstance(msg, FrameLayerMsg):
        obj.update(session_id=msg.session_id, frame_index=msg.frame_index,
                   buffer_id=msg.buffer_id, png_b64=msg.png_b64)
    elif isinstance(msg, (FrameComplete, GetFrame)):
        obj.update(session_id=msg.session_id, frame_index=msg.frame_index)
    elif isinstance(msg, StyleCapture):
        obj.update(session_id=msg.session_id, frame_index=msg.frame_index,
                   rect={"x": msg.rect.x, "y": msg.rect.y,
                         "w": msg.rect.w, "h": msg.rect.h},
                   prompt=msg.prompt, seed=msg.seed)
    elif isinstance(msg, SessionCreated):
        obj["session_id"] = msg.session_id
    elif isinstance(msg, FrameReadyMsg):
        obj.update(session_id=msg.session_id, frame_index=msg.frame_index,
                   png_b64=msg.png_b64)
    elif isinstance(msg, StoreProgressMsg):
        obj.update(session_id=msg.session_id, stored=msg.stored,
                   capacity=msg.capacity)
    elif isinstance(msg, FrameData):
        obj.update(session_id=msg.session_id, frame_index=msg.frame_index,
                   png_b64=msg.png_b64)
    elif isinstance(msg, StyleResult):
        obj.update(session_id=msg.session_id, png_b64=msg.png_b64)
    elif isinstance(msg, ErrorMsg):
        obj.update(session_id=msg.session_id, code=msg.code,
                   message=msg.message, context=msg.context)
    else:
        raise ProtocolError(f"cannot encode {type(msg).__name__}")
    return json.dumps(obj, separators=(",", ":"))


def _require(obj: dict, key: str, types) -> Any:
    if key not in obj:
        raise ProtocolError(f"missing field {key!r}", context={"field": key})
    value = obj[key]
    if not isinstance(value, types):
        raise ProtocolError(f"field {key!r} has wrong type",
                            context={"field": key})
    return value


def _index(obj: dict) -> int:
    idx = _require(obj, "frame_index", int)
    if isinstance(idx, bool) or idx < 0:
        raise ProtocolError("frame_index must be a non-negative integer")
    return idx


def decode(text: str | bytes) -> WireMessage:
    try:
        obj = json.loads(text)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ProtocolError(f"invalid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ProtocolError("message must be a JSON object")
    mtype = _require(obj, "type", str)

    if mtype == "create_session":
        return CreateSession(config=_require(obj, "config", dict))

    sid = _require(obj, "session_id", str) if mtype != "error" else obj.get("session_id")

    if mtype == "register_buffer":
        spec_obj = _require(obj, "spec", dict)
        try:
            spec = BufferSpec.from_dict(spec_obj)
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"bad buffer spec: {exc}") from exc
        return RegisterBuffer(session_id=sid, spec=spec)
    if mtype == "frame_layer":
        return FrameLayerMsg(session_id=sid, frame_index=_index(obj),
                             buffer_id=_require(obj, "buffer_id", str),
                             png_b64=_require(obj, "png_b64", str))
    if mtype == "frame_complete":
        return FrameComplete(session_id=sid, frame_index=_index(obj))
    if mtype == "get_frame":
        return GetFrame(session_id=sid, frame_index=_index(obj))
    if mtype == "style_capture":
        rect_obj = _require(obj, "rect", dict)
        try:
            rect = Rect(int(rect_obj["x"]), int(rect_obj["y"]),
                        int(rect_obj["w"]), int(rect_obj["h"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"bad rect: {exc}") from exc
        seed = _require(obj, "seed", int)
        if isinstance(seed, bool) or not (0 <= seed < 2**64):
            raise ProtocolError("seed must be an unsigned 64-bit integer")
        return StyleCapture(session_id=sid, frame_index=_index(obj), rect=rect,
                            prompt=_require(obj, "prompt", str), seed=seed)
    if mtype == "session_created":
        return SessionCreated(session_id=sid)
    if mtype == "frame_ready":
        return FrameReadyMsg(session_id=sid, frame_index=_index(obj),
                             png_b64=_require(obj, "png_b64", str))
    if mtype == "store_progress":
        return StoreProgressMsg(session_id=sid,
                                stored=_require(obj, "stored", int),
                                capacity=_require(obj, "capacity", int))
    if mtype == "frame_data":
        return FrameData(session_id=sid, frame_index=_index(obj),
                         png_b64=_require(obj, "png_b64", str))
    if mtype == "style_result":
        return StyleResult(session_id=sid, png_b64=_require(obj, "png_b64", str))
    if mtype == "error":
        return ErrorMsg(session_id=sid, code=_require(obj, "code", str),
                        message=_require(obj, "message", str),
                        context=obj.get("context") or {})
    raise ProtocolError(f"unknown message type {mtype!r}",
                        context={"type": mtype})


def png_to_b64(png: bytes) -> str:
    return base64.b64encode(png).decode("ascii")


def b64_to_png(text: str) -> bytes:
    try:
        return base64.b64decode(text, validate=True)
    except (TypeError, ValueError) as exc:
        raise ProtocolError(f"invalid base64 payload: {exc}") from exc
