"""WebSocket frame server.

One handler thread per connection; a connection may own several sessions
and a session may outlive its connection by the configured grace period.
Malformed traffic answers with error{BAD_MESSAGE} on that connection only;
the server itself never stops because of client input.
"""

from __future__ import annotations

import logging
import queue
import sys
import threading
from dataclasses import dataclass, field

from websockets.exceptions import ConnectionClosed
from websockets.sync.server import Server, ServerConnection, serve as ws_serve

from . import protocol
from .backends import BackendConfig
from .errors import ArtBridgeError, InvalidConfigError, ProtocolError
from .image import decode_png, encode_png
from .session import (
    FrameDropped,
    FrameReady,
    Session,
    SessionConfig,
    SessionError,
    SessionManager,
    StoreProgress,
)

log = logging.getLogger("artbridge.server")


@dataclass
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 8765
    grace_period_s: float = 60.0
    session_defaults: SessionConfig = field(
        default_factory=lambda: SessionConfig(canvas_width=512, canvas_height=512))
    backend: BackendConfig = field(default_factory=BackendConfig)


class _Connection:
    """Outbound queue + sender thread, and the sessions this socket follows.

    Worker threads must never block on socket writes (multi-megabyte
    frame_ready payloads stall the whole pipeline on GIL handoffs), so all
    sends funnel through one queue drained by a dedicated thread. FIFO
    order per connection is preserved.
    """

    _CLOSE = object()

    def __init__(self, ws: ServerConnection):
        self.ws = ws
        self.sessions: set[str] = set()
        self._queue: queue.Queue = queue.Queue(maxsize=256)
        self._sender = threading.Thread(target=self._drain, daemon=True,
                                        name="artbridge-send")
        self._sender.start()

    def send(self, text: str) -> None:
        try:
            self._queue.put(text, timeout=30)
        except queue.Full:
            log.warning("dropping message for stalled client")

    def close(self) -> None:
        self._queue.put(self._CLOSE)

    def _drain(self) -> None:
        while True:
            item = self._queue.get()
            if item is self._CLOSE:
                return
            try:
                self.ws.send(item)
            except ConnectionClosed:
                return
            except Exception:
                log.exception("send failed")
                return


class ArtBridgeServer:
    def __init__(self, config: ServerConfig | None = None,
                 manager: SessionManager | None = None):
        self.config = config or ServerConfig()
        self.manager = manager or SessionManager(
            self.config.backend, grace_period_s=self.config.grace_period_s)
        self._owns_manager = manager is None
        self._subscribers: dict[str, list[_Connection]] = {}
        self._sub_lock = threading.Lock()
        self._server: Server | None = None

    # -- session event fan-out ---------------------------------------------

    def _subscribe(self, conn: _Connection, session: Session) -> None:
        if session.session_id in conn.sessions:
            return
        with self._sub_lock:
            subs = self._subscribers.setdefault(session.session_id, [])
            if conn not in subs:
                subs.append(conn)
                conn.sessions.add(session.session_id)
        self.manager.cancel_gc(session.session_id)

    def _unsubscribe_all(self, conn: _Connection) -> None:
        with self._sub_lock:
            for sid in conn.sessions:
                subs = self._subscribers.get(sid, [])
                if conn in subs:
                    subs.remove(conn)
                if not subs:
                    self._subscribers.pop(sid, None)
                    self.manager.schedule_gc(sid)
            conn.sessions.clear()

    def _broadcast(self, session_id: str, msg: protocol.ServerMessage) -> None:
        with self._sub_lock:
            subs = list(self._subscribers.get(session_id, ()))
        text = protocol.encode(msg)
        for conn in subs:
            conn.send(text)

    def _session_listener(self, event) -> None:
        if isinstance(event, FrameReady):
            self._broadcast(event.session_id, protocol.FrameReadyMsg(
                session_id=event.session_id, frame_index=event.frame_index,
                png_b64=protocol.png_to_b64(event.record.final_png)))
        elif isinstance(event, StoreProgress):
            self._broadcast(event.session_id, protocol.StoreProgressMsg(
                session_id=event.session_id, stored=event.stored,
                capacity=event.capacity))
        elif isinstance(event, FrameDropped):
            self._broadcast(event.session_id, protocol.ErrorMsg(
                session_id=event.session_id, code="FRAME_DROPPED",
                message=f"frame {event.frame_index} dropped ({event.reason})",
                context={"frame_index": event.frame_index, "reason": event.reason}))
        elif isinstance(event, SessionError):
            self._broadcast(event.session_id, protocol.ErrorMsg(
                session_id=event.session_id, code=event.code,
                message=event.message, context=event.context))

    # -- message handling ----------------------------------------------------

    def _session_config_from_wire(self, obj: dict) -> SessionConfig:
        defaults = self.config.session_defaults
        try:
            return SessionConfig(
                canvas_width=int(obj.get("canvas_width", defaults.canvas_width)),
                canvas_height=int(obj.get("canvas_height", defaults.canvas_height)),
                framerate=float(obj.get("framerate", defaults.framerate)),
                frame_store_capacity=int(obj.get("frame_store_capacity",
                                                 defaults.frame_store_capacity)),
                max_pending_frames=int(obj.get("max_pending_frames",
                                               defaults.max_pending_frames)),
                bg_removal_threshold=float(obj.get("bg_removal_threshold",
                                                   defaults.bg_removal_threshold)),
                # frames_dir and backend are server policy, never client input
                frames_dir=defaults.frames_dir,
                backend=self.config.backend,
            )
        except (TypeError, ValueError) as exc:
            raise InvalidConfigError(f"bad session config: {exc}") from exc

    def _handle(self, conn: _Connection, msg: protocol.ClientMessage) -> None:
        if isinstance(msg, protocol.CreateSession):
            session = self.manager.create_session(
                self._session_config_from_wire(msg.config))
            session.add_listener(self._session_listener)
            self._subscribe(conn, session)
            conn.send(protocol.encode(
                protocol.SessionCreated(session_id=session.session_id)))
            return

        session = self.manager.get(msg.session_id)
        self._subscribe(conn, session)

        if isinstance(msg, protocol.RegisterBuffer):
            session.register_buffer(msg.spec)
        elif isinstance(msg, protocol.FrameLayerMsg):
            png = protocol.b64_to_png(msg.png_b64)
            session.submit_layer(msg.frame_index, msg.buffer_id,
                                 decode_png(png), png=png)
        elif isinstance(msg, protocol.FrameComplete):
            session.frame_complete(msg.frame_index)
        elif isinstance(msg, protocol.GetFrame):
            record = session.get_frame(msg.frame_index)
            conn.send(protocol.encode(protocol.FrameData(
                session_id=session.session_id, frame_index=msg.frame_index,
                png_b64=protocol.png_to_b64(record.final_png))))
        elif isinstance(msg, protocol.StyleCapture):
            result = session.style_capture(msg.frame_index, msg.rect,
                                           msg.prompt, msg.seed)
            conn.send(protocol.encode(protocol.StyleResult(
                session_id=session.session_id,
                png_b64=protocol.png_to_b64(encode_png(result)))))
        else:
            raise ProtocolError(f"client cannot send {msg.type!r}")

    def _handler(self, ws: ServerConnection) -> None:
        conn = _Connection(ws)
        try:
            for raw in ws:
                session_id = None
                try:
                    msg = protocol.decode(raw)
                    session_id = getattr(msg, "session_id", None)
                    if isinstance(msg, protocol.ServerMessage):
                        raise ProtocolError(f"client cannot send {msg.type!r}")
                    self._handle(conn, msg)
                except ArtBridgeError as exc:
                    conn.send(protocol.encode(protocol.ErrorMsg(
                        session_id=session_id, code=exc.code,
                        message=exc.message, context=exc.context)))
                except Exception as exc:
                    log.exception("unexpected failure handling message")
                    conn.send(protocol.encode(protocol.ErrorMsg(
                        session_id=session_id, code="INTERNAL",
                        message=f"{type(exc).__name__}: {exc}")))
        except ConnectionClosed:
            pass
        finally:
            conn.close()
            self._unsubscribe_all(conn)

    # -- lifecycle -----------------------------------------------------------

    def _make_server(self) -> Server:
        # shorter GIL quantum keeps socket talk responsive next to the
        # compute worker threads
        sys.setswitchinterval(0.002)
        return ws_serve(self._handler, self.config.host, self.config.port,
                        max_size=64 * 1024 * 1024)

    def start(self) -> None:
        self._server = self._make_server()
        thread = threading.Thread(target=self._server.serve_forever,
                                  name="artbridge-server", daemon=True)
        thread.start()

    def serve_forever(self) -> None:
        self._server = self._make_server()
        self._server.serve_forever()

    def shutdown(self) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._server = None
        if self._owns_manager:
            self.manager.close()

    @property
    def address(self) -> str:
        return f"ws://{self.config.host}:{self.config.port}"

    def __enter__(self) -> "ArtBridgeServer":
        self.start()
        return self

    def __exit__(self, *exc) -> None:
        self.shutdown()
