"""Session engine: buffer registry, per-frame layer ingestion, stylize job
queueing, frame assembly and persistence, the bounded N-frame store with
rewind, and style-capture dispatch.

Threading contract: each session's state is guarded by one lock (the
"single logical owner"); stylize jobs run on a shared worker pool sized to
the backend concurrency cap, and the pure pixel work of assembly happens
outside the lock. Events may therefore arrive out of frame-index order,
but always exactly once per assembled frame.
"""

from __future__ import annotations

import json
import logging
import re
import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Union

from .backends import (
    Backend,
    BackendConfig,
    StyleLearnRequest,
    StyleRequest,
    create_backend,
)
from .errors import (
    ArtBridgeError,
    DimensionMismatchError,
    DuplicateBufferError,
    InvalidConfigError,
    InvalidInputError,
    NotFoundError,
    UnknownBufferError,
    UnknownSessionError,
)
from .image import (
    RasterImage,
    Rect,
    composite,
    crop,
    decode_png,
    encode_png,
    remove_background,
    save_png,
)
from .rng import derive_job_seed

log = logging.getLogger("artbridge.session")

_BUFFER_ID_RE = re.compile(r"^[A-Za-z0-9_-]{1,64}$")

BUFFER_KINDS = ("background", "stylized", "nonstylized")


class FrameClosedError(ArtBridgeError):
    code = "FRAME_CLOSED"


@dataclass(frozen=True)
class BufferSpec:
    buffer_id: str
    kind: str
    z_order: int
    prompt: str | None = None
    strength: float | None = None

    def __post_init__(self):
        if self.kind not in BUFFER_KINDS:
            raise InvalidInputError(f"unknown buffer kind {self.kind!r}")
        if not _BUFFER_ID_RE.match(self.buffer_id):
            raise InvalidInputError(
                "buffer_id must match [A-Za-z0-9_-]{1,64}",
                context={"buffer_id": self.buffer_id},
            )
        if self.kind == "stylized":
            if self.prompt is None or self.strength is None:
                raise InvalidInputError("stylized buffer needs prompt and strength")
            if not (0.0 <= self.strength <= 1.0):
                raise InvalidInputError(f"strength {self.strength} outside [0, 1]")
        elif self.prompt is not None or self.strength is not None:
            raise InvalidInputError(f"{self.kind} buffer takes no prompt/strength")

    def to_dict(self) -> dict:
        return {
            "buffer_id": self.buffer_id,
            "kind": self.kind,
            "z_order": self.z_order,
            "prompt": self.prompt,
            "strength": self.strength,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "BufferSpec":
        return cls(
            buffer_id=obj["buffer_id"],
            kind=obj["kind"],
            z_order=int(obj["z_order"]),
            prompt=obj.get("prompt"),
            strength=obj.get("strength"),
        )


@dataclass(frozen=True)
class SessionConfig:
    canvas_width: int
    canvas_height: int
    framerate: float = 30.0
    frame_store_capacity: int = 30
    max_pending_frames: int = 8
    bg_removal_threshold: float = 30.0
    frames_dir: str = "frames"
    backend: BackendConfig = field(default_factory=BackendConfig)

    def __post_init__(self):
        if self.canvas_width <= 0 or self.canvas_height <= 0:
            raise InvalidConfigError("canvas dimensions must be positive")
        if self.framerate <= 0:
            raise InvalidConfigError("framerate must be > 0")
        if self.frame_store_capacity <= 0:
            raise InvalidConfigError("frame_store_capacity must be > 0")
        if self.max_pending_frames <= 0:
            raise InvalidConfigError("max_pending_frames must be > 0")
        if self.bg_removal_threshold < 0:
            raise InvalidConfigError("bg_removal_threshold must be >= 0")


@dataclass
class FrameRecord:
    frame_index: int
    final: RasterImage
    originals: dict[str, RasterImage]
    stylized_results: dict[str, RasterImage]
    created_at: float
    assembled_at: float
    final_png: bytes


@dataclass(frozen=True)
class FrameReady:
    session_id: str
    frame_index: int
    record: FrameRecord


@dataclass(frozen=True)
class StoreProgress:
    session_id: str
    stored: int
    capacity: int


@dataclass(frozen=True)
class FrameDropped:
    session_id: str
    frame_index: int
    reason: str


@dataclass(frozen=True)
class SessionError:
    session_id: str
    code: str
    message: str
    context: dict


SessionEvent = Union[FrameReady, StoreProgress, FrameDropped, SessionError]
Listener = Callable[[SessionEvent], None]


@dataclass
class _PendingFrame:
    expected: set[str]
    created_at: float
    submitted: set[str] = field(default_factory=set)
    processed: dict[str, RasterImage] = field(default_factory=dict)
    originals: dict[str, RasterImage] = field(default_factory=dict)
    stylized_results: dict[str, RasterImage] = field(default_factory=dict)
    closed: bool = False


class Session:
    """One pipeline session; create through SessionManager."""

    def __init__(self, session_id: str, config: SessionConfig, backend: Backend,
                 executor: ThreadPoolExecutor):
        self.session_id = session_id
        self.config = config
        self._backend = backend
        self._executor = executor
        self._lock = threading.Lock()
        self._idle = threading.Condition(self._lock)
        self._buffers: dict[str, BufferSpec] = {}
        self._background_id: str | None = None
        self._pending: dict[int, _PendingFrame] = {}
        self._assembling: set[int] = set()
        self._store: dict[int, FrameRecord] = {}
        self._dropped: set[int] = set()
        self._drop_log: list[dict] = []
        self._listeners: list[Listener] = []
        self._busy = 0  # in-flight stylize jobs + assemblies (incl. event emission)
        self._style_seq = 0
        self._closed = False

        self.dir = Path(config.frames_dir) / session_id
        try:
            (self.dir / "layers").mkdir(parents=True, exist_ok=True)
            (self.dir / "styles").mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise InvalidConfigError(f"frames_dir not writable: {exc}") from exc
        self._write_manifest()

    # -- listeners ---------------------------------------------------------

    def add_listener(self, fn: Listener) -> None:
        with self._lock:
            self._listeners.append(fn)

    def remove_listener(self, fn: Listener) -> None:
        with self._lock:
            if fn in self._listeners:
                self._listeners.remove(fn)

    def _emit(self, event: SessionEvent) -> None:
        with self._lock:
            listeners = list(self._listeners)
        for fn in listeners:
            try:
                fn(event)
            except Exception:
                log.exception("session %s listener failed", self.session_id)

    # -- registration ------------------------------------------------------

    def register_buffer(self, spec: BufferSpec) -> None:
        with self._lock:
            self._check_open()
            if spec.buffer_id in self._buffers:
                raise DuplicateBufferError(f"buffer {spec.buffer_id!r} already registered")
            if any(b.z_order == spec.z_order for b in self._buffers.values()):
                raise DuplicateBufferError(
                    f"z_order {spec.z_order} already taken",
                    context={"z_order": spec.z_order},
                )
            if spec.kind == "background" and self._background_id is not None:
                raise DuplicateBufferError("session already has a background buffer")
            self._buffers[spec.buffer_id] = spec
            if spec.kind == "background":
                self._background_id = spec.buffer_id
        self._write_manifest()

    def buffers(self) -> list[BufferSpec]:
        with self._lock:
            return list(self._buffers.values())

    # -- frame ingestion ---------------------------------------------------

    def submit_layer(self, frame_index: int, buffer_id: str, image: RasterImage,
                     png: bytes | None = None) -> None:
        """Ingest one layer. `png` optionally carries the already-encoded
        PNG of `image` (e.g. the wire payload) so persistence can reuse it
        instead of re-encoding."""
        if frame_index < 0:
            raise InvalidInputError("frame_index must be >= 0")
        drops: list[int] = []
        prep = None
        with self._lock:
            self._check_open()
            spec = self._buffers.get(buffer_id)
            if spec is None:
                raise UnknownBufferError(f"buffer {buffer_id!r} not registered",
                                         context={"buffer_id": buffer_id})
            if image.size != (self.config.canvas_width, self.config.canvas_height):
                raise DimensionMismatchError(
                    f"layer is {image.width}x{image.height}, canvas is "
                    f"{self.config.canvas_width}x{self.config.canvas_height}")
            if frame_index in self._dropped:
                log.debug("session %s: late layer for dropped frame %d",
                          self.session_id, frame_index)
                return
            if frame_index in self._store or frame_index in self._assembling:
                raise FrameClosedError(f"frame {frame_index} already assembled",
                                       context={"frame_index": frame_index})
            pf = self._pending.get(frame_index)
            if pf is None:
                pf = _PendingFrame(expected=set(self._buffers), created_at=time.time())
                self._pending[frame_index] = pf
                while len(self._pending) > self.config.max_pending_frames:
                    victim = min(self._pending)
                    del self._pending[victim]
                    self._dropped.add(victim)
                    self._drop_log.append({"frame_index": victim, "reason": "backpressure"})
                    drops.append(victim)
                if frame_index in self._dropped:
                    pf = None
            if pf is not None:
                if buffer_id in pf.submitted:
                    raise InvalidInputError(
                        f"layer for buffer {buffer_id!r} already submitted "
                        f"for frame {frame_index}")
                pf.submitted.add(buffer_id)
                pf.originals[buffer_id] = image
                if spec.kind == "stylized":
                    self._busy += 1
                    self._executor.submit(self._stylize_job, frame_index, buffer_id,
                                          image, spec)
                else:
                    pf.processed[buffer_id] = image
                    prep = self._take_assembly_locked(frame_index)

        layer_path = self.dir / "layers" / f"{frame_index:06d}_{buffer_id}.png"
        layer_path.write_bytes(png if png is not None else encode_png(image))
        if drops:
            self._write_manifest()
            for idx in drops:
                self._emit(FrameDropped(self.session_id, idx, "backpressure"))
        self._dispatch_prep(prep)

    def frame_complete(self, frame_index: int) -> None:
        """Close a frame early: assemble with whatever layers were submitted."""
        prep = None
        with self._lock:
            self._check_open()
            if (frame_index in self._store or frame_index in self._dropped
                    or frame_index in self._assembling):
                return
            pf = self._pending.get(frame_index)
            if pf is None:
                raise InvalidInputError(
                    f"frame_complete for frame {frame_index} with no layers",
                    context={"frame_index": frame_index})
            pf.closed = True
            prep = self._take_assembly_locked(frame_index)
        self._dispatch_prep(prep)

    def _dispatch_prep(self, prep) -> None:
        if prep is None:
            return
        if prep[0] == "drop":
            self._write_manifest()
            self._emit(FrameDropped(self.session_id, prep[1], "no_layers"))
        else:
            self._finish_assembly(*prep[1:])

    def _stylize_job(self, frame_index: int, buffer_id: str, image: RasterImage,
                     spec: BufferSpec) -> None:
        seed = derive_job_seed(self.session_id, frame_index, buffer_id)
        prep = None
        try:
            styled = self._backend.stylize(
                StyleRequest(image, spec.prompt, spec.strength, seed))
            cleaned = remove_background(styled, self.config.bg_removal_threshold).image
        except ArtBridgeError as exc:
            with self._lock:
                pf = self._pending.get(frame_index)
                if pf is not None:
                    # keep the frame assemblable without the failed layer
                    pf.submitted.discard(buffer_id)
                    pf.expected.discard(buffer_id)
                    prep = self._take_assembly_locked(frame_index)
                self._busy -= 1
                self._idle.notify_all()
            self._emit(SessionError(self.session_id, exc.code, exc.message,
                                    {**exc.context, "frame_index": frame_index,
                                     "buffer_id": buffer_id}))
            self._dispatch_prep(prep)
            return
        except Exception:
            log.exception("stylize job crashed (frame %d, buffer %s)",
                          frame_index, buffer_id)
            with self._lock:
                self._busy -= 1
                self._idle.notify_all()
            return
        with self._lock:
            pf = self._pending.get(frame_index)
            if pf is not None and buffer_id in pf.submitted:
                pf.processed[buffer_id] = cleaned
                pf.stylized_results[buffer_id] = cleaned
                prep = self._take_assembly_locked(frame_index)
            self._busy -= 1
            self._idle.notify_all()
        self._dispatch_prep(prep)

    # -- assembly ----------------------------------------------------------

    def _take_assembly_locked(self, frame_index: int):
        """If the frame is complete, detach it and hand back an assembly task.

        Returns None (not ready), ("drop", index) for a closed frame whose
        every layer failed, or ("assemble", index, ordered, pf).
        """
        pf = self._pending.get(frame_index)
        if pf is None:
            return None
        done = len(pf.processed) == len(pf.submitted) and (
            pf.closed or pf.submitted == pf.expected)
        if not done:
            return None
        del self._pending[frame_index]
        if not pf.processed:
            self._dropped.add(frame_index)
            self._drop_log.append({"frame_index": frame_index, "reason": "no_layers"})
            self._idle.notify_all()
            return ("drop", frame_index)
        ordered: list[RasterImage] = []
        if self._background_id in pf.processed:
            ordered.append(pf.processed[self._background_id])
        rest = sorted(
            (b for b in pf.processed if b != self._background_id),
            key=lambda b: self._buffers[b].z_order)
        ordered.extend(pf.processed[b] for b in rest)
        self._assembling.add(frame_index)
        self._busy += 1
        return ("assemble", frame_index, ordered, pf)

    def _finish_assembly(self, frame_index: int, ordered: list[RasterImage],
                         pf: _PendingFrame) -> None:
        try:
            final = composite(ordered)
            png = encode_png(final)
            (self.dir / f"{frame_index:06d}.png").write_bytes(png)
            record = FrameRecord(
                frame_index=frame_index,
                final=final,
                originals=dict(pf.originals),
                stylized_results=dict(pf.stylized_results),
                created_at=pf.created_at,
                assembled_at=time.time(),
                final_png=png,
            )
            with self._lock:
                self._store[frame_index] = record
                while len(self._store) > self.config.frame_store_capacity:
                    del self._store[min(self._store)]
                stored = len(self._store)
            self._emit(FrameReady(self.session_id, frame_index, record))
            self._emit(StoreProgress(self.session_id, stored,
                                     self.config.frame_store_capacity))
        finally:
            with self._lock:
                self._assembling.discard(frame_index)
                self._busy -= 1
                self._idle.notify_all()

    # -- retrieval ---------------------------------------------------------

    def get_frame(self, frame_index: int) -> FrameRecord:
        with self._lock:
            record = self._store.get(frame_index)
            if record is None:
                lo = min(self._store) if self._store else None
                hi = max(self._store) if self._store else None
                raise NotFoundError(
                    f"frame {frame_index} not in store",
                    context={"frame_index": frame_index,
                             "stored_min": lo, "stored_max": hi})
            return record

    def store_range(self) -> tuple[int | None, int | None]:
        with self._lock:
            if not self._store:
                return None, None
            return min(self._store), max(self._store)

    def style_capture(self, frame_index: int, rect: Rect, prompt: str,
                      seed: int) -> RasterImage:
        record = self.get_frame(frame_index)
        reference = crop(record.final, rect)  # raises before any backend call
        result = self._backend.style_learn(StyleLearnRequest(reference, prompt, seed))
        with self._lock:
            seq = self._style_seq
            self._style_seq += 1
        save_png(result, self.dir / "styles" / f"{seq:03d}.png")
        return result

    # -- lifecycle ---------------------------------------------------------

    def wait_idle(self, timeout: float = 30.0) -> bool:
        """Block until no pending frames or in-flight jobs remain."""
        with self._idle:
            return self._idle.wait_for(
                lambda: self._busy == 0 and not self._pending, timeout)

    def drop_log(self) -> list[dict]:
        with self._lock:
            return list(self._drop_log)

    def close(self) -> None:
        with self._lock:
            self._closed = True
        self._write_manifest()

    def _check_open(self):
        if self._closed:
            raise UnknownSessionError(f"session {self.session_id} is closed")

    # -- persistence -------------------------------------------------------

    def _manifest_dict(self) -> dict:
        cfg = self.config
        return {
            "version": 1,
            "session_id": self.session_id,
            "config": {
                "canvas_width": cfg.canvas_width,
                "canvas_height": cfg.canvas_height,
                "framerate": cfg.framerate,
                "frame_store_capacity": cfg.frame_store_capacity,
                "max_pending_frames": cfg.max_pending_frames,
                "bg_removal_threshold": cfg.bg_removal_threshold,
                "backend": {"kind": cfg.backend.kind,
                            "output_size": cfg.backend.output_size},
            },
            "buffers": [b.to_dict() for b in self._buffers.values()],
            "drops": list(self._drop_log),
        }

    def _write_manifest(self) -> None:
        with self._lock:
            payload = json.dumps(self._manifest_dict(), sort_keys=True, indent=2)
        (self.dir / "manifest.json").write_text(payload + "\n", encoding="utf-8")


class SessionManager:
    """Registry of sessions sharing one backend and worker pool."""

    def __init__(self, backend_config: BackendConfig | None = None,
                 grace_period_s: float = 60.0):
        self.backend_config = backend_config or BackendConfig()
        self.grace_period_s = grace_period_s
        self._backend = create_backend(self.backend_config)
        self._executor = ThreadPoolExecutor(
            max_workers=self.backend_config.concurrency,
            thread_name_prefix="artbridge-job")
        self._sessions: dict[str, Session] = {}
        self._private_backends: dict[str, Backend] = {}
        self._gc_timers: dict[str, threading.Timer] = {}
        self._lock = threading.Lock()

    def create_session(self, config: SessionConfig,
                       session_id: str | None = None) -> Session:
        sid = session_id or uuid.uuid4().hex
        with self._lock:
            if sid in self._sessions:
                raise InvalidConfigError(f"session id {sid} already exists")
        if config.backend == self.backend_config:
            backend = self._backend
            private = None
        else:
            backend = create_backend(config.backend)
            private = backend
        session = Session(sid, config, backend, self._executor)
        with self._lock:
            self._sessions[sid] = session
            if private is not None:
                self._private_backends[sid] = private
        return session

    def get(self, session_id: str) -> Session:
        with self._lock:
            session = self._sessions.get(session_id)
        if session is None:
            raise UnknownSessionError(f"no session {session_id!r}",
                                      context={"session_id": session_id})
        return session

    def session_ids(self) -> list[str]:
        with self._lock:
            return list(self._sessions)

    def remove_session(self, session_id: str) -> None:
        with self._lock:
            session = self._sessions.pop(session_id, None)
            private = self._private_backends.pop(session_id, None)
            timer = self._gc_timers.pop(session_id, None)
        if timer is not None:
            timer.cancel()
        if session is not None:
            session.close()
        if private is not None:
            private.close()

    def schedule_gc(self, session_id: str) -> None:
        """Arrange removal after the grace period unless cancelled."""
        timer = threading.Timer(self.grace_period_s, self.remove_session,
                                args=(session_id,))
        timer.daemon = True
        with self._lock:
            old = self._gc_timers.pop(session_id, None)
            self._gc_timers[session_id] = timer
        if old is not None:
            old.cancel()
        timer.start()

    def cancel_gc(self, session_id: str) -> None:
        with self._lock:
            timer = self._gc_timers.pop(session_id, None)
        if timer is not None:
            timer.cancel()

    def close(self) -> None:
        with self._lock:
            ids = list(self._sessions)
        for sid in ids:
            self.remove_session(sid)
        self._executor.shutdown(wait=True)
        self._backend.close()


def replay_session(session_dir: str | Path, out_root: str | Path,
                   progress: Callable[[int], None] | None = None) -> Path:
    """Re-render a recorded session through the mock backend.

    Frames listed in the manifest drop log are skipped (they produced no
    final in the live run); everything else is rebuilt serially from the
    recorded layer originals. Reusing the recorded session id keeps the
    per-job seeds, so finals are bit-identical run to run.
    """
    session_dir = Path(session_dir)
    manifest_path = session_dir / "manifest.json"
    if not manifest_path.is_file():
        raise InvalidInputError(f"no manifest.json in {session_dir}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    mcfg = manifest["config"]
    backend_cfg = BackendConfig(kind="mock",
                                output_size=mcfg["backend"]["output_size"])
    config = SessionConfig(
        canvas_width=mcfg["canvas_width"],
        canvas_height=mcfg["canvas_height"],
        framerate=mcfg["framerate"],
        frame_store_capacity=mcfg["frame_store_capacity"],
        max_pending_frames=mcfg["max_pending_frames"],
        bg_removal_threshold=mcfg["bg_removal_threshold"],
        frames_dir=str(out_root),
        backend=backend_cfg,
    )
    dropped = {d["frame_index"] for d in manifest.get("drops", [])}
    frames: dict[int, list[tuple[str, Path]]] = {}
    for path in sorted((session_dir / "layers").glob("*.png")):
        idx = int(path.name[:6])
        buffer_id = path.name[7:-4]
        frames.setdefault(idx, []).append((buffer_id, path))

    manager = SessionManager(backend_cfg, grace_period_s=3600.0)
    try:
        session = manager.create_session(config, session_id=manifest["session_id"])
        for spec in manifest["buffers"]:
            session.register_buffer(BufferSpec.from_dict(spec))

        for idx in sorted(frames):
            if idx in dropped:
                continue
            for buffer_id, path in frames[idx]:
                raw = path.read_bytes()
                session.submit_layer(idx, buffer_id, decode_png(raw), png=raw)
            session.frame_complete(idx)
            if not session.wait_idle(timeout=120.0):
                raise ArtBridgeError(f"replay stalled at frame {idx}")
            if progress is not None:
                progress(idx)
        return session.dir
    finally:
        manager.close()
