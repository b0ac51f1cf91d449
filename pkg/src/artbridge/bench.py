"""Throughput measurement: how many frames per second the pipeline
assembles end to end with the mock backend.

Two transports: "engine" drives the session engine directly (assembly
throughput of the server core), "ws" runs the same scenario through a real
WebSocket connection including PNG/base64 wire overhead. The report path
writes a per-frame timings CSV and a matplotlib figure next to it.
"""

from __future__ import annotations

import csv
import json
import tempfile
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .backends import BackendConfig
from .image import RasterImage, encode_png
from .protocol import png_to_b64
from .server import ArtBridgeServer, ServerConfig
from .session import BufferSpec, FrameReady, SessionConfig, SessionManager

DEFAULT_FRAMES = 300
DEFAULT_SIZE = 512
DEFAULT_STYLIZED_BUFFERS = 2
DEFAULT_WINDOW = 4
_LAYER_VARIANTS = 8


@dataclass
class BenchResult:
    transport: str
    frames: int
    width: int
    height: int
    stylized_buffers: int
    elapsed_s: float
    fps: float
    ready_times: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "transport": self.transport,
            "frames": self.frames,
            "width": self.width,
            "height": self.height,
            "stylized_buffers": self.stylized_buffers,
            "elapsed_s": round(self.elapsed_s, 4),
            "fps": round(self.fps, 2),
        }


def _bench_specs(stylized: int) -> list[BufferSpec]:
    specs = [BufferSpec(buffer_id="bg", kind="background", z_order=0)]
    for i in range(stylized):
        specs.append(BufferSpec(buffer_id=f"styl{i}", kind="stylized",
                                z_order=i + 1, prompt=f"bench style {i}",
                                strength=0.6))
    return specs


def _layer_images(width: int, height: int, count: int) -> list[RasterImage]:
    """Flat-shape sketch stand-ins; variants avoid trivially repeated frames."""
    images = []
    for k in range(count):
        arr = np.zeros((height, width, 4), dtype=np.uint8)
        arr[..., 3] = 255
        arr[..., 0] = (k * 29) % 255
        x0 = (k * 17) % max(1, width // 2)
        y0 = (k * 31) % max(1, height // 2)
        arr[y0:y0 + height // 3, x0:x0 + width // 3, :3] = (
            40 + k * 13, 200 - k * 9, 90 + k * 11)
        images.append(RasterImage.from_array(arr))
    return images


def _fast_tmp_dir() -> tempfile.TemporaryDirectory:
    """Scratch dir for measurement runs; prefers tmpfs over disk."""
    root = "/dev/shm" if Path("/dev/shm").is_dir() else None
    return tempfile.TemporaryDirectory(prefix="artbridge-bench-", dir=root)


def run_engine_bench(frames: int = DEFAULT_FRAMES, width: int = DEFAULT_SIZE,
                     height: int = DEFAULT_SIZE,
                     stylized_buffers: int = DEFAULT_STYLIZED_BUFFERS,
                     frames_dir: str | None = None,
                     window: int = DEFAULT_WINDOW) -> BenchResult:
    """Submit frames directly to the session engine, paced by frame_ready."""
    tmp = None
    if frames_dir is None:
        tmp = _fast_tmp_dir()
        frames_dir = tmp.name
    specs = _bench_specs(stylized_buffers)
    layers = _layer_images(width, height, _LAYER_VARIANTS)
    # clients ship layers as PNG; hand the engine those bytes like serve does
    layer_pngs = [encode_png(img) for img in layers]
    manager = SessionManager(BackendConfig(kind="mock"))
    ready_times: list[float] = []
    done = threading.Semaphore(0)
    budget = threading.Semaphore(window)

    def listener(event):
        if isinstance(event, FrameReady):
            ready_times.append(time.perf_counter())
            budget.release()
            if len(ready_times) == frames:
                done.release()

    try:
        session = manager.create_session(SessionConfig(
            canvas_width=width, canvas_height=height,
            frame_store_capacity=10, max_pending_frames=window * 2,
            frames_dir=frames_dir))
        session.add_listener(listener)
        for spec in specs:
            session.register_buffer(spec)
        t0 = time.perf_counter()
        for idx in range(frames):
            budget.acquire()
            for j, spec in enumerate(specs):
                k = (idx + j) % len(layers)
                session.submit_layer(idx, spec.buffer_id, layers[k],
                                     png=layer_pngs[k])
        if not done.acquire(timeout=600):
            raise TimeoutError("bench did not finish")
        elapsed = time.perf_counter() - t0
    finally:
        manager.close()
        if tmp is not None:
            tmp.cleanup()
    return BenchResult("engine", frames, width, height, stylized_buffers,
                       elapsed, frames / elapsed,
                       [t - t0 for t in ready_times])


def run_ws_bench(frames: int = DEFAULT_FRAMES, width: int = DEFAULT_SIZE,
                 height: int = DEFAULT_SIZE,
                 stylized_buffers: int = DEFAULT_STYLIZED_BUFFERS,
                 frames_dir: str | None = None, port: int = 8971,
                 window: int = DEFAULT_WINDOW) -> BenchResult:
    """Same scenario through a real localhost WebSocket connection."""
    from websockets.sync.client import connect

    tmp = None
    if frames_dir is None:
        tmp = _fast_tmp_dir()
        frames_dir = tmp.name
    specs = _bench_specs(stylized_buffers)
    payloads = [png_to_b64(encode_png(img))
                for img in _layer_images(width, height, _LAYER_VARIANTS)]
    cfg = ServerConfig(
        port=port, grace_period_s=5.0,
        session_defaults=SessionConfig(
            canvas_width=width, canvas_height=height,
            frame_store_capacity=10, max_pending_frames=window * 2,
            frames_dir=frames_dir),
        backend=BackendConfig(kind="mock"))
    ready_times: list[float] = []
    budget = threading.Semaphore(window)
    done = threading.Event()
    reader_error: list[str] = []

    with ArtBridgeServer(cfg) as server:
        with connect(server.address, max_size=64 * 1024 * 1024) as ws:
            ws.send(json.dumps({"type": "create_session", "config": {
                "canvas_width": width, "canvas_height": height}}))
            created = json.loads(ws.recv())
            assert created["type"] == "session_created", created
            sid = created["session_id"]
            for spec in specs:
                ws.send(json.dumps({"type": "register_buffer", "session_id": sid,
                                    "spec": spec.to_dict()}))

            def reader():
                while not done.is_set():
                    try:
                        raw = ws.recv(timeout=30)
                    except Exception:
                        return
                    # cheap type sniff; full JSON parse of megabyte payloads
                    # would bill client-side cost to the server measurement
                    if '"type":"frame_ready"' in raw[:80]:
                        ready_times.append(time.perf_counter())
                        budget.release()
                        if len(ready_times) == frames:
                            done.set()
                            return
                    elif '"type":"error"' in raw[:40]:
                        reader_error.append(str(raw[:300]))
                        done.set()
                        budget.release()
                        return

            rt = threading.Thread(target=reader, daemon=True)
            rt.start()
            t0 = time.perf_counter()
            for idx in range(frames):
                budget.acquire()
                if done.is_set():
                    break
                for j, spec in enumerate(specs):
                    ws.send(json.dumps({
                        "type": "frame_layer", "session_id": sid,
                        "frame_index": idx, "buffer_id": spec.buffer_id,
                        "png_b64": payloads[(idx + j) % len(payloads)]}))
            if not done.wait(timeout=600):
                raise TimeoutError("ws bench did not finish")
            elapsed = time.perf_counter() - t0
            rt.join(timeout=5)
            if reader_error:
                raise RuntimeError(f"server error during bench: {reader_error[0]}")
    if tmp is not None:
        tmp.cleanup()
    return BenchResult("ws", frames, width, height, stylized_buffers,
                       elapsed, frames / elapsed,
                       [t - t0 for t in ready_times])


def write_report(result: BenchResult, out_dir: str | Path) -> tuple[Path, Path]:
    """Persist the run: timings.csv plus a throughput figure beside it."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "timings.csv"
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", "ready_s", "inst_fps"])
        prev = 0.0
        for i, t in enumerate(result.ready_times):
            dt = t - prev
            writer.writerow([i, f"{t:.6f}", f"{(1.0 / dt if dt > 0 else 0.0):.2f}"])
            prev = t
    summary_path = out / "summary.json"
    summary_path.write_text(json.dumps(result.to_dict(), indent=2) + "\n",
                            encoding="utf-8")

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig_path = out / "throughput.png"
    times = np.asarray(result.ready_times)
    fig, ax = plt.subplots(figsize=(8, 4.5))
    if times.size > 1:
        counts = np.arange(1, times.size + 1)
        ax.plot(times, counts / np.maximum(times, 1e-9), lw=1.2,
                label="cumulative fps")
        win = min(30, times.size)
        if times.size > win:
            inst = win / (times[win:] - times[:-win])
            ax.plot(times[win:], inst, lw=0.8, alpha=0.7,
                    label=f"{win}-frame window fps")
    ax.axhline(30, color="red", ls="--", lw=1, label="30 fps target")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("frames/s")
    ax.set_title(f"{result.transport} transport, {result.width}x{result.height}, "
                 f"{result.stylized_buffers} stylized buffers: {result.fps:.1f} fps")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(fig_path, dpi=110)
    plt.close(fig)
    return csv_path, fig_path
