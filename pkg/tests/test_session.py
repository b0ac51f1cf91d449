"""Session engine tests: registration invariants, assembly against composed
oracles, the frame store, backpressure, persistence, and replay."""

import json
import threading
from pathlib import Path

import numpy as np
import pytest

from artbridge.backends import BackendConfig, MockBackend, StyleRequest
from artbridge.errors import (
    DimensionMismatchError,
    DuplicateBufferError,
    InvalidConfigError,
    InvalidInputError,
    NotFoundError,
    OutOfBoundsError,
    UnknownBufferError,
)
from artbridge.image import RasterImage, Rect, composite, load_png, remove_background
from artbridge.rng import derive_job_seed, hash64, noise_field
from artbridge.session import (
    BufferSpec,
    FrameDropped,
    FrameReady,
    Session,
    SessionConfig,
    SessionError,
    SessionManager,
    StoreProgress,
    replay_session,
)

from conftest import random_image

SIZE = 24


@pytest.fixture
def manager():
    mgr = SessionManager(BackendConfig(kind="mock"), grace_period_s=60.0)
    yield mgr
    mgr.close()


def _config(tmp_path, **kw) -> SessionConfig:
    defaults = dict(canvas_width=SIZE, canvas_height=SIZE,
                    frames_dir=str(tmp_path), frame_store_capacity=10)
    defaults.update(kw)
    return SessionConfig(**defaults)


def _layer(nprng, alpha=(255,)) -> RasterImage:
    return random_image(nprng, SIZE, SIZE, alpha_choices=alpha)


def _events_of(events, cls):
    return [e for e in events if isinstance(e, cls)]


# ---------------------------------------------------------------------------
# configuration / registration
# ---------------------------------------------------------------------------

def test_create_session_distinct_ids_and_dirs(manager, tmp_path):
    a = manager.create_session(_config(tmp_path))
    b = manager.create_session(_config(tmp_path))
    assert a.session_id != b.session_id
    assert (tmp_path / a.session_id).is_dir()
    assert (tmp_path / b.session_id / "manifest.json").is_file()


def test_config_validation_and_echo(manager, tmp_path):
    with pytest.raises(InvalidConfigError):
        _config(tmp_path, frame_store_capacity=0)
    with pytest.raises(InvalidConfigError):
        _config(tmp_path, framerate=0)
    cfg = _config(tmp_path, framerate=24.0, bg_removal_threshold=12.5)
    session = manager.create_session(cfg)
    assert session.config == cfg  # get-config round trip


def test_register_fig1_scenario(manager, tmp_path):
    session = manager.create_session(_config(tmp_path))
    session.register_buffer(BufferSpec("bg", "background", 0))
    session.register_buffer(BufferSpec("rings1", "stylized", 1,
                                       prompt="ring animation", strength=0.5))
    session.register_buffer(BufferSpec("rings2", "stylized", 2,
                                       prompt="second ring", strength=0.8))
    session.register_buffer(BufferSpec("bubbles", "nonstylized", 3))
    assert len(session.buffers()) == 4


def test_register_rejections(manager, tmp_path):
    session = manager.create_session(_config(tmp_path))
    session.register_buffer(BufferSpec("bg", "background", 0))
    with pytest.raises(DuplicateBufferError):
        session.register_buffer(BufferSpec("bg", "nonstylized", 1))
    with pytest.raises(DuplicateBufferError):
        session.register_buffer(BufferSpec("other", "nonstylized", 0))
    with pytest.raises(DuplicateBufferError):
        session.register_buffer(BufferSpec("bg2", "background", 5))
    with pytest.raises(InvalidInputError):
        BufferSpec("s", "stylized", 7)  # missing prompt/strength
    with pytest.raises(InvalidInputError):
        BufferSpec("n", "nonstylized", 8, prompt="nope")
    with pytest.raises(InvalidInputError):
        BufferSpec("bad/../id", "nonstylized", 9)


# ---------------------------------------------------------------------------
# submit / assembly
# ---------------------------------------------------------------------------

def test_submit_validations(manager, tmp_path, nprng):
    session = manager.create_session(_config(tmp_path))
    session.register_buffer(BufferSpec("bg", "background", 0))
    with pytest.raises(UnknownBufferError):
        session.submit_layer(0, "ghost", _layer(nprng))
    with pytest.raises(DimensionMismatchError):
        session.submit_layer(0, "bg", random_image(nprng, SIZE + 1, SIZE))
    with pytest.raises(InvalidInputError):
        session.submit_layer(-1, "bg", _layer(nprng))


def test_background_only_frame_passthrough(manager, tmp_path, nprng):
    session = manager.create_session(_config(tmp_path))
    session.register_buffer(BufferSpec("bg", "background", 0))
    img = _layer(nprng)
    session.submit_layer(0, "bg", img)
    assert session.wait_idle(10)
    record = session.get_frame(0)
    assert record.final == img
    assert record.originals["bg"] == img


def test_nonstylized_layer_stored_verbatim_and_composited(manager, tmp_path, nprng):
    session = manager.create_session(_config(tmp_path))
    session.register_buffer(BufferSpec("bg", "background", 0))
    session.register_buffer(BufferSpec("fx", "nonstylized", 1))
    bg = _layer(nprng)
    fx = random_image(nprng, SIZE, SIZE, alpha_choices=(0, 128, 255))
    session.submit_layer(0, "bg", bg)
    session.submit_layer(0, "fx", fx)
    assert session.wait_idle(10)
    record = session.get_frame(0)
    assert record.originals["fx"] == fx  # own alpha preserved, unmodified
    assert record.final == composite([bg, fx])
    assert record.stylized_results == {}


def test_stylized_strength_zero_equals_bg_removed_input(manager, tmp_path, nprng):
    session = manager.create_session(_config(tmp_path))
    session.register_buffer(BufferSpec("bg", "background", 0))
    session.register_buffer(BufferSpec("art", "stylized", 1,
                                       prompt="plain", strength=0.0))
    bg = _layer(nprng)
    art = _layer(nprng)
    session.submit_layer(0, "bg", bg)
    session.submit_layer(0, "art", art)
    assert session.wait_idle(10)
    record = session.get_frame(0)
    want_layer = remove_background(art, 30.0).image
    assert record.stylized_results["art"] == want_layer
    assert record.final == composite([bg, want_layer])


def test_stylized_full_oracle_composition(manager, tmp_path, nprng):
    session = manager.create_session(_config(tmp_path, bg_removal_threshold=25.0))
    session.register_buffer(BufferSpec("bg", "background", 0))
    session.register_buffer(BufferSpec("art", "stylized", 1,
                                       prompt="swirl", strength=0.6))
    bg, art = _layer(nprng), _layer(nprng)
    session.submit_layer(3, "bg", bg)
    session.submit_layer(3, "art", art)
    assert session.wait_idle(10)
    seed = derive_job_seed(session.session_id, 3, "art")
    styled = MockBackend().stylize(StyleRequest(art, "swirl", 0.6, seed))
    want = composite([bg, remove_background(styled, 25.0).image])
    assert session.get_frame(3).final == want


def test_z_order_controls_stacking(manager, tmp_path, nprng):
    session = manager.create_session(_config(tmp_path))
    session.register_buffer(BufferSpec("bg", "background", 5))
    session.register_buffer(BufferSpec("top", "nonstylized", 9))
    session.register_buffer(BufferSpec("mid", "nonstylized", 7))
    bg, mid, top = (_layer(nprng),
                    random_image(nprng, SIZE, SIZE, alpha_choices=(128,)),
                    random_image(nprng, SIZE, SIZE, alpha_choices=(128,)))
    session.submit_layer(0, "top", top)
    session.submit_layer(0, "mid", mid)
    session.submit_layer(0, "bg", bg)
    assert session.wait_idle(10)
    assert session.get_frame(0).final == composite([bg, mid, top])


def test_frame_ready_exactly_once_per_frame(manager, tmp_path, nprng):
    session = manager.create_session(_config(tmp_path))
    events = []
    session.add_listener(events.append)
    session.register_buffer(BufferSpec("bg", "background", 0))
    session.register_buffer(BufferSpec("s", "stylized", 1, prompt="x", strength=0.4))
    for idx in range(6):
        session.submit_layer(idx, "bg", _layer(nprng))
        session.submit_layer(idx, "s", _layer(nprng))
    assert session.wait_idle(20)
    ready = _events_of(events, FrameReady)
    assert sorted(e.frame_index for e in ready) == list(range(6))
    progress = _events_of(events, StoreProgress)
    assert len(progress) == 6
    assert progress[-1].capacity == 10


def test_frame_complete_skips_missing_buffer(manager, tmp_path, nprng):
    session = manager.create_session(_config(tmp_path))
    session.register_buffer(BufferSpec("bg", "background", 0))
    session.register_buffer(BufferSpec("fx", "nonstylized", 1))
    bg = _layer(nprng)
    session.submit_layer(0, "bg", bg)
    assert not session.wait_idle(0.3)  # incomplete: fx missing
    session.frame_complete(0)
    assert session.wait_idle(10)
    assert session.get_frame(0).final == bg


def test_frame_complete_without_layers_rejected(manager, tmp_path):
    session = manager.create_session(_config(tmp_path))
    session.register_buffer(BufferSpec("bg", "background", 0))
    with pytest.raises(InvalidInputError):
        session.frame_complete(0)


def test_resubmitting_assembled_frame_rejected(manager, tmp_path, nprng):
    session = manager.create_session(_config(tmp_path))
    session.register_buffer(BufferSpec("bg", "background", 0))
    session.submit_layer(0, "bg", _layer(nprng))
    assert session.wait_idle(10)
    from artbridge.session import FrameClosedError
    with pytest.raises(FrameClosedError):
        session.submit_layer(0, "bg", _layer(nprng))


# ---------------------------------------------------------------------------
# frame store
# ---------------------------------------------------------------------------

def test_store_eviction_keeps_last_n(manager, tmp_path, nprng):
    session = manager.create_session(_config(tmp_path, frame_store_capacity=10))
    session.register_buffer(BufferSpec("bg", "background", 0))
    finals = {}
    for idx in range(15):
        img = _layer(nprng)
        finals[idx] = img
        session.submit_layer(idx, "bg", img)
    assert session.wait_idle(20)
    for idx in range(5):
        with pytest.raises(NotFoundError) as exc:
            session.get_frame(idx)
        assert exc.value.context["stored_min"] == 5
        assert exc.value.context["stored_max"] == 14
    for idx in range(5, 15):
        assert session.get_frame(idx).final == finals[idx]


def test_get_frame_out_of_range(manager, tmp_path, nprng):
    session = manager.create_session(_config(tmp_path))
    session.register_buffer(BufferSpec("bg", "background", 0))
    for idx in range(3):
        session.submit_layer(idx, "bg", _layer(nprng))
    assert session.wait_idle(10)
    with pytest.raises(NotFoundError):
        session.get_frame(11)
    record = session.get_frame(1)
    assert session.get_frame(1).final_png == record.final_png  # store unchanged


# ---------------------------------------------------------------------------
# backpressure
# ---------------------------------------------------------------------------

def test_backpressure_drops_oldest_incomplete(manager, tmp_path, nprng):
    session = manager.create_session(_config(tmp_path, max_pending_frames=3))
    events = []
    session.add_listener(events.append)
    session.register_buffer(BufferSpec("bg", "background", 0))
    session.register_buffer(BufferSpec("fx", "nonstylized", 1))
    # submit only bg for indices 0..5: every frame stays incomplete
    for idx in range(6):
        session.submit_layer(idx, "bg", _layer(nprng))
    dropped = [e.frame_index for e in _events_of(events, FrameDropped)]
    assert dropped == [0, 1, 2]
    assert [d["frame_index"] for d in session.drop_log()] == [0, 1, 2]
    # late layer for a dropped frame is ignored, it never assembles
    session.submit_layer(0, "fx", _layer(nprng))
    # completing the surviving frames assembles exactly those
    for idx in range(3, 6):
        session.submit_layer(idx, "fx", _layer(nprng))
    assert session.wait_idle(10)
    ready = {e.frame_index for e in _events_of(events, FrameReady)}
    assert ready == {3, 4, 5}
    # exactly one of {frame_ready, drop notice} per submitted frame
    assert ready | set(dropped) == set(range(6))
    assert ready & set(dropped) == set()


# ---------------------------------------------------------------------------
# style capture
# ---------------------------------------------------------------------------

class _CountingBackend(MockBackend):
    def __init__(self, config=None):
        super().__init__(config)
        self.learn_calls = 0

    def style_learn(self, req):
        self.learn_calls += 1
        return super().style_learn(req)


def test_style_capture_full_canvas_white(tmp_path, nprng):
    mgr = SessionManager(BackendConfig(kind="mock", output_size=6))
    try:
        session = mgr.create_session(_config(
            tmp_path, backend=BackendConfig(kind="mock", output_size=6)))
        session.register_buffer(BufferSpec("bg", "background", 0))
        white = RasterImage.filled(SIZE, SIZE, (255, 255, 255, 255))
        session.submit_layer(0, "bg", white)
        assert session.wait_idle(10)
        out = session.style_capture(0, Rect(0, 0, SIZE, SIZE), "styleprompt", 77)
        field = noise_field(77, hash64("styleprompt"), 6, 6)
        assert np.array_equal(out.array[..., :3], field)  # untinted noise
        saved = load_png(session.dir / "styles" / "000.png")
        assert saved == out
    finally:
        mgr.close()


def test_style_capture_oob_rect_never_reaches_backend(tmp_path, nprng):
    backend = _CountingBackend()
    mgr = SessionManager(BackendConfig(kind="mock"))
    try:
        session = mgr.create_session(_config(tmp_path))
        session._backend = backend
        session.register_buffer(BufferSpec("bg", "background", 0))
        session.submit_layer(0, "bg", _layer(nprng))
        assert session.wait_idle(10)
        with pytest.raises(OutOfBoundsError):
            session.style_capture(0, Rect(10, 10, SIZE, SIZE), "p", 1)
        assert backend.learn_calls == 0
        with pytest.raises(NotFoundError):
            session.style_capture(99, Rect(0, 0, 4, 4), "p", 1)
        assert backend.learn_calls == 0
    finally:
        mgr.close()


def test_style_capture_deterministic(tmp_path, nprng):
    mgr = SessionManager(BackendConfig(kind="mock", output_size=5))
    try:
        session = mgr.create_session(_config(
            tmp_path, backend=BackendConfig(kind="mock", output_size=5)))
        session.register_buffer(BufferSpec("bg", "background", 0))
        session.submit_layer(0, "bg", _layer(nprng))
        assert session.wait_idle(10)
        a = session.style_capture(0, Rect(2, 2, 8, 8), "p", 12)
        b = session.style_capture(0, Rect(2, 2, 8, 8), "p", 12)
        assert a == b
    finally:
        mgr.close()


# ---------------------------------------------------------------------------
# persistence / determinism / replay
# ---------------------------------------------------------------------------

def _run_scripted_session(tmp_path, session_id=None, frames=5):
    """Deterministic scripted session; returns (manager closed) session dir."""
    mgr = SessionManager(BackendConfig(kind="mock"), grace_period_s=60.0)
    try:
        session = mgr.create_session(_config(tmp_path), session_id=session_id)
        session.register_buffer(BufferSpec("bg", "background", 0))
        session.register_buffer(BufferSpec("s1", "stylized", 1,
                                           prompt="waves", strength=0.5))
        session.register_buffer(BufferSpec("glow", "nonstylized", 2))
        rng = np.random.default_rng(99)
        for idx in range(frames):
            for buf in ("bg", "s1", "glow"):
                session.submit_layer(idx, buf, random_image(rng, SIZE, SIZE))
            assert session.wait_idle(20)
        return session.dir, session.session_id
    finally:
        mgr.close()


def test_session_dir_layout_and_manifest(tmp_path):
    sdir, sid = _run_scripted_session(tmp_path)
    assert sorted(p.name for p in sdir.glob("*.png")) == [
        f"{i:06d}.png" for i in range(5)]
    assert len(list((sdir / "layers").glob("*.png"))) == 15
    manifest = json.loads((sdir / "manifest.json").read_text())
    assert manifest["session_id"] == sid
    assert [b["buffer_id"] for b in manifest["buffers"]] == ["bg", "s1", "glow"]
    assert manifest["config"]["canvas_width"] == SIZE
    assert manifest["drops"] == []
    assert "frames_dir" not in manifest["config"]  # no absolute paths inside


def _tree_bytes(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


def test_pipeline_bit_deterministic_across_runs(tmp_path):
    dir_a, _ = _run_scripted_session(tmp_path / "a", session_id="fixedsid")
    dir_b, _ = _run_scripted_session(tmp_path / "b", session_id="fixedsid")
    assert _tree_bytes(dir_a) == _tree_bytes(dir_b)


def test_replay_matches_original_and_itself(tmp_path):
    sdir, sid = _run_scripted_session(tmp_path / "live", session_id="replaysid")
    out1 = replay_session(sdir, tmp_path / "replay1")
    out2 = replay_session(sdir, tmp_path / "replay2")
    assert _tree_bytes(out1) == _tree_bytes(out2)
    # replayed finals byte-identical to the live run's
    live = {p.name: p.read_bytes() for p in sdir.glob("*.png")}
    replayed = {p.name: p.read_bytes() for p in out1.glob("*.png")}
    assert live == replayed


class _FailingBackend(MockBackend):
    def stylize(self, req):
        from artbridge.errors import BackendUnavailableError
        raise BackendUnavailableError("stub outage", attempts=3)


def test_backend_failure_surfaces_as_error_and_pipeline_survives(
        manager, tmp_path, nprng):
    session = manager.create_session(_config(tmp_path))
    session._backend = _FailingBackend()
    events = []
    session.add_listener(events.append)
    session.register_buffer(BufferSpec("bg", "background", 0))
    session.register_buffer(BufferSpec("s", "stylized", 1,
                                       prompt="x", strength=0.5))
    bg = _layer(nprng)
    session.submit_layer(0, "bg", bg)
    session.submit_layer(0, "s", _layer(nprng))
    # the failed layer is reported and dropped from the frame, which then
    # assembles from the remaining layers
    deadline = threading.Event()
    deadline.wait(0.1)
    assert session.wait_idle(10)
    errors = _events_of(events, SessionError)
    assert len(errors) == 1
    assert errors[0].code == "BACKEND_UNAVAILABLE"
    assert errors[0].context["buffer_id"] == "s"
    ready = _events_of(events, FrameReady)
    assert [e.frame_index for e in ready] == [0]
    assert session.get_frame(0).final == bg
    # the session keeps serving later frames
    session._backend = MockBackend()
    session.submit_layer(1, "bg", bg)
    session.submit_layer(1, "s", _layer(nprng))
    assert session.wait_idle(10)
    assert session.get_frame(1) is not None


def test_unwritable_frames_dir_rejected(manager, tmp_path):
    blocker = tmp_path / "occupied"
    blocker.write_text("a file, not a directory")
    with pytest.raises(InvalidConfigError):
        manager.create_session(SessionConfig(
            canvas_width=SIZE, canvas_height=SIZE,
            frames_dir=str(blocker)))


def test_session_gc_after_grace(tmp_path, nprng):
    mgr = SessionManager(BackendConfig(kind="mock"), grace_period_s=0.15)
    try:
        session = mgr.create_session(_config(tmp_path))
        sid = session.session_id
        mgr.schedule_gc(sid)
        deadline = threading.Event()
        deadline.wait(0.5)
        assert sid not in mgr.session_ids()
    finally:
        mgr.close()


def test_gc_cancel_keeps_session(tmp_path):
    mgr = SessionManager(BackendConfig(kind="mock"), grace_period_s=0.15)
    try:
        session = mgr.create_session(_config(tmp_path))
        mgr.schedule_gc(session.session_id)
        mgr.cancel_gc(session.session_id)
        threading.Event().wait(0.3)
        assert session.session_id in mgr.session_ids()
    finally:
        mgr.close()
