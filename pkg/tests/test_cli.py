"""CLI tests: each subcommand is a thin adapter over the library, with the
documented exit codes."""

import json
import subprocess
import sys

import numpy as np

from artbridge.cli import run
from artbridge.conditioning import load_contour_map, load_palette
from artbridge.image import (
    RasterImage,
    composite,
    load_png,
    save_png,
)

from conftest import make_image, random_image


def _square_fixture(tmp_path):
    arr = np.zeros((8, 8, 4), dtype=np.uint8)
    arr[..., 3] = 255
    arr[2:6, 2:6, :3] = 255
    path = tmp_path / "square.png"
    save_png(make_image(arr), path)
    return path


def test_contours_subcommand(tmp_path, capsys):
    src = _square_fixture(tmp_path)
    out = tmp_path / "map.json"
    assert run(["contours", str(src), "--out", str(out)]) == 0
    cmap = load_contour_map(out)
    assert len(cmap.points) == 12
    assert capsys.readouterr().out == ""  # stdout reserved for piped data


def test_contours_invert_flag(tmp_path):
    src = _square_fixture(tmp_path)
    out = tmp_path / "inv.json"
    assert run(["contours", str(src), "--invert", "--out", str(out)]) == 0
    inv = load_contour_map(out)
    # inverted: dark region is foreground; its contour is larger (image edge)
    assert len(inv.points) > 12


def test_colors_subcommand(tmp_path):
    arr = np.zeros((4, 4, 4), dtype=np.uint8)
    arr[..., 3] = 255
    arr[:2, :, :3] = (255, 0, 0)
    arr[2:, :, :3] = (0, 0, 255)
    src = tmp_path / "bi.png"
    save_png(make_image(arr), src)
    out = tmp_path / "pal.json"
    assert run(["colors", str(src), "-n", "2", "--out", str(out)]) == 0
    palette = load_palette(out)
    assert [c[:3] for c in palette.colors] == [(0, 0, 255), (255, 0, 0)]


def test_composite_subcommand(tmp_path, nprng):
    layers = [random_image(nprng, 6, 6, alpha_choices=(128, 255))
              for _ in range(3)]
    paths = []
    for i, layer in enumerate(layers):
        p = tmp_path / f"l{i}.png"
        save_png(layer, p)
        paths.append(str(p))
    out = tmp_path / "final.png"
    assert run(["composite", *paths, "--out", str(out)]) == 0
    assert load_png(out) == composite(layers)


def test_stylize_strength_zero_identity(tmp_path, nprng):
    src = tmp_path / "in.png"
    img = random_image(nprng, 9, 9)
    save_png(img, src)
    out = tmp_path / "out.png"
    assert run(["stylize", str(src), "--prompt", "p", "--strength", "0",
                "--backend", "mock", "--out", str(out)]) == 0
    assert out.read_bytes() == src.read_bytes()  # byte-identical PNG


def test_stylize_matches_library(tmp_path, nprng):
    from artbridge.backends import MockBackend, StyleRequest

    src = tmp_path / "in.png"
    img = random_image(nprng, 7, 5)
    save_png(img, src)
    out = tmp_path / "out.png"
    assert run(["stylize", str(src), "--prompt", "wave", "--strength", "0.5",
                "--seed", "3", "--out", str(out)]) == 0
    want = MockBackend().stylize(StyleRequest(img, "wave", 0.5, 3))
    assert load_png(out) == want


def test_replay_twice_identical(tmp_path, nprng):
    # record a session by driving the library directly
    from artbridge.backends import BackendConfig
    from artbridge.session import BufferSpec, SessionConfig, SessionManager

    live_root = tmp_path / "live"
    mgr = SessionManager(BackendConfig(kind="mock"))
    try:
        session = mgr.create_session(SessionConfig(
            canvas_width=12, canvas_height=12, frames_dir=str(live_root)))
        session.register_buffer(BufferSpec("bg", "background", 0))
        session.register_buffer(BufferSpec("s", "stylized", 1,
                                           prompt="dots", strength=0.4))
        for idx in range(4):
            session.submit_layer(idx, "bg", random_image(nprng, 12, 12))
            session.submit_layer(idx, "s", random_image(nprng, 12, 12))
        assert session.wait_idle(20)
        sdir = session.dir
    finally:
        mgr.close()

    assert run(["--quiet", "replay", str(sdir), "--out-dir",
                str(tmp_path / "r1")]) == 0
    assert run(["--quiet", "replay", str(sdir), "--out-dir",
                str(tmp_path / "r2")]) == 0
    r1 = {p.name: p.read_bytes() for p in (tmp_path / "r1").rglob("*") if p.is_file()}
    r2 = {p.name: p.read_bytes() for p in (tmp_path / "r2").rglob("*") if p.is_file()}
    assert r1 == r2
    live_finals = sorted(p.name for p in sdir.glob("*.png"))
    assert sorted(n for n in r1 if n.endswith(".png") and len(n) == 10) \
        == live_finals


def test_bench_writes_report(tmp_path, capsys):
    out_dir = tmp_path / "report"
    code = run(["--quiet", "bench", "--frames", "12", "--width", "48",
                "--height", "48", "--stylized-buffers", "1",
                "--transport", "engine", "--out-dir", str(out_dir)])
    assert code == 0
    assert (out_dir / "timings.csv").is_file()
    assert (out_dir / "throughput.png").is_file()
    summary = json.loads((out_dir / "summary.json").read_text())
    assert summary["frames"] == 12
    fps_line = capsys.readouterr().out.strip()
    assert float(fps_line) > 0


def test_usage_errors_exit_1(tmp_path, capsys):
    assert run(["contours", str(tmp_path / "missing.png"),
                "--out", str(tmp_path / "m.json")]) == 1
    assert run(["no-such-command"]) == 1
    assert run(["stylize"]) == 1  # missing required flags
    err = capsys.readouterr().err
    assert "usage" in err.lower() or "error" in err.lower()


def test_runtime_errors_exit_2(tmp_path, nprng):
    src = tmp_path / "in.png"
    save_png(random_image(nprng, 4, 4), src)
    code = run(["stylize", str(src), "--prompt", "p", "--backend", "remote",
                "--endpoint", "http://127.0.0.1:1", "--timeout", "0.3",
                "--retries", "0", "--out", str(tmp_path / "o.png")])
    assert code == 2


def test_corrupt_input_exits_2(tmp_path):
    bad = tmp_path / "bad.png"
    bad.write_bytes(b"not a png")
    assert run(["contours", str(bad), "--out", str(tmp_path / "m.json")]) == 2


def test_console_entrypoint_subprocess(tmp_path):
    src = _square_fixture(tmp_path)
    out = tmp_path / "map.json"
    proc = subprocess.run(
        [sys.executable, "-m", "artbridge.cli", "--quiet", "contours",
         str(src), "--out", str(out)],
        capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0, proc.stderr
    assert out.is_file()
