"""Command-line entry points.

Subcommands: serve, contours, colors, composite, stylize, replay, bench.
Exit codes: 0 success, 1 usage error (bad flags, missing files), 2 runtime
error. Diagnostics go to stderr; stdout is reserved for piped data.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import ArtBridgeError


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on usage errors, not argparse's 2
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="artbridge",
                     description="Creative-coding stylization pipeline")
    parser.add_argument("--quiet", action="store_true",
                        help="suppress progress output on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the WebSocket frame server")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--config", type=Path, help="TOML or JSON config file")
    p.add_argument("--backend", choices=["mock", "remote"])
    p.add_argument("--endpoint", help="remote backend base URL")
    p.add_argument("--api-key-env", help="env var holding the backend key")
    p.add_argument("--timeout", type=float, help="remote request timeout (s)")
    p.add_argument("--retries", type=int, help="remote retry count")
    p.add_argument("--concurrency", type=int, help="stylize worker cap")
    p.add_argument("--frames-dir", help="directory for persisted frames")
    p.add_argument("--grace", type=float, help="session GC grace period (s)")

    p = sub.add_parser("contours", help="extract a contour map to JSON")
    p.add_argument("input", type=Path)
    p.add_argument("--threshold", type=int, default=128,
                   help="foreground luminance threshold (0-255)")
    p.add_argument("--invert", action="store_true",
                   help="treat dark pixels as foreground")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("colors", help="extract a color palette to JSON")
    p.add_argument("input", type=Path)
    p.add_argument("-n", type=int, default=5, help="palette size")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("composite", help="stack layers bottom-up into one PNG")
    p.add_argument("layers", nargs="+", type=Path,
                   metavar="LAYER", help="background first, top layer last")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("stylize", help="stylize one image")
    p.add_argument("input", type=Path)
    p.add_argument("--prompt", required=True)
    p.add_argument("--strength", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--backend", choices=["mock", "remote"], default="mock")
    p.add_argument("--endpoint")
    p.add_argument("--api-key-env", default="ARTBRIDGE_API_KEY")
    p.add_argument("--timeout", type=float, default=30.0)
    p.add_argument("--retries", type=int, default=2)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("replay",
                       help="re-render a recorded session with the mock backend")
    p.add_argument("session_dir", type=Path)
    p.add_argument("--out-dir", type=Path, required=True)

    p = sub.add_parser("bench", help="measure assembled frames/s; writes "
                                     "timings.csv and throughput.png")
    p.add_argument("--frames", type=int, default=300)
    p.add_argument("--width", type=int, default=512)
    p.add_argument("--height", type=int, default=512)
    p.add_argument("--stylized-buffers", type=int, default=2)
    p.add_argument("--transport", choices=["engine", "ws"], default="engine")
    p.add_argument("--port", type=int, default=8971, help="ws transport port")
    p.add_argument("--out-dir", type=Path, required=True)
    return parser


def _say(args, text: str) -> None:
    if not args.quiet:
        print(text, file=sys.stderr)


def _check_exists(path: Path) -> None:
    if not path.exists():
        raise _UsageError(f"no such file: {path}")


def _cmd_serve(args) -> int:
    from .config import load_server_config
    from .server import ArtBridgeServer

    if args.config is not None:
        _check_exists(args.config)
    overrides = {
        "server.host": args.host,
        "server.port": args.port,
        "server.grace_period_s": args.grace,
        "session.frames_dir": args.frames_dir,
        "backend.kind": args.backend,
        "backend.endpoint": args.endpoint,
        "backend.api_key_env": args.api_key_env,
        "backend.timeout_s": args.timeout,
        "backend.max_retries": args.retries,
        "backend.concurrency": args.concurrency,
    }
    config = load_server_config(args.config, overrides)
    server = ArtBridgeServer(config)
    _say(args, f"listening on {server.address} "
               f"(backend={config.backend.kind}, frames_dir="
               f"{config.session_defaults.frames_dir})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        _say(args, "shutting down")
    finally:
        server.shutdown()
    return 0


def _cmd_contours(args) -> int:
    from .conditioning import extract_contours, save_contour_map
    from .image import load_png

    _check_exists(args.input)
    cmap = extract_contours(load_png(args.input), args.threshold,
                            invert=args.invert)
    save_contour_map(cmap, args.out)
    _say(args, f"{len(cmap.points)} contour points -> {args.out}")
    return 0


def _cmd_colors(args) -> int:
    from .conditioning import sample_colors, save_palette
    from .image import load_png

    _check_exists(args.input)
    palette = sample_colors(load_png(args.input), args.n)
    save_palette(palette, args.out)
    _say(args, f"{len(palette.colors)} colors -> {args.out}")
    return 0


def _cmd_composite(args) -> int:
    from .image import composite, load_png, save_png

    for path in args.layers:
        _check_exists(path)
    final = composite([load_png(p) for p in args.layers])
    save_png(final, args.out)
    _say(args, f"composited {len(args.layers)} layers -> {args.out}")
    return 0


def _cmd_stylize(args) -> int:
    from .backends import BackendConfig, StyleRequest, create_backend
    from .image import load_png, save_png

    _check_exists(args.input)
    config = BackendConfig(kind=args.backend, endpoint=args.endpoint or "",
                           api_key_env=args.api_key_env,
                           timeout_s=args.timeout, max_retries=args.retries)
    backend = create_backend(config)
    try:
        out = backend.stylize(StyleRequest(load_png(args.input), args.prompt,
                                           args.strength, args.seed))
    finally:
        backend.close()
    save_png(out, args.out)
    _say(args, f"stylized -> {args.out}")
    return 0


def _cmd_replay(args) -> int:
    from .session import replay_session

    if not args.session_dir.is_dir():
        raise _UsageError(f"no such session directory: {args.session_dir}")
    progress = None if args.quiet else (
        lambda idx: print(f"frame {idx}", file=sys.stderr))
    out = replay_session(args.session_dir, args.out_dir, progress=progress)
    _say(args, f"replayed -> {out}")
    return 0


def _cmd_bench(args) -> int:
    from .bench import run_engine_bench, run_ws_bench, write_report

    if args.transport == "engine":
        result = run_engine_bench(args.frames, args.width, args.height,
                                  args.stylized_buffers)
    else:
        result = run_ws_bench(args.frames, args.width, args.height,
                              args.stylized_buffers, port=args.port)
    csv_path, fig_path = write_report(result, args.out_dir)
    _say(args, f"report -> {csv_path}, {fig_path}")
    print(f"{result.fps:.2f}")
    return 0


_COMMANDS = {
    "serve": _cmd_serve,
    "contours": _cmd_contours,
    "colors": _cmd_colors,
    "composite": _cmd_composite,
    "stylize": _cmd_stylize,
    "replay": _cmd_replay,
    "bench": _cmd_bench,
}


def run(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: no such file: {exc}", file=sys.stderr)
        return 1
    except ArtBridgeError as exc:
        print(f"error [{exc.code}]: {exc.message}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
