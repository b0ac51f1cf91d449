"""Server/session configuration files (TOML or JSON, chosen by extension).

Schema mirrors SessionConfig defaults plus server and backend sections::

    [server]   host, port, grace_period_s
    [session]  canvas_width, canvas_height, framerate, frame_store_capacity,
               max_pending_frames, bg_removal_threshold, frames_dir
    [backend]  kind, endpoint, api_key_env, timeout_s, max_retries,
               output_size, concurrency

CLI flags override file values; API keys come only from the environment
variable named by `api_key_env`.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

from .backends import BackendConfig
from .errors import InvalidConfigError
from .server import ServerConfig
from .session import SessionConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


def _read_file(path: Path) -> dict:
    if not path.is_file():
        raise FileNotFoundError(path)
    if path.suffix.lower() == ".json":
        return json.loads(path.read_text(encoding="utf-8"))
    if path.suffix.lower() == ".toml":
        with path.open("rb") as fh:
            return tomllib.load(fh)
    raise InvalidConfigError(f"config must be .toml or .json, got {path.suffix!r}")


def load_server_config(path: str | Path | None = None,
                       overrides: dict | None = None) -> ServerConfig:
    """Build a ServerConfig from an optional file plus flat CLI overrides.

    Override keys use dotted names matching the file sections, e.g.
    ``{"server.port": 9000, "backend.kind": "remote"}``.
    """
    raw: dict = {}
    if path is not None:
        raw = _read_file(Path(path))
        if not isinstance(raw, dict):
            raise InvalidConfigError("config root must be a table/object")

    server = dict(raw.get("server", {}))
    session = dict(raw.get("session", {}))
    backend = dict(raw.get("backend", {}))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        section, _, name = key.partition(".")
        {"server": server, "session": session, "backend": backend}[section][name] = value

    try:
        backend_cfg = BackendConfig(
            kind=backend.get("kind", "mock"),
            endpoint=backend.get("endpoint", ""),
            api_key_env=backend.get("api_key_env", "ARTBRIDGE_API_KEY"),
            timeout_s=float(backend.get("timeout_s", 30.0)),
            max_retries=int(backend.get("max_retries", 2)),
            output_size=int(backend.get("output_size", 512)),
            concurrency=int(backend.get("concurrency", 4)),
        )
        session_cfg = SessionConfig(
            canvas_width=int(session.get("canvas_width", 512)),
            canvas_height=int(session.get("canvas_height", 512)),
            framerate=float(session.get("framerate", 30.0)),
            frame_store_capacity=int(session.get("frame_store_capacity", 30)),
            max_pending_frames=int(session.get("max_pending_frames", 8)),
            bg_removal_threshold=float(session.get("bg_removal_threshold", 30.0)),
            frames_dir=str(session.get("frames_dir", "frames")),
            backend=backend_cfg,
        )
        return ServerConfig(
            host=str(server.get("host", "127.0.0.1")),
            port=int(server.get("port", 8765)),
            grace_period_s=float(server.get("grace_period_s", 60.0)),
            session_defaults=session_cfg,
            backend=backend_cfg,
        )
    except (TypeError, ValueError) as exc:
        raise InvalidConfigError(f"bad config value: {exc}") from exc
