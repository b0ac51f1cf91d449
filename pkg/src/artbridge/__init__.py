"""ArtBridge: stylize and condition creative-coding animation frames with
pluggable diffusion backends, served over WebSocket."""

from .backends import (
    BackendConfig,
    HealthReport,
    MockBackend,
    RemoteBackend,
    StyleLearnRequest,
    StyleRequest,
    create_backend,
    health_check,
)
from .conditioning import (
    ContourMap,
    Palette,
    extract_contours,
    find_nearest_contour,
    sample_colors,
    sample_contour_points,
)
from .errors import ArtBridgeError
from .image import (
    ColorRGBA,
    RasterImage,
    Rect,
    composite,
    crop,
    decode_png,
    encode_png,
    load_png,
    remove_background,
    resize_nearest,
    save_png,
)
from .session import (
    BufferSpec,
    FrameRecord,
    Session,
    SessionConfig,
    SessionManager,
    replay_session,
)

__version__ = "0.1.0"

__all__ = [
    "ArtBridgeError",
    "BackendConfig",
    "BufferSpec",
    "ColorRGBA",
    "ContourMap",
    "FrameRecord",
    "HealthReport",
    "MockBackend",
    "Palette",
    "RasterImage",
    "Rect",
    "RemoteBackend",
    "Session",
    "SessionConfig",
    "SessionManager",
    "StyleLearnRequest",
    "StyleRequest",
    "composite",
    "create_backend",
    "crop",
    "decode_png",
    "encode_png",
    "extract_contours",
    "find_nearest_contour",
    "health_check",
    "load_png",
    "remove_background",
    "replay_session",
    "resize_nearest",
    "sample_colors",
    "sample_contour_points",
    "save_png",
    "__version__",
]
