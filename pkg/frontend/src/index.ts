export {
  ArtBridgeClient,
  BufferHandle,
  ClientOptions,
  WebSocketLike,
} from "./client.js";
export {
  GuiVariable,
  SketchController,
  SketchOptions,
  SketchState,
  StyleResult,
} from "./gui.js";
export { CanvasSurface, StaticSurface, Surface } from "./surfaces.js";
export {
  BufferKind,
  BufferSpec,
  ClientMessage,
  MAX_SAFE_SEED,
  RectSpec,
  ServerMessage,
  SessionConfigSpec,
  decodeServerMessage,
  encodeMessage,
} from "./protocol.js";
export { mountControlPanel, MountedPanel } from "./dom.js";
