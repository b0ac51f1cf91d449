/**
 * Session client: registers buffers, streams committed frames to the
 * server, and tracks replies. Pixels pass through untouched: every image
 * this client exposes is byte-identical to a server payload.
 */

import {
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
import { Surface } from "./surfaces.js";

/** The subset of the WebSocket API the client needs; browser WebSocket
 * and the `ws` package both satisfy it. */
export interface WebSocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  readyState: number;
}

const OPEN = 1;
const OFFLINE_QUEUE_CAP = 64;

export interface BufferHandle {
  readonly id: string;
  readonly kind: BufferKind;
  readonly zOrder: number;
  readonly surface: Surface;
}

export interface ClientOptions {
  url: string;
  socketFactory?: (url: string) => WebSocketLike;
  /** Called for server errors that are not tied to a pending request. */
  onError?: (code: string, message: string, context?: Record<string, unknown>) => void;
}

interface Pending<T> {
  resolve: (value: T) => void;
  reject: (err: Error) => void;
}

export class ArtBridgeClient {
  private socket: WebSocketLike | null = null;
  private sessionId: string | null = null;
  private frameIndex = 0;
  private displayedIndex = -1;
  private buffers: BufferHandle[] = [];
  private lastCaptures_ = new Map<string, string>();
  private offlineQueue: string[] = [];
  private pendingSession: Pending<string>[] = [];
  private pendingFrames = new Map<number, Pending<string>[]>();
  private pendingStyles: Pending<string>[] = [];
  private frameReadyHandlers: Array<(index: number, pngB64: string) => void> = [];
  private storeProgressHandlers: Array<(stored: number, capacity: number) => void> = [];
  private closeHandlers: Array<() => void> = [];

  constructor(private readonly options: ClientOptions) {}

  // -- connection ----------------------------------------------------------

  connect(): Promise<void> {
    const factory =
      this.options.socketFactory ??
      ((url: string) => new WebSocket(url) as unknown as WebSocketLike);
    const socket = factory(this.options.url);
    this.socket = socket;
    return new Promise((resolve, reject) => {
      socket.onopen = () => {
        this.flushOfflineQueue();
        resolve();
      };
      socket.onerror = (ev) => reject(new Error(`connection failed: ${ev}`));
      socket.onclose = () => this.handleClose();
      socket.onmessage = (ev) => this.handleMessage(String(ev.data));
    });
  }

  get connected(): boolean {
    return this.socket !== null && this.socket.readyState === OPEN;
  }

  close(): void {
    this.socket?.close();
  }

  onClose(handler: () => void): void {
    this.closeHandlers.push(handler);
  }

  private handleClose(): void {
    for (const handler of this.closeHandlers) handler();
  }

  // -- outbound ------------------------------------------------------------

  private sendMessage(msg: ClientMessage): void {
    const text = encodeMessage(msg);
    if (this.connected) {
      this.socket!.send(text);
      return;
    }
    if (this.offlineQueue.length >= OFFLINE_QUEUE_CAP) {
      console.warn("artbridge: offline queue full, dropping message", msg.type);
      return;
    }
    this.offlineQueue.push(text);
  }

  private flushOfflineQueue(): void {
    const queued = this.offlineQueue;
    this.offlineQueue = [];
    for (const text of queued) this.socket!.send(text);
  }

  // -- session -------------------------------------------------------------

  createSession(config: SessionConfigSpec): Promise<string> {
    this.sessionId = null;
    this.frameIndex = 0;
    this.displayedIndex = -1;
    this.buffers = [];
    this.lastCaptures_.clear();
    this.sendMessage({ type: "create_session", config });
    return new Promise((resolve, reject) => {
      this.pendingSession.push({ resolve, reject });
    });
  }

  get session(): string {
    if (this.sessionId === null) throw new Error("no session yet");
    return this.sessionId;
  }

  get nextFrameIndex(): number {
    return this.frameIndex;
  }

  get latestDisplayedIndex(): number {
    return this.displayedIndex;
  }

  get bufferHandles(): readonly BufferHandle[] {
    return this.buffers;
  }

  /** The most recent capture per buffer, for the debug containers. */
  get lastCaptures(): ReadonlyMap<string, string> {
    return this.lastCaptures_;
  }

  // -- buffers -------------------------------------------------------------

  setBackground(surface: Surface): BufferHandle {
    return this.registerBuffer("background", 0, surface);
  }

  createStylizedBuffer(
    prompt: string,
    strength: number,
    zOrder: number,
    surface: Surface,
  ): BufferHandle {
    if (!(strength >= 0 && strength <= 1)) {
      throw new RangeError(`strength ${strength} outside [0, 1]`);
    }
    return this.registerBuffer("stylized", zOrder, surface, prompt, strength);
  }

  createNonstylizedBuffer(zOrder: number, surface: Surface): BufferHandle {
    return this.registerBuffer("nonstylized", zOrder, surface);
  }

  private registerBuffer(
    kind: BufferKind,
    zOrder: number,
    surface: Surface,
    prompt?: string,
    strength?: number,
  ): BufferHandle {
    const id =
      kind === "background" ? "bg" : `${kind === "stylized" ? "styl" : "layer"}${this.buffers.length}`;
    const spec: BufferSpec = { buffer_id: id, kind, z_order: zOrder };
    if (kind === "stylized") {
      spec.prompt = prompt;
      spec.strength = strength;
    }
    this.sendMessage({ type: "register_buffer", session_id: this.session, spec });
    const handle: BufferHandle = { id, kind, zOrder, surface };
    this.buffers.push(handle);
    return handle;
  }

  // -- frames --------------------------------------------------------------

  /** Capture every buffer surface and submit one animation frame. */
  async commitFrame(): Promise<number> {
    if (this.buffers.length === 0) throw new Error("no buffers registered");
    const index = this.frameIndex;
    this.frameIndex += 1;
    for (const buffer of this.buffers) {
      const pngB64 = await buffer.surface.capturePngBase64();
      this.lastCaptures_.set(buffer.id, pngB64);
      this.sendMessage({
        type: "frame_layer",
        session_id: this.session,
        frame_index: index,
        buffer_id: buffer.id,
        png_b64: pngB64,
      });
    }
    this.sendMessage({
      type: "frame_complete",
      session_id: this.session,
      frame_index: index,
    });
    return index;
  }

  getFrame(frameIndex: number): Promise<string> {
    this.sendMessage({
      type: "get_frame",
      session_id: this.session,
      frame_index: frameIndex,
    });
    return new Promise((resolve, reject) => {
      const waiting = this.pendingFrames.get(frameIndex) ?? [];
      waiting.push({ resolve, reject });
      this.pendingFrames.set(frameIndex, waiting);
    });
  }

  styleCapture(
    frameIndex: number,
    rect: RectSpec,
    prompt: string,
    seed: number,
  ): Promise<string> {
    if (!Number.isInteger(seed) || seed < 0 || seed > MAX_SAFE_SEED) {
      throw new RangeError(`seed must be an integer in [0, ${MAX_SAFE_SEED}]`);
    }
    this.sendMessage({
      type: "style_capture",
      session_id: this.session,
      frame_index: frameIndex,
      rect,
      prompt,
      seed,
    });
    return new Promise((resolve, reject) => {
      this.pendingStyles.push({ resolve, reject });
    });
  }

  // -- inbound -------------------------------------------------------------

  onFrameReady(handler: (index: number, pngB64: string) => void): void {
    this.frameReadyHandlers.push(handler);
  }

  onStoreProgress(handler: (stored: number, capacity: number) => void): void {
    this.storeProgressHandlers.push(handler);
  }

  private handleMessage(raw: string): void {
    let msg: ServerMessage;
    try {
      msg = decodeServerMessage(raw);
    } catch (err) {
      console.warn("artbridge: dropping unreadable server message", err);
      return;
    }
    switch (msg.type) {
      case "session_created": {
        this.sessionId = msg.session_id;
        const waiting = this.pendingSession;
        this.pendingSession = [];
        for (const p of waiting) p.resolve(msg.session_id);
        break;
      }
      case "frame_ready": {
        // monotone display: a late lower-index frame is never shown
        if (msg.frame_index < this.displayedIndex) return;
        this.displayedIndex = msg.frame_index;
        for (const handler of this.frameReadyHandlers) {
          handler(msg.frame_index, msg.png_b64);
        }
        break;
      }
      case "store_progress": {
        for (const handler of this.storeProgressHandlers) {
          handler(msg.stored, msg.capacity);
        }
        break;
      }
      case "frame_data": {
        const waiting = this.pendingFrames.get(msg.frame_index);
        if (waiting && waiting.length > 0) {
          waiting.shift()!.resolve(msg.png_b64);
          if (waiting.length === 0) this.pendingFrames.delete(msg.frame_index);
        }
        break;
      }
      case "style_result": {
        const pending = this.pendingStyles.shift();
        pending?.resolve(msg.png_b64);
        break;
      }
      case "error": {
        this.routeError(msg.code, msg.message, msg.context);
        break;
      }
    }
  }

  private routeError(
    code: string,
    message: string,
    context?: Record<string, unknown>,
  ): void {
    const err = new Error(`[${code}] ${message}`);
    if (this.pendingSession.length > 0 && code === "INVALID_CONFIG") {
      this.pendingSession.shift()!.reject(err);
      return;
    }
    const frameIndex = context?.frame_index;
    if (code === "NOT_FOUND" && typeof frameIndex === "number") {
      const waiting = this.pendingFrames.get(frameIndex);
      if (waiting && waiting.length > 0) {
        waiting.shift()!.reject(err);
        if (waiting.length === 0) this.pendingFrames.delete(frameIndex);
        return;
      }
    }
    if ((code === "OUT_OF_BOUNDS" || code === "INVALID_REFERENCE"
         || code === "BACKEND_UNAVAILABLE") && this.pendingStyles.length > 0) {
      this.pendingStyles.shift()!.reject(err);
      return;
    }
    this.options.onError?.(code, message, context);
  }
}
