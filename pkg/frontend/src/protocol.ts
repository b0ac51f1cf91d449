/**
 * Wire protocol mirror: one JSON message per WebSocket text frame.
 * Field shapes must match the server exactly; images travel as base64
 * PNG strings and are never touched client-side.
 */

export type BufferKind = "background" | "stylized" | "nonstylized";

export interface BufferSpec {
  buffer_id: string;
  kind: BufferKind;
  z_order: number;
  prompt?: string | null;
  strength?: number | null;
}

export interface RectSpec {
  x: number;
  y: number;
  w: number;
  h: number;
}

export interface SessionConfigSpec {
  canvas_width: number;
  canvas_height: number;
  framerate?: number;
  frame_store_capacity?: number;
  max_pending_frames?: number;
  bg_removal_threshold?: number;
}

export type ClientMessage =
  | { type: "create_session"; config: SessionConfigSpec }
  | { type: "register_buffer"; session_id: string; spec: BufferSpec }
  | {
      type: "frame_layer";
      session_id: string;
      frame_index: number;
      buffer_id: string;
      png_b64: string;
    }
  | { type: "frame_complete"; session_id: string; frame_index: number }
  | { type: "get_frame"; session_id: string; frame_index: number }
  | {
      type: "style_capture";
      session_id: string;
      frame_index: number;
      rect: RectSpec;
      prompt: string;
      seed: number;
    };

export type ServerMessage =
  | { type: "session_created"; session_id: string }
  | {
      type: "frame_ready";
      session_id: string;
      frame_index: number;
      png_b64: string;
    }
  | {
      type: "store_progress";
      session_id: string;
      stored: number;
      capacity: number;
    }
  | {
      type: "frame_data";
      session_id: string;
      frame_index: number;
      png_b64: string;
    }
  | { type: "style_result"; session_id: string; png_b64: string }
  | {
      type: "error";
      session_id: string | null;
      code: string;
      message: string;
      context?: Record<string, unknown>;
    };

export function encodeMessage(msg: ClientMessage): string {
  return JSON.stringify(msg);
}

export function decodeServerMessage(raw: string): ServerMessage {
  let obj: unknown;
  try {
    obj = JSON.parse(raw);
  } catch (err) {
    throw new Error(`undecodable server message: ${err}`);
  }
  if (typeof obj !== "object" || obj === null || typeof (obj as { type?: unknown }).type !== "string") {
    throw new Error("server message missing type");
  }
  const msg = obj as ServerMessage;
  switch (msg.type) {
    case "session_created":
    case "frame_ready":
    case "store_progress":
    case "frame_data":
    case "style_result":
    case "error":
      return msg;
    default:
      throw new Error(`unknown server message type ${(msg as { type: string }).type}`);
  }
}

/** Largest seed a JS number can carry exactly over the JSON protocol. */
export const MAX_SAFE_SEED = Number.MAX_SAFE_INTEGER;
