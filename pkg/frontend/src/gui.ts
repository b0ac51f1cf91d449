/**
 * Operator controls for a wrapped sketch: variable panel, frame store
 * counter, rewind slider, prompt box, and the keyboard-driven capture
 * square. The controller is headless (no DOM); `dom.ts` renders it.
 *
 * State machine: idle -> storing -> browse <-> capture. Any variable
 * change restarts the animation (exactly one refresh per change); Escape
 * always lands back in browse.
 */

import { ArtBridgeClient } from "./client.js";
import { RectSpec } from "./protocol.js";

export type GuiVariable =
  | {
      name: string;
      kind: "number"; // number-with-range
      value: number;
      min: number;
      max: number;
      step?: number;
    }
  | { name: string; kind: "boolean"; value: boolean }
  | { name: string; kind: "choice"; value: string; choices: string[] };

export type SketchState = "idle" | "storing" | "browse" | "capture";

export interface StyleResult {
  pngB64: string;
  prompt: string;
  seed: number;
  frameIndex: number;
}

export interface SketchOptions {
  client: ArtBridgeClient;
  canvasWidth: number;
  canvasHeight: number;
  /** How many frames each run stores (the rewind window). */
  frameCapacity: number;
  variables: GuiVariable[];
  /** Rebuilds the sketch: register buffers and reset drawing state. */
  init: (client: ArtBridgeClient) => void | Promise<void>;
  /** Renders one animation frame into the registered surfaces. */
  draw: (frameIndex: number) => void | Promise<void>;
  /** Seed source for style captures; injectable for reproducibility. */
  seedSource?: () => number;
}

const MOVE_STEP = 8;
const RESIZE_STEP = 8;
const MIN_SQUARE = 8;

export class SketchController {
  readonly variables = new Map<string, GuiVariable>();

  private state_: SketchState = "idle";
  private prompt = "";
  private stored = 0;
  private committed = 0;
  private refreshes = 0;
  private serverUp = true;
  private currentIndex = -1;
  private displayedPng: string | null = null;
  private square: RectSpec;
  private styleResults_: StyleResult[] = [];
  private displayHandlers: Array<(pngB64: string, index: number) => void> = [];
  private styleHandlers: Array<(result: StyleResult) => void> = [];
  private stateHandlers: Array<(state: SketchState) => void> = [];

  constructor(private readonly opts: SketchOptions) {
    for (const variable of opts.variables) {
      this.variables.set(variable.name, { ...variable });
    }
    const side = Math.max(
      MIN_SQUARE,
      Math.floor(Math.min(opts.canvasWidth, opts.canvasHeight) / 4),
    );
    this.square = {
      x: Math.floor((opts.canvasWidth - side) / 2),
      y: Math.floor((opts.canvasHeight - side) / 2),
      w: side,
      h: side,
    };
    opts.client.onStoreProgress((stored) => this.handleStoreProgress(stored));
    opts.client.onFrameReady((index, pngB64) => {
      this.currentIndex = index;
      this.displayedPng = pngB64;
      for (const handler of this.displayHandlers) handler(pngB64, index);
    });
    opts.client.onClose(() => {
      this.serverUp = false;
      this.setState("idle");
    });
  }

  // -- observers -----------------------------------------------------------

  get state(): SketchState {
    return this.state_;
  }

  get client(): ArtBridgeClient {
    return this.opts.client;
  }

  get serverAvailable(): boolean {
    return this.serverUp;
  }

  get storedFrames(): number {
    return this.stored;
  }

  get frameCapacity(): number {
    return this.opts.frameCapacity;
  }

  get sliderEnabled(): boolean {
    return this.state_ === "browse" || this.state_ === "capture";
  }

  get refreshCount(): number {
    return this.refreshes;
  }

  get captureSquare(): Readonly<RectSpec> {
    return this.square;
  }

  get currentPrompt(): string {
    return this.prompt;
  }

  get styleResults(): readonly StyleResult[] {
    return this.styleResults_;
  }

  get displayedImage(): string | null {
    return this.displayedPng;
  }

  onDisplay(handler: (pngB64: string, index: number) => void): void {
    this.displayHandlers.push(handler);
  }

  onStyleResult(handler: (result: StyleResult) => void): void {
    this.styleHandlers.push(handler);
  }

  onStateChange(handler: (state: SketchState) => void): void {
    this.stateHandlers.push(handler);
  }

  private setState(state: SketchState): void {
    if (state === this.state_) return;
    this.state_ = state;
    for (const handler of this.stateHandlers) handler(state);
  }

  // -- lifecycle -----------------------------------------------------------

  /** Start (or restart) the animation: new session, fresh frame sequence. */
  async refresh(): Promise<void> {
    if (!this.serverUp) return;
    this.refreshes += 1;
    this.stored = 0;
    this.committed = 0;
    this.currentIndex = -1;
    await this.opts.client.createSession({
      canvas_width: this.opts.canvasWidth,
      canvas_height: this.opts.canvasHeight,
      frame_store_capacity: this.opts.frameCapacity,
    });
    await this.opts.init(this.opts.client);
    this.setState("storing");
  }

  start(): Promise<void> {
    return this.refresh();
  }

  /** Advance the animation by one frame while storing. */
  async tick(): Promise<void> {
    if (this.state_ !== "storing" || !this.serverUp) return;
    if (this.committed >= this.opts.frameCapacity) return;
    const index = this.opts.client.nextFrameIndex;
    await this.opts.draw(index);
    await this.opts.client.commitFrame();
    this.committed += 1;
  }

  private handleStoreProgress(stored: number): void {
    this.stored = Math.min(stored, this.opts.frameCapacity);
    if (this.state_ === "storing" && this.stored >= this.opts.frameCapacity) {
      this.setState("browse");
    }
  }

  // -- variable panel ------------------------------------------------------

  /** Validates and applies a variable change; triggers exactly one refresh. */
  async setVariable(name: string, value: number | boolean | string): Promise<void> {
    const variable = this.variables.get(name);
    if (!variable) throw new Error(`unknown variable ${name}`);
    switch (variable.kind) {
      case "number": {
        if (typeof value !== "number" || Number.isNaN(value)) {
          throw new RangeError(`${name} expects a number`);
        }
        if (value < variable.min || value > variable.max) {
          throw new RangeError(
            `${name}=${value} outside [${variable.min}, ${variable.max}]`);
        }
        variable.value = value;
        break;
      }
      case "boolean": {
        if (typeof value !== "boolean") {
          throw new RangeError(`${name} expects a boolean`);
        }
        variable.value = value;
        break;
      }
      case "choice": {
        if (typeof value !== "string" || !variable.choices.includes(value)) {
          throw new RangeError(`${name} must be one of ${variable.choices}`);
        }
        variable.value = value;
        break;
      }
    }
    await this.refresh();
  }

  getVariable(name: string): number | boolean | string {
    const variable = this.variables.get(name);
    if (!variable) throw new Error(`unknown variable ${name}`);
    return variable.value;
  }

  // -- prompt + rewind -----------------------------------------------------

  setPrompt(text: string): void {
    this.prompt = text;
  }

  /** Rewind: fetch a stored frame and display the server's exact bytes. */
  async selectFrame(index: number): Promise<string> {
    if (!this.sliderEnabled) throw new Error("frame store not complete yet");
    const pngB64 = await this.opts.client.getFrame(index);
    this.currentIndex = index;
    this.displayedPng = pngB64;
    for (const handler of this.displayHandlers) handler(pngB64, index);
    return pngB64;
  }

  // -- capture square ------------------------------------------------------

  /** Keyboard protocol: Tab arms the square, arrows move it, +/- resize,
   * Enter (or a mouse click via confirmCapture) confirms, Escape returns
   * to browse without sending anything. */
  async handleKey(key: string): Promise<void> {
    if (key === "Escape") {
      if (this.state_ === "capture" || this.state_ === "storing") {
        this.setState("browse");
      }
      return;
    }
    if (key === "Tab") {
      if (this.state_ === "browse") this.setState("capture");
      return;
    }
    if (this.state_ !== "capture") return;
    const sq = this.square;
    switch (key) {
      case "ArrowLeft":
        sq.x = Math.max(0, sq.x - MOVE_STEP);
        break;
      case "ArrowRight":
        sq.x = Math.min(this.opts.canvasWidth - sq.w, sq.x + MOVE_STEP);
        break;
      case "ArrowUp":
        sq.y = Math.max(0, sq.y - MOVE_STEP);
        break;
      case "ArrowDown":
        sq.y = Math.min(this.opts.canvasHeight - sq.h, sq.y + MOVE_STEP);
        break;
      case "+":
      case "=": {
        const grown = Math.min(
          sq.w + RESIZE_STEP,
          this.opts.canvasWidth - sq.x,
          this.opts.canvasHeight - sq.y,
        );
        sq.w = sq.h = grown;
        break;
      }
      case "-":
        sq.w = sq.h = Math.max(MIN_SQUARE, sq.w - RESIZE_STEP);
        break;
      case "Enter":
        await this.confirmCapture();
        break;
    }
  }

  /** Confirm the square (mouse click or Enter): send style_capture. */
  async confirmCapture(): Promise<StyleResult> {
    if (this.state_ !== "capture") throw new Error("capture square not armed");
    if (this.currentIndex < 0) throw new Error("no frame selected");
    const seed =
      this.opts.seedSource?.() ?? Math.floor(Math.random() * Number.MAX_SAFE_INTEGER);
    const frameIndex = this.currentIndex;
    const pngB64 = await this.opts.client.styleCapture(
      frameIndex, { ...this.square }, this.prompt, seed);
    const result: StyleResult = { pngB64, prompt: this.prompt, seed, frameIndex };
    this.styleResults_.push(result);
    for (const handler of this.styleHandlers) handler(result);
    this.setState("browse");
    return result;
  }
}
