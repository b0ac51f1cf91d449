/**
 * Drawing surfaces a sketch renders into. Each registered buffer owns one;
 * commitFrame() captures them as PNG.
 */

export interface Surface {
  readonly width: number;
  readonly height: number;
  /** Base64 PNG of the current contents. */
  capturePngBase64(): string | Promise<string>;
}

/** Fixed-content surface; handy for tests and static layers. */
export class StaticSurface implements Surface {
  constructor(
    public readonly width: number,
    public readonly height: number,
    private pngB64: string,
  ) {}

  setPngBase64(pngB64: string): void {
    this.pngB64 = pngB64;
  }

  capturePngBase64(): string {
    return this.pngB64;
  }
}

/** Wraps an HTMLCanvasElement (or an offscreen p5 graphics canvas). */
export class CanvasSurface implements Surface {
  constructor(private readonly canvas: HTMLCanvasElement) {}

  get width(): number {
    return this.canvas.width;
  }

  get height(): number {
    return this.canvas.height;
  }

  capturePngBase64(): string {
    const url = this.canvas.toDataURL("image/png");
    const comma = url.indexOf(",");
    return url.slice(comma + 1);
  }
}
