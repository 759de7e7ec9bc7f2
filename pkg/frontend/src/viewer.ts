/** Canvas renderer for one slice: grayscale intensities, the segmentation in
 * red with adjustable opacity, foreground scribbles in green, background in
 * blue. Everything is drawn 1:1 into an offscreen buffer and scaled up. */

import { decodeIntensity, type SlicePayload } from "./api.js";
import { decodeMaskRle } from "./rle.js";
import type { PlanePoint } from "./brush.js";

export interface WindowLevel {
  level: number; // 0..255 grayscale center
  width: number; // 1..255
}

export const SEGMENTATION_RGBA: [number, number, number] = [230, 40, 30];
export const FOREGROUND_RGBA: [number, number, number] = [40, 200, 60];
export const BACKGROUND_RGBA: [number, number, number] = [50, 110, 255];

export class SliceViewer {
  private buffer: HTMLCanvasElement;
  maskOpacity = 0.45;
  windowLevel: WindowLevel = { level: 128, width: 255 };
  private pending: PlanePoint[] = [];
  private pendingClass: "foreground" | "background" = "foreground";

  constructor(private canvas: HTMLCanvasElement, private scale: number = 6) {
    this.buffer = document.createElement("canvas");
  }

  setPendingStroke(points: PlanePoint[], cls: "foreground" | "background") {
    this.pending = points;
    this.pendingClass = cls;
  }

  render(slice: SlicePayload) {
    const { width, height } = slice;
    this.buffer.width = width;
    this.buffer.height = height;
    const ctx = this.buffer.getContext("2d")!;
    const img = ctx.createImageData(width, height);
    const gray = decodeIntensity(slice.intensity_b64);
    const mask = decodeMaskRle(slice.mask_rle, width, height);
    const { level, width: ww } = this.windowLevel;
    const lo = level - ww / 2;
    for (let v = 0; v < height; v++) {
      for (let u = 0; u < width; u++) {
        const g = Math.max(0, Math.min(255, ((gray[u + width * v] - lo) / ww) * 255));
        const o = 4 * (u + width * v);
        let r = g, gg = g, b = g;
        if (mask[u + width * v]) {
          const a = this.maskOpacity;
          r = (1 - a) * r + a * SEGMENTATION_RGBA[0];
          gg = (1 - a) * gg + a * SEGMENTATION_RGBA[1];
          b = (1 - a) * b + a * SEGMENTATION_RGBA[2];
        }
        img.data[o] = r;
        img.data[o + 1] = gg;
        img.data[o + 2] = b;
        img.data[o + 3] = 255;
      }
    }
    const paint = (pts: number[][], rgb: [number, number, number]) => {
      for (const [u, v] of pts) {
        const o = 4 * (u + width * v);
        img.data[o] = rgb[0];
        img.data[o + 1] = rgb[1];
        img.data[o + 2] = rgb[2];
      }
    };
    paint(slice.scribbles.foreground, FOREGROUND_RGBA);
    paint(slice.scribbles.background, BACKGROUND_RGBA);
    paint(this.pending.map((p) => [p.u, p.v]),
          this.pendingClass === "foreground" ? FOREGROUND_RGBA : BACKGROUND_RGBA);
    ctx.putImageData(img, 0, 0);

    this.canvas.width = width * this.scale;
    this.canvas.height = height * this.scale;
    const out = this.canvas.getContext("2d")!;
    out.imageSmoothingEnabled = false;
    out.drawImage(this.buffer, 0, 0, this.canvas.width, this.canvas.height);
  }

  /** Canvas pixel -> slice plane coordinates (or null outside the slice). */
  toPlane(canvasX: number, canvasY: number, width: number,
          height: number): PlanePoint | null {
    const u = Math.floor(canvasX / this.scale);
    const v = Math.floor(canvasY / this.scale);
    if (u < 0 || u >= width || v < 0 || v >= height) return null;
    return { u, v };
  }
}
