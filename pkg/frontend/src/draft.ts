/**
 * The correction draft: pixels the annotator has painted or picked,
 * per view, waiting to be submitted.
 *
 * A pixel painted twice keeps its first position in the draft and takes
 * the newer label, so exports are deterministic regardless of how much
 * the user scrubbed back and forth.  `exportView` emits the exact
 * compact JSON the service stores, byte for byte.
 */

import type { DecodedMask } from "./rle.js";
import type { Entry } from "./api.js";

export const MIN_BRUSH = 1;
export const MAX_BRUSH = 32;

export class CorrectionDraft {
  /** view -> (y * size + x) -> label, in insertion order. */
  private perView = new Map<number, Map<number, number>>();

  constructor(readonly imageSize: number) {
    if (!Number.isInteger(imageSize) || imageSize <= 0) {
      throw new Error(`bad image size ${imageSize}`);
    }
  }

  /** Paint one pixel. Out-of-bounds coordinates are silently clipped. */
  paint(view: number, x: number, y: number, label: number): void {
    if (!Number.isInteger(label)) throw new Error(`bad label ${label}`);
    if (x < 0 || y < 0 || x >= this.imageSize || y >= this.imageSize) return;
    let pixels = this.perView.get(view);
    if (!pixels) {
      pixels = new Map();
      this.perView.set(view, pixels);
    }
    pixels.set(y * this.imageSize + x, label);
  }

  /**
   * Hard-edged circular stamp: every pixel strictly closer than the
   * radius, so radius 1 paints a single pixel.  Radius is clamped to
   * the 1..32 brush range; the stamp clips at image edges.
   */
  stamp(view: number, cx: number, cy: number,
        radius: number, label: number): void {
    const r = Math.min(MAX_BRUSH, Math.max(MIN_BRUSH, Math.round(radius)));
    for (let dy = -r + 1; dy <= r - 1; dy++) {
      for (let dx = -r + 1; dx <= r - 1; dx++) {
        if (dx * dx + dy * dy < r * r) {
          this.paint(view, cx + dx, cy + dy, label);
        }
      }
    }
  }

  /** Add every pixel of a picked mask, scanning rows top to bottom. */
  applyMask(view: number, mask: DecodedMask, label: number): void {
    for (let y = 0; y < mask.height; y++) {
      for (let x = 0; x < mask.width; x++) {
        if (mask.data[y * mask.width + x]) this.paint(view, x, y, label);
      }
    }
  }

  count(view: number): number {
    return this.perView.get(view)?.size ?? 0;
  }

  total(): number {
    let n = 0;
    for (const pixels of this.perView.values()) n += pixels.size;
    return n;
  }

  /** Views holding at least one entry, ascending. */
  views(): number[] {
    return [...this.perView.keys()]
      .filter((v) => this.count(v) > 0)
      .sort((a, b) => a - b);
  }

  entries(view: number): Entry[] {
    const pixels = this.perView.get(view);
    if (!pixels) return [];
    const out: Entry[] = [];
    for (const [key, label] of pixels) {
      out.push([key % this.imageSize, Math.floor(key / this.imageSize), label]);
    }
    return out;
  }

  /** Canonical wire/disk form of one view: compact JSON, no whitespace. */
  exportView(view: number): string {
    return JSON.stringify(this.entries(view));
  }

  clear(view?: number): void {
    if (view === undefined) this.perView.clear();
    else this.perView.delete(view);
  }
}
