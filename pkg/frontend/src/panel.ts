/**
 * Canvas stack for a single camera view.
 *
 * Three pixel-aligned layers: the RGB render underneath, the label
 * overlay (palette PNG with the background punched transparent, faded
 * by the opacity slider), and a hover layer for mask highlights and
 * in-progress brush strokes.
 */

import type { ApiClient, Entry } from "./api.js";
import type { DecodedMask } from "./rle.js";

/** In-place: background pixels of a label render become transparent. */
export function punchOutBackground(px: Uint8ClampedArray): void {
  // label renders reserve pure white for "no label"; no registry color
  // uses it, so the test is exact
  for (let i = 0; i < px.length; i += 4) {
    if (px[i] === 255 && px[i + 1] === 255 && px[i + 2] === 255) {
      px[i + 3] = 0;
    }
  }
}

export function cssColor(color: [number, number, number]): string {
  return `rgb(${color[0]}, ${color[1]}, ${color[2]})`;
}

function loadImage(url: string): Promise<HTMLImageElement> {
  return new Promise((resolve, reject) => {
    const img = new Image();
    img.onload = () => resolve(img);
    img.onerror = () => reject(new Error(`failed to load ${url}`));
    img.src = url;
  });
}

function layer(size: number, z: number): HTMLCanvasElement {
  const canvas = document.createElement("canvas");
  canvas.width = size;
  canvas.height = size;
  canvas.className = "panel-layer";
  canvas.style.zIndex = String(z);
  return canvas;
}

export class ViewPanel {
  readonly root: HTMLDivElement;
  private rgb: HTMLCanvasElement;
  private overlay: HTMLCanvasElement;
  private hover: HTMLCanvasElement;
  private size: number;

  constructor(parent: HTMLElement, size: number) {
    this.size = size;
    this.root = document.createElement("div");
    this.root.className = "panel";
    this.rgb = layer(size, 0);
    this.overlay = layer(size, 1);
    this.hover = layer(size, 2);
    this.root.append(this.rgb, this.overlay, this.hover);
    parent.append(this.root);
  }

  /** Fetch and draw both image layers for one frame/view. */
  async show(api: ApiClient, frame: number, view: number,
             bust?: number): Promise<void> {
    const [rgbImg, labelImg] = await Promise.all([
      loadImage(api.rgbUrl(frame, view)),
      loadImage(api.labelsUrl(frame, view, bust)),
    ]);
    this.rgb.getContext("2d")!.drawImage(rgbImg, 0, 0);

    const scratch = document.createElement("canvas");
    scratch.width = this.size;
    scratch.height = this.size;
    const sctx = scratch.getContext("2d")!;
    sctx.drawImage(labelImg, 0, 0);
    const px = sctx.getImageData(0, 0, this.size, this.size);
    punchOutBackground(px.data);
    const octx = this.overlay.getContext("2d")!;
    octx.clearRect(0, 0, this.size, this.size);
    octx.putImageData(px, 0, 0);
  }

  setOpacity(alpha: number): void {
    this.overlay.style.opacity = String(Math.min(1, Math.max(0, alpha)));
  }

  clearHover(): void {
    this.hover.getContext("2d")!.clearRect(0, 0, this.size, this.size);
  }

  /** Highlight a picked mask (translucent fill) on the hover layer. */
  showMask(mask: DecodedMask | null): void {
    this.clearHover();
    if (!mask) return;
    const ctx = this.hover.getContext("2d")!;
    const px = ctx.createImageData(this.size, this.size);
    for (let i = 0; i < mask.data.length; i++) {
      if (!mask.data[i]) continue;
      px.data[i * 4] = 255;       // warm highlight over any palette
      px.data[i * 4 + 1] = 200;
      px.data[i * 4 + 2] = 0;
      px.data[i * 4 + 3] = 110;
    }
    ctx.putImageData(px, 0, 0);
  }

  /** Draw the current draft strokes so the annotator sees them land. */
  showDraft(entries: Entry[], palette: number[][]): void {
    const ctx = this.hover.getContext("2d")!;
    const px = ctx.getImageData(0, 0, this.size, this.size);
    for (const [x, y, label] of entries) {
      const color = palette[label < 0 ? 255 : label] ?? [255, 255, 255];
      const at = (y * this.size + x) * 4;
      px.data[at] = color[0];
      px.data[at + 1] = color[1];
      px.data[at + 2] = color[2];
      px.data[at + 3] = 210;
    }
    ctx.putImageData(px, 0, 0);
  }

  /** Image-space pixel under a mouse event, or null when outside. */
  pixelAt(ev: MouseEvent): { x: number, y: number } | null {
    const box = this.hover.getBoundingClientRect();
    if (box.width === 0 || box.height === 0) return null;
    const x = Math.floor((ev.clientX - box.left) * this.size / box.width);
    const y = Math.floor((ev.clientY - box.top) * this.size / box.height);
    if (x < 0 || y < 0 || x >= this.size || y >= this.size) return null;
    return { x, y };
  }
}
