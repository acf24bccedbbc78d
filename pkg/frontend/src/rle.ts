/**
 * Run-length mask decoding and hit-testing.
 *
 * masks.json stores each segmentation mask as alternating run lengths of
 * 0s and 1s over the image flattened column by column (top to bottom,
 * then left to right), starting with a 0-run — a mask whose first pixel
 * is set therefore begins with an explicit zero count.
 */

import type { RleMask } from "./api.js";

export interface DecodedMask {
  width: number;
  height: number;
  /** Row-major 0/1 occupancy, length width * height. */
  data: Uint8Array;
  area: number;
}

export function decodeRle(rle: RleMask): DecodedMask {
  const [height, width] = rle.size;
  if (!Number.isInteger(height) || !Number.isInteger(width)
      || height < 0 || width < 0) {
    throw new Error(`bad mask size [${rle.size}]`);
  }
  let total = 0;
  for (const run of rle.counts) {
    if (!Number.isInteger(run) || run < 0) {
      throw new Error(`bad run length ${run}`);
    }
    total += run;
  }
  if (total !== width * height) {
    throw new Error(
      `runs cover ${total} pixels, image has ${width * height}`);
  }

  const data = new Uint8Array(width * height);
  let flat = 0;
  let area = 0;
  for (let i = 0; i < rle.counts.length; i++) {
    const run = rle.counts[i];
    if (i % 2 === 0) {          // even runs are zeros: just skip ahead
      flat += run;
      continue;
    }
    for (let j = 0; j < run; j++, flat++) {
      const row = flat % height;
      const col = (flat - row) / height;
      data[row * width + col] = 1;
    }
    area += run;
  }
  return { width, height, data, area };
}

export function contains(mask: DecodedMask, x: number, y: number): boolean {
  if (x < 0 || y < 0 || x >= mask.width || y >= mask.height) return false;
  return mask.data[y * mask.width + x] === 1;
}

/**
 * Index of the smallest-area mask containing (x, y), or -1.
 *
 * Nested masks resolve to the inner one; equal areas resolve to the
 * earlier index so repeated clicks stay stable.
 */
export function smallestContaining(masks: DecodedMask[],
                                   x: number, y: number): number {
  let best = -1;
  for (let i = 0; i < masks.length; i++) {
    if (!contains(masks[i], x, y)) continue;
    if (best === -1 || masks[i].area < masks[best].area) best = i;
  }
  return best;
}
