import { describe, expect, test } from "vitest";

import { contains, decodeRle, smallestContaining } from "../src/rle.js";
import type { DecodedMask } from "../src/rle.js";

// deterministic small PRNG so failures reproduce
function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

/** Independent encoder: walk columns, emit alternating 0/1 run lengths. */
function encodeColumnMajor(grid: number[][], height: number,
                           width: number): { size: [number, number]; counts: number[] } {
  const flat: number[] = [];
  for (let c = 0; c < width; c++) {
    for (let r = 0; r < height; r++) flat.push(grid[r][c]);
  }
  const counts: number[] = [];
  let expect = 0;
  let run = 0;
  for (const v of flat) {
    if (v === expect) {
      run++;
    } else {
      counts.push(run);
      expect = 1 - expect;
      run = 1;
    }
  }
  counts.push(run);
  return { size: [height, width], counts };
}

describe("decodeRle", () => {
  test("worked 2x3 example lands pixels column by column", () => {
    // flat column-major: [0, 1, 1, 1, 0, 0]
    const mask = decodeRle({ size: [2, 3], counts: [1, 3, 2] });
    expect(mask.width).toBe(3);
    expect(mask.height).toBe(2);
    expect(Array.from(mask.data)).toEqual([
      0, 1, 0,
      1, 1, 0,
    ]);
    expect(mask.area).toBe(3);
  });

  test("mask whose first pixel is set starts with a zero count", () => {
    const mask = decodeRle({ size: [2, 2], counts: [0, 2, 2] });
    expect(Array.from(mask.data)).toEqual([1, 0, 1, 0]);
  });

  test("all-ones and all-zeros single runs", () => {
    expect(decodeRle({ size: [3, 3], counts: [0, 9] }).area).toBe(9);
    expect(decodeRle({ size: [3, 3], counts: [9] }).area).toBe(0);
  });

  test("run totals must cover the image exactly", () => {
    expect(() => decodeRle({ size: [2, 2], counts: [1, 2] }))
      .toThrow(/covers? 3 pixels|runs cover 3/);
    expect(() => decodeRle({ size: [2, 2], counts: [2, 3] })).toThrow();
  });

  test("negative and fractional runs are rejected", () => {
    expect(() => decodeRle({ size: [2, 2], counts: [-1, 5] })).toThrow(/run/);
    expect(() => decodeRle({ size: [2, 2], counts: [1.5, 2.5] })).toThrow(/run/);
  });

  test("random masks survive an independent encode/decode loop", () => {
    const rand = mulberry32(11);
    for (let round = 0; round < 50; round++) {
      const h = 1 + Math.floor(rand() * 12);
      const w = 1 + Math.floor(rand() * 12);
      const grid: number[][] = [];
      for (let r = 0; r < h; r++) {
        grid.push(Array.from({ length: w },
                             () => (rand() < 0.4 ? 1 : 0)));
      }
      const decoded = decodeRle(encodeColumnMajor(grid, h, w));
      for (let r = 0; r < h; r++) {
        for (let c = 0; c < w; c++) {
          expect(decoded.data[r * w + c]).toBe(grid[r][c]);
        }
      }
    }
  });
});

function rect(width: number, height: number, x0: number, y0: number,
              x1: number, y1: number): DecodedMask {
  const data = new Uint8Array(width * height);
  let area = 0;
  for (let y = y0; y < y1; y++) {
    for (let x = x0; x < x1; x++) {
      data[y * width + x] = 1;
      area++;
    }
  }
  return { width, height, data, area };
}

describe("mask hit-testing", () => {
  test("contains respects bounds", () => {
    const m = rect(4, 4, 1, 1, 3, 3);
    expect(contains(m, 1, 1)).toBe(true);
    expect(contains(m, 0, 0)).toBe(false);
    expect(contains(m, -1, 2)).toBe(false);
    expect(contains(m, 4, 2)).toBe(false);
  });

  test("nested masks resolve to the inner one", () => {
    const outer = rect(8, 8, 0, 0, 8, 8);
    const inner = rect(8, 8, 2, 2, 5, 5);
    expect(smallestContaining([outer, inner], 3, 3)).toBe(1);
    expect(smallestContaining([inner, outer], 3, 3)).toBe(0);
    expect(smallestContaining([outer, inner], 6, 6)).toBe(0);
  });

  test("a miss returns -1", () => {
    const m = rect(4, 4, 0, 0, 2, 2);
    expect(smallestContaining([m], 3, 3)).toBe(-1);
    expect(smallestContaining([], 0, 0)).toBe(-1);
  });

  test("equal areas keep the earlier index", () => {
    const a = rect(4, 4, 0, 0, 2, 2);
    const b = rect(4, 4, 0, 0, 2, 2);
    expect(smallestContaining([a, b], 1, 1)).toBe(0);
  });
});
