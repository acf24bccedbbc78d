/**
 * Full annotator round trip against a real service instance.
 *
 * A throwaway scene is built and labeled by the pipeline, the service
 * is started on a scratch port, and the test drives the exact workflow
 * the UI modules implement: load the registry, pick the mask under a
 * click, assign a label, submit, rectify, refresh.  It then checks the
 * stored overlay file byte-for-byte against the draft export and
 * verifies the refreshed label render changed only inside the picked
 * mask.
 */

import { spawn, spawnSync } from "node:child_process";
import type { ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { dirname, join, resolve } from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, expect, test } from "vitest";

import { ApiClient } from "../src/api.js";
import type { RleMask } from "../src/api.js";
import { decodeRle, smallestContaining } from "../src/rle.js";
import { CorrectionDraft } from "../src/draft.js";
import { readIndexedPng } from "./png.js";

const REPO = resolve(dirname(fileURLToPath(import.meta.url)), "..", "..");

// one static hemisphere-labeled frame with per-region masks, fully
// labeled by the pipeline so renders and masks all exist
const FIXTURE = `
import sys
from pathlib import Path
from helpers import static_sequence
from labelfuse4d.energy import FusionWeights
from labelfuse4d.pipeline import SourceToggles, run_sequence
manifest, _ = static_sequence(Path(sys.argv[1]), 1, colors=True, with_masks=True)
run_sequence(manifest, FusionWeights(), SourceToggles(True, False, False))
print("fixture ready")
`;

let root = "";
let server: ChildProcess | null = null;
let serverLog = "";
let base = "";
const api = () => new ApiClient(base);

async function serviceUp(): Promise<boolean> {
  try {
    return (await fetch(`${base}/registry`)).ok;
  } catch {
    return false;
  }
}

beforeAll(async () => {
  root = mkdtempSync(join(tmpdir(), "rectify-ui-"));
  const built = spawnSync("python3", ["-c", FIXTURE, root], {
    cwd: REPO,
    env: { ...process.env, PYTHONPATH: join(REPO, "tests") },
    encoding: "utf8",
  });
  if (built.status !== 0) {
    throw new Error(`fixture build failed:\n${built.stderr}`);
  }

  const port = 21000 + (process.pid % 20000);
  base = `http://127.0.0.1:${port}`;
  server = spawn("labelfuse4d", [
    "serve", "--manifest", join(root, "manifest.json"),
    "--port", String(port), "--toggle", "par",
  ], { cwd: REPO, stdio: ["ignore", "pipe", "pipe"] });
  server.stdout!.on("data", (d) => { serverLog += d; });
  server.stderr!.on("data", (d) => { serverLog += d; });

  const deadline = Date.now() + 60_000;
  while (!(await serviceUp())) {
    if (server.exitCode !== null) {
      throw new Error(`service exited early:\n${serverLog}`);
    }
    if (Date.now() > deadline) {
      throw new Error(`service never came up:\n${serverLog}`);
    }
    await new Promise((ok) => setTimeout(ok, 250));
  }
});

afterAll(async () => {
  if (server && server.exitCode === null) {
    server.kill("SIGTERM");
    await new Promise((ok) => server!.once("exit", ok));
  }
  if (root) rmSync(root, { recursive: true, force: true });
});

/**
 * Independent RLE oracle: expand the runs directly into an (x, y) set,
 * never touching the decoder under test.
 */
function oraclePixels(rle: RleMask): Set<number> {
  const [height] = rle.size;
  const hits = new Set<number>();
  let flat = 0;
  let value = 0;
  for (const run of rle.counts) {
    if (value === 1) {
      for (let j = 0; j < run; j++) {
        const y = (flat + j) % height;
        const x = Math.floor((flat + j) / height);
        hits.add(y * 100000 + x); // key = y * 1e5 + x
      }
    }
    flat += run;
    value = 1 - value;
  }
  return hits;
}

test("pick-assign-submit round trip matches the service byte for byte", async () => {
  const reg = await api().registry();
  expect(reg.labels.map((l) => l.name)).toContain("lower");
  const size = reg.image_size;

  const frames = await api().frames();
  expect(frames[0]).toMatchObject({ index: 1, status: "done", rectified: false });

  // the annotator clicks above center: the upper-body region
  const clickX = Math.floor(size / 2);
  const clickY = Math.floor(size / 4);
  const rawMasks = await api().masks(1, 0);
  expect(rawMasks.length).toBeGreaterThan(0);
  const masks = rawMasks.map(decodeRle);
  const picked = smallestContaining(masks, clickX, clickY);
  expect(picked).toBeGreaterThanOrEqual(0);

  // decoder agreement with the independent oracle
  const oracle = oraclePixels(rawMasks[picked]);
  expect(masks[picked].area).toBe(oracle.size);
  expect(oracle.size).toBeGreaterThan(100);
  expect(oracle.size).toBeLessThan(size * size);

  // reassign the region to "lower": the kind of merge an annotator
  // makes when a garment was split across two labels
  const lower = reg.labels.find((l) => l.name === "lower")!.id;
  const draft = new CorrectionDraft(size);
  draft.applyMask(0, masks[picked], lower);
  expect(draft.count(0)).toBe(oracle.size);

  // expected canonical bytes, built from the oracle alone
  const entries: number[][] = [];
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      if (oracle.has(y * 100000 + x)) entries.push([x, y, lower]);
    }
  }
  const expected = JSON.stringify(entries);
  expect(draft.exportView(0)).toBe(expected);

  const before = readIndexedPng(await api().labelsPng(1, 0));
  expect(before.indices[clickY * size + clickX]).toBe(3); // upper region

  const receipt = await api().submitCorrections(1, 0, draft.entries(0));
  expect(receipt).toMatchObject({ frame: 1, view: 0, count: oracle.size });

  // the stored overlay is the draft export, byte for byte
  const stored = readFileSync(join(root, "evidence", "manual", "1", "0.json"));
  expect(stored.equals(Buffer.from(expected, "utf8"))).toBe(true);

  const report = await api().rectify(1);
  expect(report.rectified).toBe(true);
  expect(report.moved).toBeGreaterThan(0);

  // refreshed overlay: changed where corrected, and nowhere else
  const after = readIndexedPng(await api().labelsPng(1, 0));
  expect(after.indices[clickY * size + clickX]).toBe(lower);
  let changed = 0;
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      if (before.indices[y * size + x] === after.indices[y * size + x]) {
        continue;
      }
      changed++;
      expect(oracle.has(y * 100000 + x),
             `pixel (${x}, ${y}) changed outside the corrected mask`)
        .toBe(true);
    }
  }
  expect(changed).toBeGreaterThan(0);

  const refreshed = await api().frames();
  expect(refreshed[0]).toMatchObject({ index: 1, rectified: true });
}, 120_000);
