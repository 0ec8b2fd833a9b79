/**
 * End-to-end checks against the retrieval engine: files written here must
 * load in the engine bit-exactly, and an exported slide vector must win a
 * self-query at distance 0 (the engine's own tolerance for cosine zero).
 * The engine is driven as a separate python3 process through its public
 * file formats only.
 */

import { spawnSync } from "node:child_process";
import { mkdtempSync, readFileSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, describe, expect, it } from "vitest";
import { runExport } from "../src/export.js";
import { MOSAIC_HEADER } from "../src/mosaic.js";

const ENGINE_SRC = fileURLToPath(new URL("../../src", import.meta.url));

const dirs: string[] = [];

function tempDir(): string {
  const dir = mkdtempSync(join(tmpdir(), "exporter-engine-"));
  dirs.push(dir);
  return dir;
}

afterAll(() => {
  while (dirs.length > 0) {
    rmSync(dirs.pop()!, { recursive: true, force: true });
  }
});

function runPython(script: string): string {
  const result = spawnSync("python3", ["-c", script], {
    encoding: "utf-8",
    env: { ...process.env, PYTHONPATH: ENGINE_SRC },
  });
  expect(result.error).toBeUndefined();
  expect(result.stderr).toBe("");
  expect(result.status).toBe(0);
  return result.stdout;
}

const SLIDE_IDS = ["va", "vb", "vc"];

function writeMosaic(dir: string): string {
  const lines = [MOSAIC_HEADER.join(",")];
  for (const wsi of SLIDE_IDS) {
    for (const [x, y] of [
      [0, 0],
      [0, 224],
      [224, 0],
      [448, 672],
    ]) {
      lines.push(`${wsi},${x},${y},224,224,20,0`);
    }
  }
  const path = join(dir, "mosaic.csv");
  writeFileSync(path, lines.join("\n") + "\n");
  return path;
}

/** Value bytes of every record in a YXEB file, keyed "x,y", straight off disk. */
function recordHexFromDisk(path: string): Map<string, string> {
  const buffer = readFileSync(path);
  const dim = buffer.readUInt32LE(6);
  const count = buffer.readUInt32LE(10);
  const records = new Map<string, string>();
  let offset = 14;
  for (let i = 0; i < count; i++) {
    const x = buffer.readUInt32LE(offset);
    const y = buffer.readUInt32LE(offset + 4);
    const values = buffer.subarray(offset + 8, offset + 8 + 4 * dim);
    records.set(`${x},${y}`, values.toString("hex"));
    offset += 8 + 4 * dim;
  }
  return records;
}

describe("engine round trip", () => {
  it("loads exported YXEB files with bit-exact floats", { timeout: 60_000 }, () => {
    const dir = tempDir();
    const outDir = join(dir, "out");
    runExport({
      mosaicPath: writeMosaic(dir),
      model: "mock",
      dim: 32,
      outDir,
      seed: 9,
    });
    const script = `
import json
from slideseek.embedder import load_embeddings

out = ${JSON.stringify(outDir)}
report = {}
for wsi_id in ${JSON.stringify(SLIDE_IDS)}:
    store = load_embeddings(f"{out}/{wsi_id}.yxeb", wsi_id)
    report[wsi_id] = {
        "dim": store.dim,
        "items": [
            [x, y, vec.astype("<f4").tobytes().hex()]
            for (x, y), vec in store.slide_items(wsi_id)
        ],
    }
print(json.dumps(report))
`;
    const report = JSON.parse(runPython(script)) as Record<
      string,
      { dim: number; items: [number, number, string][] }
    >;
    for (const wsi of SLIDE_IDS) {
      const loaded = report[wsi]!;
      expect(loaded.dim).toBe(32);
      const expected = recordHexFromDisk(join(outDir, `${wsi}.yxeb`));
      expect(loaded.items.length).toBe(expected.size);
      for (const [x, y, hex] of loaded.items) {
        expect(hex).toBe(expected.get(`${x},${y}`));
      }
    }
    console.log("acceptance: engine-yxeb-bit-exact PASS (3 slides x 4 patches, dim 32)");
  });

  it(
    "wins a slide-vector self-query at distance 0",
    { timeout: 60_000 },
    () => {
      const dir = tempDir();
      const outDir = join(dir, "out");
      const mosaic = writeMosaic(dir);
      runExport({ mosaicPath: mosaic, model: "mock", dim: 32, outDir, seed: 9 });
      runExport({
        mosaicPath: mosaic,
        model: "mock",
        dim: 768,
        outDir,
        slideVector: true,
        seed: 1,
      });
      const script = `
import json
import numpy as np
from slideseek.embedder import EmbeddingStore, SlideVector, load_embeddings, load_slide_vector
from slideseek.records import PatchCoordinate, SlideRecord
from slideseek.search import build_index, slide_vector_search

out = ${JSON.stringify(outDir)}
ids = ${JSON.stringify(SLIDE_IDS)}
records = [SlideRecord(i, "pat-" + i, "Brain", "GBM") for i in ids]
per_slide = {i: load_embeddings(f"{out}/{i}.yxeb", i) for i in ids}
store = EmbeddingStore(next(iter(per_slide.values())).dim)
for i, st in per_slide.items():
    for (x, y), vec in st.slide_items(i):
        store.add(i, PatchCoordinate(x, y, 224, 224), vec)
index = build_index(records, store)
vectors = {i: load_slide_vector(f"{out}/{i}.yxsv") for i in ids}
index.add_slide_vector(vectors["va"])
index.add_slide_vector(SlideVector("vb", vectors["va"].vector))
index.add_slide_vector(vectors["vc"])
result = slide_vector_search(index, vectors["va"], records[0], 2)
print(json.dumps({
    "dim": vectors["va"].dim,
    "vector_hex": np.asarray(vectors["va"].vector, dtype="<f4").tobytes().hex(),
    "ranked": [[w, d, l] for (w, d, l) in result.ranked],
}))
`;
      const report = JSON.parse(runPython(script)) as {
        dim: number;
        vector_hex: string;
        ranked: [string, number, string][];
      };
      expect(report.dim).toBe(768);
      const fileBytes = readFileSync(join(outDir, "va.yxsv"));
      expect(report.vector_hex).toBe(fileBytes.subarray(10).toString("hex"));

      expect(report.ranked.length).toBe(2);
      const [best, runnerUp] = report.ranked;
      expect(best![0]).toBe("vb");
      expect(Math.abs(best![1])).toBeLessThanOrEqual(1e-9);
      expect(runnerUp![0]).toBe("vc");
      expect(runnerUp![1]).toBeGreaterThan(1e-6);
      console.log(
        `acceptance: engine-slide-vector-self-query PASS (distance ${best![1]}, dim 768)`,
      );
    },
  );
});
