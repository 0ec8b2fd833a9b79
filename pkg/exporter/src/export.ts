/**
 * Export driver: mosaic CSV in, one embedding file per slide out.
 *
 * Patch mode writes `<wsi_id>.yxeb` containing one vector per mosaic patch;
 * slide-vector mode writes `<wsi_id>.yxsv` containing a single vector per
 * slide. Only the "mock" model is bundled; real extractor ids validate
 * against the registry and then fail with a clear "adapter not bundled"
 * error rather than silently producing mock vectors.
 */

import { mkdirSync, writeFileSync } from "node:fs";
import { join } from "node:path";
import { encodeEmbeddings, encodeSlideVector, FormatError, PatchVector } from "./formats.js";
import { mockVector, patchKey, slideKey } from "./mock.js";
import { MOCK_MODEL, requireAdapter, resolveDim } from "./models.js";
import { groupBySlide, MosaicPatch, readMosaic } from "./mosaic.js";

export interface ExportJob {
  mosaicPath: string;
  /** Patch image source; required by real extractor adapters, unused by mock. */
  imagesDir?: string;
  model: string;
  dim?: number;
  outDir: string;
  /** Write one YXSV slide vector per slide instead of per-patch YXEB files. */
  slideVector?: boolean;
  seed?: number;
  /** Forwarded to real extractor adapters; mock ignores them. */
  batchSize?: number;
  device?: string;
}

export interface ExportResult {
  files: string[];
  slides: number;
  patches: number;
  dim: number;
}

function checkFileSafe(wsiId: string): void {
  if (
    wsiId === "." ||
    wsiId === ".." ||
    wsiId.includes("/") ||
    wsiId.includes("\\") ||
    wsiId.includes("\0")
  ) {
    throw new FormatError(`wsi_id ${JSON.stringify(wsiId)} is not usable as a file name`);
  }
}

function mockPatchVectors(
  wsiId: string,
  patches: MosaicPatch[],
  dim: number,
  seed: number,
): PatchVector[] {
  return patches.map((patch) => ({
    x: patch.x,
    y: patch.y,
    values: mockVector(patchKey(wsiId, patch.x, patch.y, seed), dim),
  }));
}

export function runExport(job: ExportJob): ExportResult {
  const dim = resolveDim(job.model, job.dim);
  if (job.model !== MOCK_MODEL) {
    requireAdapter(job.model);
  }
  const seed = job.seed ?? 0;
  const patches = readMosaic(job.mosaicPath);
  const slides = groupBySlide(patches);
  for (const wsiId of slides.keys()) {
    checkFileSafe(wsiId);
  }
  mkdirSync(job.outDir, { recursive: true });
  const files: string[] = [];
  for (const [wsiId, slidePatches] of slides) {
    let path: string;
    let payload: Buffer;
    if (job.slideVector) {
      path = join(job.outDir, `${wsiId}.yxsv`);
      payload = encodeSlideVector(mockVector(slideKey(wsiId, seed), dim));
    } else {
      path = join(job.outDir, `${wsiId}.yxeb`);
      payload = encodeEmbeddings(mockPatchVectors(wsiId, slidePatches, dim, seed), dim);
    }
    writeFileSync(path, payload);
    files.push(path);
  }
  return { files, slides: slides.size, patches: patches.length, dim };
}
