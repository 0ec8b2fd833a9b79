/**
 * Mosaic CSV reader.
 *
 * A mosaic file lists the patches selected from one or more slides, one row
 * per patch, with the header:
 *
 *   wsi_id,x,y,width,height,magnification,color_cluster
 *
 * Fields may be double-quoted (with "" escaping embedded quotes), so slide
 * ids containing commas survive a round trip.
 */

import { readFileSync } from "node:fs";
import { FormatError } from "./formats.js";

export interface MosaicPatch {
  wsiId: string;
  x: number;
  y: number;
  width: number;
  height: number;
  magnification: number;
  colorCluster: number;
}

export const MOSAIC_HEADER = [
  "wsi_id",
  "x",
  "y",
  "width",
  "height",
  "magnification",
  "color_cluster",
] as const;

function splitCsvLine(line: string, lineNo: number): string[] {
  const fields: string[] = [];
  let field = "";
  let quoted = false;
  let i = 0;
  while (i < line.length) {
    const ch = line[i];
    if (quoted) {
      if (ch === '"') {
        if (line[i + 1] === '"') {
          field += '"';
          i += 2;
        } else {
          quoted = false;
          i += 1;
        }
      } else {
        field += ch;
        i += 1;
      }
    } else if (ch === '"' && field === "") {
      quoted = true;
      i += 1;
    } else if (ch === ",") {
      fields.push(field);
      field = "";
      i += 1;
    } else {
      field += ch;
      i += 1;
    }
  }
  if (quoted) {
    throw new FormatError(`line ${lineNo}: unterminated quoted field`);
  }
  fields.push(field);
  return fields;
}

function parseNumber(raw: string, column: string, lineNo: number, integer: boolean): number {
  const value = Number(raw);
  if (raw === "" || !Number.isFinite(value) || (integer && !Number.isInteger(value))) {
    throw new FormatError(`line ${lineNo}: bad ${column} value ${JSON.stringify(raw)}`);
  }
  return value;
}

export function parseMosaic(text: string): MosaicPatch[] {
  const lines = text.split(/\r\n|\n/);
  while (lines.length > 0 && lines[lines.length - 1] === "") {
    lines.pop();
  }
  if (lines.length === 0) {
    throw new FormatError("empty mosaic file");
  }
  const header = splitCsvLine(lines[0]!, 1);
  if (header.join(",") !== MOSAIC_HEADER.join(",")) {
    throw new FormatError(
      `bad mosaic header ${JSON.stringify(lines[0])}; expected ${MOSAIC_HEADER.join(",")}`,
    );
  }
  const patches: MosaicPatch[] = [];
  for (let n = 1; n < lines.length; n += 1) {
    const lineNo = n + 1;
    const fields = splitCsvLine(lines[n]!, lineNo);
    if (fields.length !== MOSAIC_HEADER.length) {
      throw new FormatError(
        `line ${lineNo}: expected ${MOSAIC_HEADER.length} fields, got ${fields.length}`,
      );
    }
    const wsiId = fields[0]!;
    if (wsiId === "") {
      throw new FormatError(`line ${lineNo}: empty wsi_id`);
    }
    patches.push({
      wsiId,
      x: parseNumber(fields[1]!, "x", lineNo, true),
      y: parseNumber(fields[2]!, "y", lineNo, true),
      width: parseNumber(fields[3]!, "width", lineNo, true),
      height: parseNumber(fields[4]!, "height", lineNo, true),
      magnification: parseNumber(fields[5]!, "magnification", lineNo, false),
      colorCluster: parseNumber(fields[6]!, "color_cluster", lineNo, true),
    });
  }
  if (patches.length === 0) {
    throw new FormatError("mosaic file has a header but no patches");
  }
  return patches;
}

export function readMosaic(path: string): MosaicPatch[] {
  return parseMosaic(readFileSync(path, "utf-8"));
}

/** Group patches by slide, preserving first-appearance order of slides. */
export function groupBySlide(patches: MosaicPatch[]): Map<string, MosaicPatch[]> {
  const groups = new Map<string, MosaicPatch[]>();
  for (const patch of patches) {
    const group = groups.get(patch.wsiId);
    if (group === undefined) {
      groups.set(patch.wsiId, [patch]);
    } else {
      group.push(patch);
    }
  }
  return groups;
}
