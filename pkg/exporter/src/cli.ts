#!/usr/bin/env node
/**
 * slideseek-export: write engine-readable embedding files from a mosaic CSV.
 *
 * Usage:
 *   slideseek-export export --mosaic <csv> --model <id|mock> --out <dir>
 *                           [--images <dir>] [--dim <d>] [--slide-vector]
 *                           [--seed <n>]
 *
 * Exit codes: 0 success, 1 usage error, 2 data/format error.
 */

import { parseArgs } from "node:util";
import { pathToFileURL } from "node:url";
import { FormatError } from "./formats.js";
import { ModelError } from "./models.js";
import { ExportJob, runExport } from "./export.js";

export const USAGE = `usage: slideseek-export export --mosaic <csv> --model <id|mock> --out <dir>
                              [--images <dir>] [--dim <d>] [--slide-vector]
                              [--seed <n>]`;

class UsageError extends Error {}

type Sink = (line: string) => void;

function parseIntFlag(name: string, raw: string, minimum: number): number {
  const value = Number(raw);
  if (!/^-?\d+$/.test(raw) || !Number.isSafeInteger(value) || value < minimum) {
    throw new UsageError(`bad --${name} value ${JSON.stringify(raw)}`);
  }
  return value;
}

function jobFromArgs(argv: string[]): ExportJob {
  let parsed;
  try {
    parsed = parseArgs({
      args: argv,
      allowPositionals: false,
      options: {
        mosaic: { type: "string" },
        images: { type: "string" },
        model: { type: "string" },
        dim: { type: "string" },
        out: { type: "string" },
        "slide-vector": { type: "boolean" },
        seed: { type: "string" },
        "batch-size": { type: "string" },
        device: { type: "string" },
      },
    });
  } catch (exc) {
    throw new UsageError(exc instanceof Error ? exc.message : String(exc));
  }
  const values = parsed.values;
  if (values.mosaic === undefined || values.model === undefined || values.out === undefined) {
    throw new UsageError("--mosaic, --model, and --out are required");
  }
  return {
    mosaicPath: values.mosaic,
    imagesDir: values.images,
    model: values.model,
    dim: values.dim === undefined ? undefined : parseIntFlag("dim", values.dim, 1),
    outDir: values.out,
    slideVector: values["slide-vector"] ?? false,
    seed: values.seed === undefined ? undefined : parseIntFlag("seed", values.seed, 0),
    batchSize:
      values["batch-size"] === undefined
        ? undefined
        : parseIntFlag("batch-size", values["batch-size"], 1),
    device: values.device,
  };
}

export function run(argv: string[], stdout: Sink, stderr: Sink): number {
  try {
    const [command, ...rest] = argv;
    if (command === "--help" || command === "-h") {
      stdout(USAGE);
      return 0;
    }
    if (command === undefined) {
      throw new UsageError("missing command");
    }
    if (command !== "export") {
      throw new UsageError(`unknown command ${JSON.stringify(command)}`);
    }
    const result = runExport(jobFromArgs(rest));
    stdout(
      `wrote ${result.files.length} file(s): ${result.slides} slide(s), ` +
        `${result.patches} patch(es), dim ${result.dim}`,
    );
    return 0;
  } catch (exc) {
    if (exc instanceof UsageError || exc instanceof ModelError) {
      stderr(`error: ${exc.message}`);
      stderr(USAGE);
      return 1;
    }
    if (exc instanceof FormatError || (exc instanceof Error && "code" in exc)) {
      stderr(`error: ${exc.message}`);
      return 2;
    }
    throw exc;
  }
}

const invokedDirectly =
  process.argv[1] !== undefined && import.meta.url === pathToFileURL(process.argv[1]).href;

if (invokedDirectly) {
  process.exitCode = run(
    process.argv.slice(2),
    (line) => process.stdout.write(`${line}\n`),
    (line) => process.stderr.write(`${line}\n`),
  );
}
