/**
 * Binary embedding formats consumed by the retrieval engine.
 *
 * Both are little-endian with a 4-byte ASCII magic and a u16 version.
 * YXEB (per-patch embeddings): magic, version 1, dim u32, count u32, then
 * per patch x u32, y u32, dim float32 values. YXSV (one slide vector):
 * magic, version 1, dim u32, dim float32 values.
 *
 * The YXEB encoder sorts records by (x, y), so the same patch set always
 * serializes to identical bytes regardless of input order.
 */

export const YXEB_MAGIC = "YXEB";
export const YXSV_MAGIC = "YXSV";
export const FORMAT_VERSION = 1;

export class FormatError extends Error {}

export interface PatchVector {
  x: number;
  y: number;
  values: Float32Array;
}

const U32_MAX = 0xffffffff;

function checkCoord(value: number, what: string): void {
  if (!Number.isInteger(value) || value < 0 || value > U32_MAX) {
    throw new FormatError(`${what} must be a u32, got ${value}`);
  }
}

export function encodeEmbeddings(patches: PatchVector[], dim: number): Buffer {
  if (patches.length === 0) {
    throw new FormatError("refusing to encode an empty patch list");
  }
  if (!Number.isInteger(dim) || dim < 1 || dim > U32_MAX) {
    throw new FormatError(`dim must be a positive u32, got ${dim}`);
  }
  const sorted = [...patches].sort((a, b) => a.x - b.x || a.y - b.y);
  const seen = new Set<string>();
  for (const patch of sorted) {
    checkCoord(patch.x, "patch x");
    checkCoord(patch.y, "patch y");
    if (patch.values.length !== dim) {
      throw new FormatError(
        `patch (${patch.x}, ${patch.y}) has ${patch.values.length} values, expected ${dim}`,
      );
    }
    const key = `${patch.x},${patch.y}`;
    if (seen.has(key)) {
      throw new FormatError(`duplicate patch coordinate (${key})`);
    }
    seen.add(key);
  }
  const recordBytes = 8 + 4 * dim;
  const buffer = Buffer.alloc(14 + sorted.length * recordBytes);
  buffer.write(YXEB_MAGIC, 0, "ascii");
  buffer.writeUInt16LE(FORMAT_VERSION, 4);
  buffer.writeUInt32LE(dim, 6);
  buffer.writeUInt32LE(sorted.length, 10);
  let offset = 14;
  for (const patch of sorted) {
    buffer.writeUInt32LE(patch.x, offset);
    buffer.writeUInt32LE(patch.y, offset + 4);
    offset += 8;
    for (const value of patch.values) {
      buffer.writeFloatLE(value, offset);
      offset += 4;
    }
  }
  return buffer;
}

export function decodeEmbeddings(buffer: Buffer): { dim: number; patches: PatchVector[] } {
  if (buffer.length < 14) {
    throw new FormatError(`truncated header: ${buffer.length} bytes`);
  }
  const magic = buffer.toString("ascii", 0, 4);
  if (magic !== YXEB_MAGIC) {
    throw new FormatError(`bad magic ${JSON.stringify(magic)}, expected ${YXEB_MAGIC}`);
  }
  const version = buffer.readUInt16LE(4);
  if (version !== FORMAT_VERSION) {
    throw new FormatError(`unsupported version ${version}`);
  }
  const dim = buffer.readUInt32LE(6);
  const count = buffer.readUInt32LE(10);
  const recordBytes = 8 + 4 * dim;
  const expected = 14 + count * recordBytes;
  if (buffer.length !== expected) {
    throw new FormatError(
      `expected ${expected} bytes for ${count} patches of dim ${dim}, got ${buffer.length}`,
    );
  }
  const patches: PatchVector[] = [];
  let offset = 14;
  for (let i = 0; i < count; i++) {
    const x = buffer.readUInt32LE(offset);
    const y = buffer.readUInt32LE(offset + 4);
    offset += 8;
    const values = new Float32Array(dim);
    for (let j = 0; j < dim; j++) {
      values[j] = buffer.readFloatLE(offset);
      offset += 4;
    }
    patches.push({ x, y, values });
  }
  return { dim, patches };
}

export function encodeSlideVector(values: Float32Array): Buffer {
  if (values.length < 1 || values.length > U32_MAX) {
    throw new FormatError(`slide vector dim must be a positive u32, got ${values.length}`);
  }
  const buffer = Buffer.alloc(10 + 4 * values.length);
  buffer.write(YXSV_MAGIC, 0, "ascii");
  buffer.writeUInt16LE(FORMAT_VERSION, 4);
  buffer.writeUInt32LE(values.length, 6);
  for (let i = 0; i < values.length; i++) {
    buffer.writeFloatLE(values[i]!, 10 + 4 * i);
  }
  return buffer;
}

export function decodeSlideVector(buffer: Buffer): Float32Array {
  if (buffer.length < 10) {
    throw new FormatError(`truncated header: ${buffer.length} bytes`);
  }
  const magic = buffer.toString("ascii", 0, 4);
  if (magic !== YXSV_MAGIC) {
    throw new FormatError(`bad magic ${JSON.stringify(magic)}, expected ${YXSV_MAGIC}`);
  }
  const version = buffer.readUInt16LE(4);
  if (version !== FORMAT_VERSION) {
    throw new FormatError(`unsupported version ${version}`);
  }
  const dim = buffer.readUInt32LE(6);
  if (buffer.length !== 10 + 4 * dim) {
    throw new FormatError(
      `expected ${10 + 4 * dim} bytes for dim ${dim}, got ${buffer.length}`,
    );
  }
  const values = new Float32Array(dim);
  for (let i = 0; i < dim; i++) {
    values[i] = buffer.readFloatLE(10 + 4 * i);
  }
  return values;
}
