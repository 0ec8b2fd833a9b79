/**
 * Deterministic mock embeddings, reproducible from the recipe alone.
 *
 * Recipe (documented so consumers can verify independently):
 *  1. key = `${wsiId}|${x}|${y}|${seed}` for a patch, `${wsiId}|slide|${seed}`
 *     for a slide vector, encoded as UTF-8.
 *  2. state = first 8 bytes of SHA-256(key), read as a little-endian u64.
 *  3. A splitmix64 stream from that state: state += 0x9E3779B97F4A7C15;
 *     z = state; z = (z ^ z>>30) * 0xBF58476D1CE4E5B9;
 *     z = (z ^ z>>27) * 0x94D049BB133111EB; output z ^ z>>31 (all mod 2^64).
 *  4. Consecutive output pairs (a, b) become standard normals by Box-Muller:
 *     u1 = ((a >> 11) + 1) * 2^-53  (in (0, 1], so log is finite),
 *     u2 = (b >> 11) * 2^-53        (in [0, 1)),
 *     r = sqrt(-2 ln u1); z0 = r cos(2 pi u2); z1 = r sin(2 pi u2).
 *  5. The vector is the first dim normals, each rounded to float32.
 */

import { createHash } from "node:crypto";

const MASK64 = (1n << 64n) - 1n;
const GOLDEN = 0x9e3779b97f4a7c15n;
const MIX1 = 0xbf58476d1ce4e5b9n;
const MIX2 = 0x94d049bb133111ebn;
const TWO_NEG_53 = 2 ** -53;

export function patchKey(wsiId: string, x: number, y: number, seed: number): string {
  return `${wsiId}|${x}|${y}|${seed}`;
}

export function slideKey(wsiId: string, seed: number): string {
  return `${wsiId}|slide|${seed}`;
}

export function seedFromKey(key: string): bigint {
  const digest = createHash("sha256").update(key, "utf-8").digest();
  return digest.readBigUInt64LE(0);
}

export function splitmix64(initial: bigint): () => bigint {
  let state = initial & MASK64;
  return () => {
    state = (state + GOLDEN) & MASK64;
    let z = state;
    z = ((z ^ (z >> 30n)) * MIX1) & MASK64;
    z = ((z ^ (z >> 27n)) * MIX2) & MASK64;
    return z ^ (z >> 31n);
  };
}

export function mockVector(key: string, dim: number): Float32Array {
  if (!Number.isInteger(dim) || dim < 1) {
    throw new Error(`dim must be a positive integer, got ${dim}`);
  }
  const next = splitmix64(seedFromKey(key));
  const values = new Float32Array(dim);
  for (let i = 0; i < dim; i += 2) {
    const u1 = (Number(next() >> 11n) + 1) * TWO_NEG_53;
    const u2 = Number(next() >> 11n) * TWO_NEG_53;
    const r = Math.sqrt(-2 * Math.log(u1));
    values[i] = r * Math.cos(2 * Math.PI * u2);
    if (i + 1 < dim) {
      values[i + 1] = r * Math.sin(2 * Math.PI * u2);
    }
  }
  return values;
}
