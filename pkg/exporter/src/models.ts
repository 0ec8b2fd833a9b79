/**
 * Embedding model registry: model id -> output dimension.
 *
 * "mock" produces deterministic pseudo-embeddings (see mock.ts) and accepts
 * any dimension. The remaining ids are reserved for real feature extractors;
 * their dimensions are pinned here so mosaics exported for them are sized
 * correctly, but the extractor adapters themselves are not bundled.
 *
 * Note: GigaPath-WSI is registered at 786 to match the published figure,
 * although 768 (the usual transformer width) is plausibly what was intended.
 */

export const EMBED_SIZES: Readonly<Record<string, number>> = {
  DenseNet: 1024,
  UNI: 1024,
  Virchow: 1280,
  GigaPath: 1536,
  "GigaPath-WSI": 786,
};

export const MOCK_MODEL = "mock";

export class ModelError extends Error {}

export function knownModels(): string[] {
  return [MOCK_MODEL, ...Object.keys(EMBED_SIZES)];
}

/**
 * Resolve the output dimension for a model, validating any explicit request.
 *
 * For "mock", an explicit dim is required (there is no inherent size).
 * For registered models, an explicit dim must match the registry.
 */
export function resolveDim(model: string, dim?: number): number {
  if (dim !== undefined && (!Number.isInteger(dim) || dim < 1)) {
    throw new ModelError(`dim must be a positive integer, got ${dim}`);
  }
  if (model === MOCK_MODEL) {
    if (dim === undefined) {
      throw new ModelError('model "mock" requires an explicit dim');
    }
    return dim;
  }
  const registered = EMBED_SIZES[model];
  if (registered === undefined) {
    throw new ModelError(
      `unknown model ${JSON.stringify(model)}; expected one of ${knownModels().join(", ")}`,
    );
  }
  if (dim !== undefined && dim !== registered) {
    throw new ModelError(
      `model ${JSON.stringify(model)} produces ${registered}-dim vectors, not ${dim}`,
    );
  }
  return registered;
}

/** Real extractors are out of scope: fail clearly instead of silently mocking. */
export function requireAdapter(model: string): never {
  throw new ModelError(
    `model ${JSON.stringify(model)} adapter not bundled; use "mock" for deterministic test vectors`,
  );
}
