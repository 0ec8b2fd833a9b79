export {
  FormatError,
  FORMAT_VERSION,
  YXEB_MAGIC,
  YXSV_MAGIC,
  decodeEmbeddings,
  decodeSlideVector,
  encodeEmbeddings,
  encodeSlideVector,
} from "./formats.js";
export type { PatchVector } from "./formats.js";
export { mockVector, patchKey, seedFromKey, slideKey, splitmix64 } from "./mock.js";
export { EMBED_SIZES, MOCK_MODEL, ModelError, knownModels, resolveDim } from "./models.js";
export { MOSAIC_HEADER, groupBySlide, parseMosaic, readMosaic } from "./mosaic.js";
export type { MosaicPatch } from "./mosaic.js";
export { runExport } from "./export.js";
export type { ExportJob, ExportResult } from "./export.js";
export { run as runCli, USAGE } from "./cli.js";
