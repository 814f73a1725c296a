/**
 * Model mode seam: the configured model_path resolves to a Node module
 * exporting `segment(imageBytes, width, height)` returning raw instances.
 * Real segmentation runtimes plug in behind that export; nothing here knows
 * which one.
 */

import { createRequire } from "node:module";

import { validateCounts } from "./rle";
import { GRAFFITI_LABEL, WireInstance } from "./wire";

export class ModelLoadFailure extends Error {}

export interface RawInstance {
  counts: number[];
  confidence: number;
}

export interface SegmenterModel {
  segment(imageBytes: Buffer, width: number, height: number): RawInstance[];
}

export function loadModel(modelPath: string): SegmenterModel {
  const require = createRequire(__filename);
  let mod: unknown;
  try {
    mod = require(modelPath);
  } catch (err) {
    throw new ModelLoadFailure(`cannot load model module ${modelPath}: ${err}`);
  }
  const segment = (mod as { segment?: unknown }).segment;
  if (typeof segment !== "function") {
    throw new ModelLoadFailure(`model module ${modelPath} does not export segment()`);
  }
  return mod as SegmenterModel;
}

export function modelInstances(
  model: SegmenterModel,
  imageBytes: Buffer,
  width: number,
  height: number,
): WireInstance[] {
  const raw = model.segment(imageBytes, width, height);
  return raw.map((inst) => {
    if (typeof inst.confidence !== "number" || !(inst.confidence >= 0 && inst.confidence <= 1)) {
      throw new Error(`model returned confidence outside [0, 1]: ${inst.confidence}`);
    }
    validateCounts(inst.counts, height, width);
    return {
      label: GRAFFITI_LABEL,
      confidence: inst.confidence,
      rle: { size: [height, width] as [number, number], counts: inst.counts },
    };
  });
}
