/** Adapter configuration: a small JSON document validated up front. */

import * as fs from "node:fs";
import * as path from "node:path";

export type AdapterMode = "stub" | "model";

export interface AdapterConfig {
  mode: AdapterMode;
  modelPath: string | null;
  confidenceFloor: number;
  inputDir: string;
  outputFile: string;
}

export class ConfigError extends Error {}

export function loadConfig(configPath: string): AdapterConfig {
  let raw: string;
  try {
    raw = fs.readFileSync(configPath, "utf-8");
  } catch {
    throw new ConfigError(`config file not found: ${configPath}`);
  }
  let doc: Record<string, unknown>;
  try {
    doc = JSON.parse(raw);
  } catch (err) {
    throw new ConfigError(`config is not valid JSON: ${err}`);
  }

  const mode = doc.mode;
  if (mode !== "stub" && mode !== "model") {
    throw new ConfigError(`mode: must be "stub" or "model", got ${JSON.stringify(mode)}`);
  }
  const floor = doc.confidence_floor ?? 0;
  if (typeof floor !== "number" || !(floor >= 0 && floor <= 1)) {
    throw new ConfigError(`confidence_floor: must be a number in [0, 1], got ${JSON.stringify(floor)}`);
  }
  const inputDir = doc.input_dir;
  if (typeof inputDir !== "string" || inputDir === "") {
    throw new ConfigError("input_dir: must be a non-empty path");
  }
  const outputFile = doc.output_file;
  if (typeof outputFile !== "string" || outputFile === "") {
    throw new ConfigError("output_file: must be a non-empty path");
  }
  const modelPath = doc.model_path ?? null;
  if (mode === "model" && (typeof modelPath !== "string" || modelPath === "")) {
    throw new ConfigError("model_path: required in model mode");
  }

  const base = path.dirname(path.resolve(configPath));
  const resolve = (p: string) => (path.isAbsolute(p) ? p : path.join(base, p));
  const resolvedInput = resolve(inputDir);
  if (!fs.existsSync(resolvedInput) || !fs.statSync(resolvedInput).isDirectory()) {
    throw new ConfigError(`input_dir: not a directory: ${resolvedInput}`);
  }
  return {
    mode,
    modelPath: typeof modelPath === "string" ? resolve(modelPath) : null,
    confidenceFloor: floor,
    inputDir: resolvedInput,
    outputFile: resolve(outputFile),
  };
}
