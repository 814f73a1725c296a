/**
 * Adapter pipeline: scan a directory of `<point_id>_<heading>.jpg` views,
 * segment each (stub or model), and emit one canonical detection document
 * covering every decodable input image.
 *
 * Undecodable images are skipped with a warning and listed in the sidecar
 * report next to the output file; images with byte-identical content share an
 * image id and collapse to one entry (also noted in the report).
 */

import { createHash } from "node:crypto";
import * as fs from "node:fs";
import * as path from "node:path";

import { AdapterConfig } from "./config";
import { jpegDimensions, UndecodableImage } from "./jpeg";
import { loadModel, modelInstances, SegmenterModel } from "./model";
import { validateCounts } from "./rle";
import { stubInstance } from "./stub";
import { emitDetectionDocument, WireImage, WireInstance } from "./wire";

export interface SkipEntry {
  file: string;
  reason: string;
}

export interface AdapterReport {
  images_emitted: number;
  skipped: SkipEntry[];
  duplicates: { file: string; image_id: string }[];
}

function listInputImages(inputDir: string): string[] {
  return fs
    .readdirSync(inputDir)
    .filter((name) => /\.jpe?g$/i.test(name))
    .sort(); // byte-wise ascending: part of the deterministic output contract
}

export function runAdapter(config: AdapterConfig): AdapterReport {
  const model: SegmenterModel | null = config.mode === "model" ? loadModel(config.modelPath!) : null;

  const files = listInputImages(config.inputDir);
  const images: WireImage[] = [];
  const seen = new Set<string>();
  const report: AdapterReport = { images_emitted: 0, skipped: [], duplicates: [] };

  for (const name of files) {
    const filePath = path.join(config.inputDir, name);
    const data = fs.readFileSync(filePath);
    let width: number;
    let height: number;
    try {
      ({ width, height } = jpegDimensions(data));
    } catch (err) {
      if (err instanceof UndecodableImage) {
        console.warn(`segmenter-adapter: skipping undecodable image ${name}: ${err.message}`);
        report.skipped.push({ file: name, reason: err.message });
        continue;
      }
      throw err;
    }
    const imageId = createHash("sha256").update(data).digest("hex");
    if (seen.has(imageId)) {
      report.duplicates.push({ file: name, image_id: imageId });
      continue;
    }
    seen.add(imageId);

    let instances: WireInstance[];
    if (model !== null) {
      instances = modelInstances(model, data, width, height);
    } else {
      instances = [stubInstance(imageId, width, height)];
    }
    instances = instances.filter((inst) => inst.confidence >= config.confidenceFloor);
    for (const inst of instances) {
      validateCounts(inst.rle.counts, height, width);
    }
    images.push({ image_id: imageId, width, height, instances });
  }

  report.images_emitted = images.length;
  writeAtomically(config.outputFile, emitDetectionDocument(images));
  writeAtomically(
    config.outputFile + ".report.json",
    Buffer.from(JSON.stringify(report, null, 2) + "\n", "utf-8"),
  );
  return report;
}

function writeAtomically(target: string, data: Buffer): void {
  fs.mkdirSync(path.dirname(target), { recursive: true });
  const tmp = `${target}.tmp-${process.pid}`;
  fs.writeFileSync(tmp, data);
  fs.renameSync(tmp, target);
}
