/**
 * Cross-component contract: the adapter's stub output must byte-match the
 * golden file committed in the consumer's repository and parse cleanly on the
 * consumer side, exercised through its public `evaluate` CLI (a detection
 * file evaluated against itself scores a perfect 1.0).
 */

import { spawnSync } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { afterEach, beforeEach, describe, expect, it } from "vitest";

import { runAdapter } from "../src/adapter";
import { loadConfig } from "../src/config";

const FIXTURES = path.resolve(process.cwd(), "..", "tests", "fixtures", "toy");

let tmpDir: string;

beforeEach(() => {
  tmpDir = fs.mkdtempSync(path.join(os.tmpdir(), "segmenter-cross-"));
});

afterEach(() => {
  fs.rmSync(tmpDir, { recursive: true, force: true });
});

describe("stub-adapter contract", () => {
  it("regenerates the golden file and round-trips through the consumer", () => {
    const outputFile = path.join(tmpDir, "detections.json");
    const configPath = path.join(tmpDir, "config.json");
    fs.writeFileSync(
      configPath,
      JSON.stringify({
        mode: "stub",
        confidence_floor: 0,
        input_dir: path.join(FIXTURES, "provider"),
        output_file: outputFile,
      }),
    );
    const started = Date.now();
    runAdapter(loadConfig(configPath));

    const golden = fs.readFileSync(path.join(FIXTURES, "adapter_detections.json"));
    expect(fs.readFileSync(outputFile).equals(golden)).toBe(true);

    const reportPath = path.join(tmpDir, "ap.json");
    const result = spawnSync(
      "python3",
      ["-m", "graffmap", "evaluate", outputFile, outputFile, "--out", reportPath],
      { encoding: "utf-8" },
    );
    expect(result.status, result.stderr).toBe(0);
    const report = JSON.parse(fs.readFileSync(reportPath, "utf-8"));
    expect(report.average_precision).toBe(1.0);
    expect(report.n_images).toBe(32);
    expect(Date.now() - started).toBeLessThan(10_000);
  });
});
