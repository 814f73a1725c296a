#!/usr/bin/env node
/** CLI entry: `segmenter-adapter --config PATH`. */

import { runAdapter } from "./adapter";
import { ConfigError, loadConfig } from "./config";
import { ModelLoadFailure } from "./model";

function usage(): never {
  console.error("usage: segmenter-adapter --config PATH");
  process.exit(2);
}

export function main(argv: string[]): number {
  const args = argv.slice(2);
  let configPath: string | null = null;
  for (let i = 0; i < args.length; i++) {
    if (args[i] === "--config") {
      configPath = args[i + 1] ?? null;
      i += 1;
    } else if (args[i] === "--help" || args[i] === "-h") {
      usage();
    } else {
      console.error(`unknown argument: ${args[i]}`);
      usage();
    }
  }
  if (configPath === null) {
    usage();
  }
  try {
    const config = loadConfig(configPath);
    const report = runAdapter(config);
    console.log(
      `segmenter-adapter: ${report.images_emitted} images -> ${config.outputFile}` +
        (report.skipped.length ? ` (${report.skipped.length} skipped)` : ""),
    );
    return 0;
  } catch (err) {
    if (err instanceof ConfigError) {
      console.error(`config error: ${err.message}`);
      return 2;
    }
    if (err instanceof ModelLoadFailure) {
      console.error(`model error: ${err.message}`);
      return 1;
    }
    throw err;
  }
}

if (require.main === module) {
  process.exit(main(process.argv));
}
