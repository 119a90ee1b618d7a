#!/usr/bin/env node
/**
 * Trainer CLI.
 *
 *   convert <archiveDir> <outDir> [--seed N] [--test-fraction F]
 *   train <manifest> <windowsDir> <out.fxf> [--epochs N] [--seq-len N]
 *         [--batch N] [--seed N]
 *
 * The expected flow: convert the challenge archive, preprocess the
 * manifest with `fxpnn preprocess`, then train on the window files and
 * hand the exported .fxf to `fxpnn quantize`.
 */

import { convertDataset } from "./convert.js";
import { DEFAULT_CONFIG, exportModel, loadSequences, trainModel } from "./train.js";

function parseFlags(args: string[]): { positional: string[]; flags: Map<string, string> } {
  const positional: string[] = [];
  const flags = new Map<string, string>();
  for (let i = 0; i < args.length; i++) {
    if (args[i].startsWith("--")) {
      flags.set(args[i].slice(2), args[i + 1] ?? "");
      i++;
    } else {
      positional.push(args[i]);
    }
  }
  return { positional, flags };
}

async function main(): Promise<number> {
  const [command, ...rest] = process.argv.slice(2);
  const { positional, flags } = parseFlags(rest);

  if (command === "convert") {
    const [archiveDir, outDir] = positional;
    if (!archiveDir || !outDir) {
      console.error("usage: convert <archiveDir> <outDir> [--seed N] [--test-fraction F]");
      return 2;
    }
    const result = convertDataset(archiveDir, outDir, {
      seed: Number(flags.get("seed") ?? 0),
      testFraction: flags.has("test-fraction") ? Number(flags.get("test-fraction")) : undefined,
    });
    console.log(
      `converted ${result.total} records -> ${result.manifestPath} ` +
        `(train ${result.trainCount} / test ${result.testCount})`,
    );
    return 0;
  }

  if (command === "train") {
    const [manifest, windowsDir, outPath] = positional;
    if (!manifest || !windowsDir || !outPath) {
      console.error("usage: train <manifest> <windowsDir> <out.fxf> [--epochs N] ...");
      return 2;
    }
    const config = {
      ...DEFAULT_CONFIG,
      epochs: Number(flags.get("epochs") ?? DEFAULT_CONFIG.epochs),
      seqLen: Number(flags.get("seq-len") ?? DEFAULT_CONFIG.seqLen),
      batchSize: Number(flags.get("batch") ?? DEFAULT_CONFIG.batchSize),
      seed: Number(flags.get("seed") ?? DEFAULT_CONFIG.seed),
    };
    const data = loadSequences(manifest, windowsDir, config.seqLen);
    console.log(`training on ${data.count} records, ${config.epochs} epochs`);
    const result = await trainModel(data, config);
    const params = exportModel(result.model, outPath);
    console.log(
      `final loss ${result.finalLoss.toFixed(4)}, ` +
        `accuracy ${result.finalAccuracy.toFixed(3)} (not a release gate)`,
    );
    console.log(`wrote ${outPath} (${params} parameters)`);
    return 0;
  }

  console.error("usage: cli.js convert|train ...");
  return 2;
}

main().then(
  (code) => process.exit(code),
  (err) => {
    console.error(`error: ${err instanceof Error ? err.message : err}`);
    process.exit(1);
  },
);
