/**
 * Training: Adam + categorical cross-entropy over fixed-length window
 * sequences, fed from the window files the fxpnn preprocess command
 * produces (one float32 .npy of shape (N_w, 256) per record).
 */

import * as fs from "node:fs";
import * as path from "node:path";

import * as tf from "@tensorflow/tfjs";

import { encodeFxf1, paramCount } from "./fxf1.js";
import { CLASS_NAMES, EXPECTED_PARAMS, WINDOW_LEN, buildModel, extractFloatModel } from "./model.js";
import { readNpyFloat32 } from "./npy.js";

export interface TrainConfig {
  epochs: number; // full-run setting: 250
  seqLen: number; // windows per training sequence
  batchSize: number;
  gateDropout: number; // 0.5 on the GRU gates
  seed: number;
  learningRate?: number;
}

export const DEFAULT_CONFIG: TrainConfig = {
  epochs: 250,
  seqLen: 4,
  batchSize: 16,
  gateDropout: 0.5,
  seed: 0,
};

export interface LabeledSequences {
  x: tf.Tensor4D; // (records, seqLen, 256, 1)
  y: tf.Tensor2D; // (records, classes) one-hot
  count: number;
}

const LABEL_ALIASES: Record<string, string> = {
  N: "Normal", A: "AF", O: "Other", "~": "Noise",
  Normal: "Normal", AF: "AF", Other: "Other", Noise: "Noise",
};

export interface ManifestEntry {
  id: string;
  label?: string;
  [key: string]: unknown;
}

export function readManifest(manifestPath: string): ManifestEntry[] {
  return fs
    .readFileSync(manifestPath, "utf-8")
    .split(/\r?\n/)
    .filter((l) => l.trim().length > 0)
    .map((l) => JSON.parse(l) as ManifestEntry);
}

/**
 * Assemble fixed-length sequences: the first seqLen windows of each
 * record, wrapping around for records with fewer windows. Records whose
 * window file is missing (too short to preprocess) are skipped.
 */
export function loadSequences(
  manifestPath: string,
  windowsDir: string,
  seqLen: number,
): LabeledSequences {
  const entries = readManifest(manifestPath);
  const xs: number[] = [];
  const ys: number[] = [];
  let count = 0;
  for (const entry of entries) {
    const label = LABEL_ALIASES[entry.label ?? ""];
    if (!label) throw new Error(`unknown label ${entry.label} for record ${entry.id}`);
    const npyPath = path.join(windowsDir, `${entry.id}.windows.npy`);
    if (!fs.existsSync(npyPath)) continue;
    const arr = readNpyFloat32(fs.readFileSync(npyPath));
    const [nw, wl] = arr.shape;
    if (wl !== WINDOW_LEN || nw < 1) {
      throw new Error(`bad window file ${npyPath}: shape ${arr.shape}`);
    }
    for (let s = 0; s < seqLen; s++) {
      const w = s % nw;
      for (let i = 0; i < WINDOW_LEN; i++) xs.push(arr.data[w * WINDOW_LEN + i]);
    }
    const onehot = CLASS_NAMES.map((c) => (c === label ? 1 : 0));
    ys.push(...onehot);
    count += 1;
  }
  if (count === 0) throw new Error(`no usable records under ${windowsDir}`);
  return {
    x: tf.tensor4d(xs, [count, seqLen, WINDOW_LEN, 1]),
    y: tf.tensor2d(ys, [count, CLASS_NAMES.length]),
    count,
  };
}

export interface TrainResult {
  model: tf.Sequential;
  finalLoss: number;
  finalAccuracy: number;
}

export async function trainModel(
  data: LabeledSequences,
  config: TrainConfig,
): Promise<TrainResult> {
  const model = buildModel(config.seqLen, config.gateDropout);
  model.compile({
    optimizer: tf.train.adam(config.learningRate ?? 0.001),
    loss: "categoricalCrossentropy",
    metrics: ["accuracy"],
  });
  const history = await model.fit(data.x, data.y, {
    epochs: config.epochs,
    batchSize: config.batchSize,
    shuffle: true,
    verbose: 0,
  });
  const losses = history.history["loss"] as number[];
  const accs = (history.history["acc"] ?? history.history["accuracy"]) as number[];
  const finalLoss = losses[losses.length - 1];
  if (!Number.isFinite(finalLoss)) {
    throw new Error(
      `training diverged: non-finite loss after ${losses.length} epochs ` +
        `(history: ${losses.slice(-5).join(", ")})`,
    );
  }
  return { model, finalLoss, finalAccuracy: accs ? accs[accs.length - 1] : NaN };
}

/** Export trained weights as an FXF1 file for the fxpnn quantizer. */
export function exportModel(model: tf.Sequential, outPath: string): number {
  const float = extractFloatModel(model);
  const params = paramCount(float);
  if (params !== EXPECTED_PARAMS) {
    throw new Error(`export drift: ${params} parameters, expected ${EXPECTED_PARAMS}`);
  }
  fs.writeFileSync(outPath, encodeFxf1(float));
  return params;
}
