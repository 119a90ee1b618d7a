/**
 * Archive conversion: a challenge-layout directory (A#####.mat recordings
 * plus REFERENCE.csv labels) becomes the interchange format the fxpnn
 * pipeline reads: a JSON-lines manifest and little-endian int16 sample
 * files, with a seeded stratified train/test split.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { readMatSamples } from "./mat.js";

export const RECORD_FS_HZ = 300;
export const SAMPLE_SCALE = 0.001; // challenge amplitudes are in 1/1000 mV
/** test-set share of the full 8,528-record archive: 1,528 records */
export const TEST_FRACTION = 1528 / 8528;

export interface ConvertOptions {
  seed?: number;
  testFraction?: number;
}

export interface ConvertResult {
  manifestPath: string;
  trainManifestPath: string;
  testManifestPath: string;
  total: number;
  trainCount: number;
  testCount: number;
}

interface Entry {
  id: string;
  label: string;
  line: string;
}

/** Deterministic 32-bit PRNG so splits reproduce across runs and platforms. */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function shuffled<T>(items: T[], rand: () => number): T[] {
  const out = [...items];
  for (let i = out.length - 1; i > 0; i--) {
    const j = Math.floor(rand() * (i + 1));
    [out[i], out[j]] = [out[j], out[i]];
  }
  return out;
}

export function readReference(archiveDir: string): { id: string; label: string }[] {
  const refPath = path.join(archiveDir, "REFERENCE.csv");
  if (!fs.existsSync(refPath)) {
    throw new Error(`truncated archive: missing ${refPath}`);
  }
  const rows = fs
    .readFileSync(refPath, "utf-8")
    .split(/\r?\n/)
    .map((l) => l.trim())
    .filter((l) => l.length > 0)
    .map((l) => {
      const [id, label] = l.split(",").map((s) => s.trim());
      if (!id || !label) throw new Error(`truncated archive: malformed reference line "${l}"`);
      return { id, label };
    });
  if (rows.length === 0) throw new Error("truncated archive: empty REFERENCE.csv");
  return rows;
}

export function convertDataset(
  archiveDir: string,
  outDir: string,
  opts: ConvertOptions = {},
): ConvertResult {
  const seed = opts.seed ?? 0;
  const testFraction = opts.testFraction ?? TEST_FRACTION;
  const rows = readReference(archiveDir);

  // verify the whole archive up front: a missing or unreadable recording
  // aborts before anything is written
  const samplesById = new Map<string, Float64Array>();
  for (const { id } of rows) {
    const matPath = path.join(archiveDir, `${id}.mat`);
    if (!fs.existsSync(matPath)) {
      throw new Error(`truncated archive: ${id}.mat listed in REFERENCE.csv but missing`);
    }
    samplesById.set(id, readMatSamples(fs.readFileSync(matPath)));
  }

  fs.mkdirSync(outDir, { recursive: true });
  const entries: Entry[] = [];
  for (const { id, label } of rows) {
    const samples = samplesById.get(id)!;
    const raw = Buffer.alloc(samples.length * 2);
    for (let i = 0; i < samples.length; i++) raw.writeInt16LE(samples[i], 2 * i);
    fs.writeFileSync(path.join(outDir, `${id}.bin`), raw);
    entries.push({
      id,
      label,
      line: JSON.stringify({
        id,
        label,
        fs: RECORD_FS_HZ,
        path: `${id}.bin`,
        dtype: "i16",
        scale: SAMPLE_SCALE,
      }),
    });
  }

  // stratified split: largest-remainder quota per class, seeded shuffles
  const byClass = new Map<string, Entry[]>();
  for (const e of entries) {
    if (!byClass.has(e.label)) byClass.set(e.label, []);
    byClass.get(e.label)!.push(e);
  }
  const testSize = Math.round(entries.length * testFraction);
  const labels = [...byClass.keys()].sort();
  const quotas = new Map<string, number>();
  let assigned = 0;
  const remainders: [number, string][] = [];
  for (const label of labels) {
    const exact = (testSize * byClass.get(label)!.length) / entries.length;
    quotas.set(label, Math.floor(exact));
    assigned += Math.floor(exact);
    remainders.push([exact - Math.floor(exact), label]);
  }
  remainders.sort((a, b) => b[0] - a[0] || a[1].localeCompare(b[1]));
  for (let i = 0; i < testSize - assigned; i++) quotas.set(remainders[i][1], quotas.get(remainders[i][1])! + 1);

  const rand = mulberry32(seed);
  const train: Entry[] = [];
  const test: Entry[] = [];
  for (const label of labels) {
    const group = shuffled(byClass.get(label)!, rand);
    const k = quotas.get(label)!;
    test.push(...group.slice(0, k));
    train.push(...group.slice(k));
  }

  const write = (name: string, list: Entry[]) => {
    const p = path.join(outDir, name);
    fs.writeFileSync(p, list.map((e) => e.line).join("\n") + "\n");
    return p;
  };
  return {
    manifestPath: write("manifest.jsonl", entries),
    trainManifestPath: write("train.jsonl", train),
    testManifestPath: write("test.jsonl", test),
    total: entries.length,
    trainCount: train.length,
    testCount: test.length,
  };
}
