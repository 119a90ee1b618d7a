import * as fs from "node:fs";
import * as path from "node:path";
import { spawnSync } from "node:child_process";

import { mulberry32 } from "../src/convert.js";
import { writeMatInt16 } from "../src/mat.js";

export const CHALLENGE_LABELS = ["N", "A", "O", "~"];

/** Synthetic challenge-layout archive: A*.mat recordings + REFERENCE.csv. */
export function makeArchive(
  dir: string,
  count: number,
  seed = 0,
  seconds = 9,
): void {
  fs.mkdirSync(dir, { recursive: true });
  const rand = mulberry32(seed);
  const lines: string[] = [];
  for (let i = 0; i < count; i++) {
    const id = `A${String(i + 1).padStart(5, "0")}`;
    const label = CHALLENGE_LABELS[i % CHALLENGE_LABELS.length];
    const n = Math.round(300 * seconds);
    const samples = new Int16Array(n);
    for (let t = 0; t < n; t++) {
      // beat-like bumps whose rate depends on the class, plus noise
      const rate = 1.0 + 0.25 * (i % CHALLENGE_LABELS.length);
      const phase = (t / 300) % (1 / rate);
      const bump = Math.exp(-((phase - 0.15) ** 2) / 0.0008);
      samples[t] = Math.round(900 * bump + 80 * (rand() * 2 - 1));
    }
    fs.writeFileSync(path.join(dir, `${id}.mat`), writeMatInt16("val", samples));
    lines.push(`${id},${label}`);
  }
  fs.writeFileSync(path.join(dir, "REFERENCE.csv"), lines.join("\n") + "\n");
}

/** Run the fxpnn primary CLI (the toolchain this trainer feeds). */
export function fxpnn(args: string[], cwd?: string) {
  const proc = spawnSync("python3", ["-m", "fxpnn.cli", ...args], {
    cwd,
    encoding: "utf-8",
    timeout: 300_000,
  });
  return { status: proc.status, stdout: proc.stdout ?? "", stderr: proc.stderr ?? "" };
}
