import * as zlib from "node:zlib";

import { describe, expect, it } from "vitest";

import { readMatSamples, writeMatInt16 } from "../src/mat.js";

describe("mat reader", () => {
  it("round-trips an int16 recording", () => {
    const values = Int16Array.from([0, 1, -1, 900, -900, 32767, -32768]);
    const out = readMatSamples(writeMatInt16("val", values));
    expect([...out]).toEqual([...values]);
  });

  it("handles zlib-compressed matrices", () => {
    const values = Int16Array.from({ length: 300 }, (_, i) => (i * 37) % 1000);
    const plain = writeMatInt16("val", values);
    const element = plain.subarray(128); // the miMATRIX element
    const deflated = zlib.deflateSync(element);
    const tag = Buffer.alloc(8);
    tag.writeUInt32LE(15, 0); // miCOMPRESSED
    tag.writeUInt32LE(deflated.length, 4);
    const compressed = Buffer.concat([plain.subarray(0, 128), tag, deflated]);
    expect([...readMatSamples(compressed)]).toEqual([...values]);
  });

  it("rejects truncated files", () => {
    const blob = writeMatInt16("val", Int16Array.from({ length: 100 }, (_, i) => i));
    expect(() => readMatSamples(blob.subarray(0, 64))).toThrow(/truncated/);
    expect(() => readMatSamples(blob.subarray(0, 140))).toThrow(/truncated/);
  });

  it("rejects non-mat files", () => {
    expect(() => readMatSamples(Buffer.alloc(200))).toThrow(/unsupported/);
  });
});
