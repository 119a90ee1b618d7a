/**
 * Minimal MATLAB level-5 .mat reader for the challenge recordings: one
 * numeric matrix per file (int16 or double), plain or zlib-compressed.
 * A writer for the uncompressed int16 case backs the test fixtures.
 */

import * as zlib from "node:zlib";

const MI_INT8 = 1;
const MI_INT16 = 3;
const MI_INT32 = 5;
const MI_UINT32 = 6;
const MI_DOUBLE = 9;
const MI_MATRIX = 14;
const MI_COMPRESSED = 15;

interface Element {
  type: number;
  data: Buffer;
}

function readElement(buf: Buffer, pos: number): { el: Element; next: number } {
  if (pos + 8 > buf.length) throw new Error(`truncated mat file at offset ${pos}`);
  const tag = buf.readUInt32LE(pos);
  // small-element format packs type and length into one 32-bit word
  if ((tag & 0xffff0000) !== 0) {
    const type = tag & 0xffff;
    const nbytes = tag >>> 16;
    return { el: { type, data: buf.subarray(pos + 4, pos + 4 + nbytes) }, next: pos + 8 };
  }
  const type = tag;
  const nbytes = buf.readUInt32LE(pos + 4);
  if (pos + 8 + nbytes > buf.length) throw new Error(`truncated mat file at offset ${pos}`);
  const data = buf.subarray(pos + 8, pos + 8 + nbytes);
  let next = pos + 8 + nbytes;
  next += (8 - (next % 8)) % 8; // elements are 8-byte aligned
  return { el: { type, data }, next };
}

function decodeMatrix(body: Buffer): Float64Array {
  let pos = 0;
  const flags = readElement(body, pos); // array flags (miUINT32 x2)
  if (flags.el.type !== MI_UINT32) throw new Error("unsupported mat file: bad array flags");
  pos = flags.next;
  const dims = readElement(body, pos);
  if (dims.el.type !== MI_INT32) throw new Error("unsupported mat file: bad dimensions");
  pos = dims.next;
  pos = readElement(body, pos).next; // array name, unused
  const real = readElement(body, pos);

  let count: number;
  const out = (() => {
    if (real.el.type === MI_INT16) {
      count = real.el.data.length / 2;
      const vals = new Float64Array(count);
      for (let i = 0; i < count; i++) vals[i] = real.el.data.readInt16LE(2 * i);
      return vals;
    }
    if (real.el.type === MI_DOUBLE) {
      count = real.el.data.length / 8;
      const vals = new Float64Array(count);
      for (let i = 0; i < count; i++) vals[i] = real.el.data.readDoubleLE(8 * i);
      return vals;
    }
    throw new Error(`unsupported mat file: data type ${real.el.type}`);
  })();
  return out;
}

/** Read the first numeric matrix in the file, flattened. */
export function readMatSamples(buf: Buffer): Float64Array {
  if (buf.length < 128) throw new Error("truncated mat file: missing header");
  const version = buf.readUInt16LE(124);
  const endian = buf.toString("ascii", 126, 128);
  if (version !== 0x0100 || endian !== "IM") {
    throw new Error("unsupported mat file: not a little-endian level-5 file");
  }
  let pos = 128;
  while (pos < buf.length) {
    const { el, next } = readElement(buf, pos);
    if (el.type === MI_MATRIX) return decodeMatrix(el.data);
    if (el.type === MI_COMPRESSED) {
      const inflated = zlib.inflateSync(el.data);
      const inner = readElement(inflated, 0);
      if (inner.el.type === MI_MATRIX) return decodeMatrix(inner.el.data);
    }
    pos = next;
  }
  throw new Error("unsupported mat file: no numeric matrix found");
}

/** Write a (1, n) int16 matrix the way the challenge archives store them. */
export function writeMatInt16(name: string, values: Int16Array): Buffer {
  const header = Buffer.alloc(128);
  header.write("MATLAB 5.0 MAT-file, synthetic fixture", 0, "ascii");
  header.writeUInt16LE(0x0100, 124);
  header.write("IM", 126, "ascii");

  const pad8 = (b: Buffer) =>
    b.length % 8 === 0 ? b : Buffer.concat([b, Buffer.alloc(8 - (b.length % 8))]);

  const element = (type: number, data: Buffer) => {
    const tag = Buffer.alloc(8);
    tag.writeUInt32LE(type, 0);
    tag.writeUInt32LE(data.length, 4);
    return pad8(Buffer.concat([tag, data]));
  };

  const flags = Buffer.alloc(8);
  flags.writeUInt32LE(10, 0); // mxINT16 class
  const dims = Buffer.alloc(8);
  dims.writeInt32LE(1, 0);
  dims.writeInt32LE(values.length, 4);
  const nameBuf = Buffer.from(name, "ascii");
  const data = Buffer.alloc(values.length * 2);
  for (let i = 0; i < values.length; i++) data.writeInt16LE(values[i], 2 * i);

  const body = Buffer.concat([
    element(MI_UINT32, flags),
    element(MI_INT32, dims),
    element(MI_INT8, nameBuf),
    element(MI_INT16, data),
  ]);
  return Buffer.concat([header, element(MI_MATRIX, body)]);
}
