/**
 * FXF1 float-model container: the handoff format between this trainer and
 * the fxpnn quantizer.
 *
 * Layout (little-endian): magic "FXF1", u16 version, u16 layer count,
 * u16 window length, u8 class count + length-prefixed class names, then
 * per-layer records (u8 type tag, name, dims, blob refs as u32
 * offset/length pairs into the payload), u32 payload length, the f32
 * payload, and a CRC32 of the payload.
 */

import * as zlib from "node:zlib";

export const FXF_MAGIC = "FXF1";
export const FORMAT_VERSION = 1;

const TAG_CONV = 1;
const TAG_POOL = 2;
const TAG_GAP = 3;
const TAG_GRU = 4;
const TAG_DENSE = 5;
const TAG_SOFTMAX = 6;

export interface ConvLayer {
  type: "conv";
  name: string;
  kernelSize: number;
  inChannels: number;
  outChannels: number;
  stride: number;
  padding: "same" | "valid";
  activation: "relu" | "linear";
  /** row-major (outChannels, kernelSize, inChannels) */
  weights: Float32Array;
  bias: Float32Array;
}

export interface PoolLayer {
  type: "pool";
  name: string;
  size: number;
  stride: number;
}

export interface GapLayer {
  type: "gap";
  name: string;
}

export interface GruLayer {
  type: "gru";
  name: string;
  inputDim: number;
  hiddenDim: number;
  /** row-major (3, hidden, input), gate order z, r, candidate */
  kernel: Float32Array;
  /** row-major (3, hidden, hidden) */
  recurrent: Float32Array;
  /** row-major (3, hidden) */
  bias: Float32Array;
}

export interface DenseLayer {
  type: "dense";
  name: string;
  inDim: number;
  outDim: number;
  /** row-major (outDim, inDim) */
  weights: Float32Array;
  bias: Float32Array;
}

export interface SoftmaxLayer {
  type: "softmax";
  name: string;
}

export type Layer = ConvLayer | PoolLayer | GapLayer | GruLayer | DenseLayer | SoftmaxLayer;

export interface FloatModel {
  windowLen: number;
  classNames: string[];
  layers: Layer[];
}

export function paramCount(model: FloatModel): number {
  let total = 0;
  for (const layer of model.layers) {
    if (layer.type === "conv" || layer.type === "dense") {
      total += layer.weights.length + layer.bias.length;
    } else if (layer.type === "gru") {
      total += layer.kernel.length + layer.recurrent.length + layer.bias.length;
    }
  }
  return total;
}

class Writer {
  private head: Buffer[] = [];
  private payload: Buffer[] = [];
  private payloadBytes = 0;

  u8(v: number) {
    const b = Buffer.alloc(1);
    b.writeUInt8(v);
    this.head.push(b);
  }

  u16(v: number) {
    const b = Buffer.alloc(2);
    b.writeUInt16LE(v);
    this.head.push(b);
  }

  u32(v: number) {
    const b = Buffer.alloc(4);
    b.writeUInt32LE(v >>> 0);
    this.head.push(b);
  }

  raw(b: Buffer) {
    this.head.push(b);
  }

  str(s: string) {
    const raw = Buffer.from(s, "utf-8");
    if (raw.length > 255) throw new Error(`name too long: ${s}`);
    this.u8(raw.length);
    this.head.push(raw);
  }

  blob(values: Float32Array) {
    const data = Buffer.from(values.buffer, values.byteOffset, values.byteLength);
    this.u32(this.payloadBytes);
    this.u32(data.length);
    this.payload.push(Buffer.from(data)); // copy: caller may reuse the array
    this.payloadBytes += data.length;
  }

  finish(): Buffer {
    const payload = Buffer.concat(this.payload);
    const len = Buffer.alloc(4);
    len.writeUInt32LE(payload.length);
    const crc = Buffer.alloc(4);
    crc.writeUInt32LE(zlib.crc32(payload) >>> 0);
    return Buffer.concat([...this.head, len, payload, crc]);
  }
}

export function encodeFxf1(model: FloatModel): Buffer {
  const w = new Writer();
  w.raw(Buffer.from(FXF_MAGIC, "ascii"));
  w.u16(FORMAT_VERSION);
  w.u16(model.layers.length);
  w.u16(model.windowLen);
  w.u8(model.classNames.length);
  for (const c of model.classNames) w.str(c);

  for (const layer of model.layers) {
    if (layer.type === "conv") {
      w.u8(TAG_CONV);
      w.str(layer.name);
      w.u16(layer.kernelSize);
      w.u16(layer.inChannels);
      w.u16(layer.outChannels);
      w.u8(layer.stride);
      w.u8(layer.padding === "same" ? 0 : 1);
      w.u8(layer.activation === "relu" ? 0 : 1);
      w.blob(layer.weights);
      w.blob(layer.bias);
    } else if (layer.type === "pool") {
      w.u8(TAG_POOL);
      w.str(layer.name);
      w.u8(layer.size);
      w.u8(layer.stride);
    } else if (layer.type === "gap") {
      w.u8(TAG_GAP);
      w.str(layer.name);
    } else if (layer.type === "gru") {
      w.u8(TAG_GRU);
      w.str(layer.name);
      w.u16(layer.inputDim);
      w.u16(layer.hiddenDim);
      w.blob(layer.kernel);
      w.blob(layer.recurrent);
      w.blob(layer.bias);
    } else if (layer.type === "dense") {
      w.u8(TAG_DENSE);
      w.str(layer.name);
      w.u16(layer.inDim);
      w.u16(layer.outDim);
      w.blob(layer.weights);
      w.blob(layer.bias);
    } else {
      w.u8(TAG_SOFTMAX);
      w.str(layer.name);
    }
  }
  return w.finish();
}

class Reader {
  pos = 0;

  constructor(private data: Buffer) {}

  take(n: number): Buffer {
    if (this.pos + n > this.data.length) {
      throw new Error(`truncated blob: need ${n} bytes at offset ${this.pos}`);
    }
    const out = this.data.subarray(this.pos, this.pos + n);
    this.pos += n;
    return out;
  }

  u8(): number {
    return this.take(1).readUInt8();
  }

  u16(): number {
    return this.take(2).readUInt16LE();
  }

  u32(): number {
    return this.take(4).readUInt32LE();
  }

  str(): string {
    return this.take(this.u8()).toString("utf-8");
  }
}

function blobArray(payload: Buffer, off: number, len: number): Float32Array {
  if (off + len > payload.length) throw new Error("truncated blob: extent outside payload");
  const copy = Buffer.from(payload.subarray(off, off + len));
  return new Float32Array(copy.buffer, copy.byteOffset, len / 4);
}

export function decodeFxf1(data: Buffer): FloatModel {
  const r = new Reader(data);
  if (r.take(4).toString("ascii") !== FXF_MAGIC) {
    throw new Error("bad magic: not an FXF1 model file");
  }
  const version = r.u16();
  if (version !== FORMAT_VERSION) {
    throw new Error(`version mismatch: file v${version}, supported v${FORMAT_VERSION}`);
  }
  const layerCount = r.u16();
  const windowLen = r.u16();
  const classNames: string[] = [];
  const nClasses = r.u8();
  for (let i = 0; i < nClasses; i++) classNames.push(r.str());

  interface PendingBlob {
    refs: [number, number][];
    fill: (arrays: Float32Array[]) => void;
  }
  const layers: Layer[] = [];
  const pending: PendingBlob[] = [];

  for (let i = 0; i < layerCount; i++) {
    const tag = r.u8();
    const name = r.str();
    if (tag === TAG_CONV) {
      const kernelSize = r.u16();
      const inChannels = r.u16();
      const outChannels = r.u16();
      const stride = r.u8();
      const padding = r.u8() === 0 ? "same" : "valid";
      const activation = r.u8() === 0 ? "relu" : "linear";
      const refs: [number, number][] = [[r.u32(), r.u32()], [r.u32(), r.u32()]];
      const idx = layers.length;
      layers.push(undefined as unknown as Layer);
      pending.push({
        refs,
        fill: ([weights, bias]) => {
          layers[idx] = {
            type: "conv", name, kernelSize, inChannels, outChannels,
            stride, padding, activation, weights, bias,
          };
        },
      });
    } else if (tag === TAG_POOL) {
      layers.push({ type: "pool", name, size: r.u8(), stride: r.u8() });
    } else if (tag === TAG_GAP) {
      layers.push({ type: "gap", name });
    } else if (tag === TAG_GRU) {
      const inputDim = r.u16();
      const hiddenDim = r.u16();
      const refs: [number, number][] = [
        [r.u32(), r.u32()], [r.u32(), r.u32()], [r.u32(), r.u32()],
      ];
      const idx = layers.length;
      layers.push(undefined as unknown as Layer);
      pending.push({
        refs,
        fill: ([kernel, recurrent, bias]) => {
          layers[idx] = { type: "gru", name, inputDim, hiddenDim, kernel, recurrent, bias };
        },
      });
    } else if (tag === TAG_DENSE) {
      const inDim = r.u16();
      const outDim = r.u16();
      const refs: [number, number][] = [[r.u32(), r.u32()], [r.u32(), r.u32()]];
      const idx = layers.length;
      layers.push(undefined as unknown as Layer);
      pending.push({
        refs,
        fill: ([weights, bias]) => {
          layers[idx] = { type: "dense", name, inDim, outDim, weights, bias };
        },
      });
    } else if (tag === TAG_SOFTMAX) {
      layers.push({ type: "softmax", name });
    } else {
      throw new Error(`bad magic: unknown layer tag ${tag}`);
    }
  }

  const payloadLen = r.u32();
  const payload = r.take(payloadLen);
  const crc = r.u32();
  if ((zlib.crc32(payload) >>> 0) !== crc) {
    throw new Error("checksum failure: payload CRC32 mismatch");
  }
  for (const p of pending) {
    p.fill(p.refs.map(([off, len]) => blobArray(Buffer.from(payload), off, len)));
  }
  return { windowLen, classNames, layers };
}
