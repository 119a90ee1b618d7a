/** Reader for the float32 .npy files the fxpnn preprocess command emits. */

export interface NpyArray {
  shape: number[];
  data: Float32Array;
}

export function readNpyFloat32(buf: Buffer): NpyArray {
  if (buf.length < 10 || buf.toString("latin1", 0, 6) !== "\x93NUMPY") {
    throw new Error("not an npy file");
  }
  const major = buf.readUInt8(6);
  const headerLen = major >= 2 ? buf.readUInt32LE(8) : buf.readUInt16LE(8);
  const headerEnd = (major >= 2 ? 12 : 10) + headerLen;
  const header = buf.toString("latin1", major >= 2 ? 12 : 10, headerEnd);

  const descr = /'descr':\s*'([^']+)'/.exec(header)?.[1];
  if (descr !== "<f4") throw new Error(`unsupported npy dtype ${descr}`);
  if (/'fortran_order':\s*True/.test(header)) {
    throw new Error("unsupported npy layout: fortran order");
  }
  const shapeText = /'shape':\s*\(([^)]*)\)/.exec(header)?.[1] ?? "";
  const shape = shapeText
    .split(",")
    .map((s) => s.trim())
    .filter((s) => s.length > 0)
    .map(Number);

  const count = shape.reduce((a, b) => a * b, 1);
  const body = Buffer.from(buf.subarray(headerEnd, headerEnd + 4 * count));
  return { shape, data: new Float32Array(body.buffer, body.byteOffset, count) };
}
