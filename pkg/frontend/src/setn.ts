/**
 * SETN tensor files: magic "SETN", u8 version 1, u8 dtype 0 (f32 LE),
 * u16 reserved, u32 ndim, ndim x u32 dims, row-major payload.
 */

import * as fs from 'node:fs';

export interface SetnTensor {
  dims: number[];
  data: Float32Array;
}

export function readSetn(path: string): SetnTensor {
  const buf = fs.readFileSync(path);
  if (buf.toString('latin1', 0, 4) !== 'SETN') {
    throw new Error(`${path}: bad SETN magic`);
  }
  if (buf.readUInt8(4) !== 1) {
    throw new Error(`${path}: unsupported SETN version`);
  }
  if (buf.readUInt8(5) !== 0) {
    throw new Error(`${path}: unsupported dtype`);
  }
  const ndim = buf.readUInt32LE(8);
  const dims: number[] = [];
  for (let i = 0; i < ndim; i++) {
    dims.push(buf.readUInt32LE(12 + 4 * i));
  }
  const count = dims.reduce((a, b) => a * b, 1);
  const start = 12 + 4 * ndim;
  if (buf.length < start + 4 * count) {
    throw new Error(`${path}: truncated payload`);
  }
  const data = new Float32Array(count);
  for (let i = 0; i < count; i++) {
    data[i] = buf.readFloatLE(start + 4 * i);
  }
  return { dims, data };
}

export function writeSetn(path: string, dims: number[],
                          data: Float32Array): void {
  const ndim = dims.length;
  const buf = Buffer.alloc(12 + 4 * ndim + 4 * data.length);
  buf.write('SETN', 0, 'latin1');
  buf.writeUInt8(1, 4);
  buf.writeUInt8(0, 5);
  buf.writeUInt16LE(0, 6);
  buf.writeUInt32LE(ndim, 8);
  dims.forEach((d, i) => buf.writeUInt32LE(d, 12 + 4 * i));
  data.forEach((v, i) => buf.writeFloatLE(v, 12 + 4 * ndim + 4 * i));
  fs.writeFileSync(path, buf);
}
