/**
 * FTEN binary tensor files and the dataset manifest JSON.
 *
 * Layout (little-endian): magic "FTEN" | version u8 (1) | dtype u8
 * (1 = float32, 2 = uint8) | ndim u8 | dims u32[ndim] | payload.
 * Must stay byte-compatible with the Python reader/writer.
 */

import * as fs from 'node:fs';
import * as path from 'node:path';

const MAGIC = Buffer.from('FTEN', 'ascii');
const VERSION = 1;

export const DTYPE_F32 = 1;
export const DTYPE_U8 = 2;

export class FormatError extends Error {
  constructor(message: string, public readonly offset: number) {
    super(`${message} (offset ${offset})`);
    this.name = 'FormatError';
  }
}

export type Tensor = {
  dims: number[];
  /** Row-major values; uint8 payloads are widened to plain numbers. */
  data: Float32Array;
};

export function writeTensor(
  t: Tensor,
  filePath: string,
  dtype: 'f32' | 'u8' = 'f32',
): void {
  const count = t.dims.reduce((a, b) => a * b, 1);
  if (t.data.length !== count) {
    throw new Error(`payload has ${t.data.length} values, dims need ${count}`);
  }
  const header = Buffer.alloc(4 + 3 + 4 * t.dims.length);
  MAGIC.copy(header, 0);
  header.writeUInt8(VERSION, 4);
  header.writeUInt8(dtype === 'f32' ? DTYPE_F32 : DTYPE_U8, 5);
  header.writeUInt8(t.dims.length, 6);
  t.dims.forEach((d, i) => header.writeUInt32LE(d, 7 + 4 * i));

  let payload: Buffer;
  if (dtype === 'f32') {
    payload = Buffer.from(new Float32Array(t.data).buffer);
  } else {
    const u8 = new Uint8Array(count);
    for (let i = 0; i < count; i++) {
      const v = Math.round(t.data[i]);
      if (v < 0 || v > 255) {
        throw new Error(`value ${t.data[i]} does not fit in a uint8 payload`);
      }
      u8[i] = v;
    }
    payload = Buffer.from(u8);
  }
  fs.mkdirSync(path.dirname(filePath), { recursive: true });
  const tmp = `${filePath}.tmp${process.pid}`;
  fs.writeFileSync(tmp, Buffer.concat([header, payload]));
  fs.renameSync(tmp, filePath);
}

export function readTensor(filePath: string): Tensor {
  const buf = fs.readFileSync(filePath);
  if (buf.length < 7) throw new FormatError('truncated header', buf.length);
  if (!buf.subarray(0, 4).equals(MAGIC)) {
    throw new FormatError('bad magic', 0);
  }
  const version = buf.readUInt8(4);
  if (version !== VERSION) throw new FormatError(`unknown version ${version}`, 4);
  const dtype = buf.readUInt8(5);
  if (dtype !== DTYPE_F32 && dtype !== DTYPE_U8) {
    throw new FormatError(`unknown dtype code ${dtype}`, 5);
  }
  const ndim = buf.readUInt8(6);
  const headerLen = 7 + 4 * ndim;
  if (buf.length < headerLen) throw new FormatError('truncated dims', buf.length);
  const dims: number[] = [];
  for (let i = 0; i < ndim; i++) dims.push(buf.readUInt32LE(7 + 4 * i));
  const count = dims.reduce((a, b) => a * b, 1);
  const itemSize = dtype === DTYPE_F32 ? 4 : 1;
  if (buf.length !== headerLen + count * itemSize) {
    throw new FormatError(
      `payload is ${buf.length - headerLen} bytes, expected ${count * itemSize}`,
      headerLen,
    );
  }
  const data = new Float32Array(count);
  for (let i = 0; i < count; i++) {
    data[i] =
      dtype === DTYPE_F32
        ? buf.readFloatLE(headerLen + 4 * i)
        : buf.readUInt8(headerLen + i);
  }
  return { dims, data };
}

export type ManifestSample = {
  sample_id: number;
  features: string;
  outputs: Record<string, string>; // task id -> relative path
};

export type Manifest = {
  patch: { N: number; M: number };
  tasks: number[];
  samples: ManifestSample[];
};

export function saveManifest(manifest: Manifest, filePath: string): void {
  fs.mkdirSync(path.dirname(filePath), { recursive: true });
  const tmp = `${filePath}.tmp${process.pid}`;
  fs.writeFileSync(tmp, stableJson(manifest) + '\n');
  fs.renameSync(tmp, filePath);
}

export function loadManifest(filePath: string): Manifest {
  const doc = JSON.parse(fs.readFileSync(filePath, 'utf-8'));
  return {
    patch: { N: Number(doc.patch.N), M: Number(doc.patch.M) },
    tasks: doc.tasks.map(Number),
    samples: doc.samples,
  };
}

/** JSON with sorted keys, matching the primary toolkit's serializer. */
function stableJson(value: unknown): string {
  return JSON.stringify(value, (_k, v) => {
    if (v && typeof v === 'object' && !Array.isArray(v)) {
      return Object.fromEntries(
        Object.keys(v)
          .sort()
          .map((k) => [k, (v as Record<string, unknown>)[k]]),
      );
    }
    return v;
  }, 2);
}
