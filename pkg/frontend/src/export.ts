/**
 * Convert a checkpoint of the two-head U-Net into the engine's model
 * directory: topology.json plus weights.bin (raw f32 LE arrays, conv
 * kernels as (out, in, kh, kw)).
 */

import * as fs from 'node:fs';
import * as path from 'node:path';
import { CheckpointArray, loadCheckpoint } from './checkpoint.js';
import { ExportManifest, Layout, ManifestEntry, buildTopology,
         requiredWeightNames } from './topology.js';

const MODEL_FORMAT = 'dotseg-model';
const MODEL_VERSION = 1;
const BN_EPS = 1e-5;

export function transformLayout(src: CheckpointArray,
                                layout: Layout): { dims: number[];
                                                   data: Float32Array } {
  if (layout === 'copy') {
    return { dims: [...src.shape], data: src.data };
  }
  const [kh, kw, a, b] = src.shape; // hwio: a=in, b=out; hwoi: a=out, b=in
  const out = new Float32Array(src.data.length);
  const co = layout === 'hwio_to_oihw' ? b : a;
  const ci = layout === 'hwio_to_oihw' ? a : b;
  for (let h = 0; h < kh; h++) {
    for (let w = 0; w < kw; w++) {
      for (let x = 0; x < a; x++) {
        for (let y = 0; y < b; y++) {
          const val = src.data[((h * kw + w) * a + x) * b + y];
          const [o, i] = layout === 'hwio_to_oihw' ? [y, x] : [x, y];
          out[((o * ci + i) * kh + h) * kw + w] = val;
        }
      }
    }
  }
  return { dims: [co, ci, kh, kw], data: out };
}

export function inverseTransformLayout(dims: number[], data: Float32Array,
                                       layout: Layout): Float32Array {
  if (layout === 'copy') {
    return data;
  }
  const [co, ci, kh, kw] = dims;
  const out = new Float32Array(data.length);
  const [a, b] = layout === 'hwio_to_oihw' ? [ci, co] : [co, ci];
  for (let o = 0; o < co; o++) {
    for (let i = 0; i < ci; i++) {
      for (let h = 0; h < kh; h++) {
        for (let w = 0; w < kw; w++) {
          const [x, y] = layout === 'hwio_to_oihw' ? [i, o] : [o, i];
          out[((h * kw + w) * a + x) * b + y] =
            data[((o * ci + i) * kh + h) * kw + w];
        }
      }
    }
  }
  return out;
}

function sameDims(a: number[], b: number[]): boolean {
  return a.length === b.length && a.every((v, i) => v === b[i]);
}

export function validateManifest(manifest: ExportManifest): void {
  const topo = buildTopology(manifest.depth, manifest.width,
                             manifest.in_channels);
  const required = requiredWeightNames(topo);
  const targets = manifest.entries.map((e) => e.target);
  const seen = new Set<string>();
  const duplicates = targets.filter((t) => {
    if (seen.has(t)) return true;
    seen.add(t);
    return false;
  });
  const missing = required.filter((n) => !seen.has(n));
  const extra = targets.filter((t) => !required.includes(t));
  const problems: string[] = [];
  if (missing.length) problems.push(`missing targets: ${missing.join(', ')}`);
  if (duplicates.length) {
    problems.push(`duplicate targets: ${duplicates.join(', ')}`);
  }
  if (extra.length) problems.push(`unknown targets: ${extra.join(', ')}`);
  if (problems.length) {
    throw new Error(`invalid manifest: ${problems.join('; ')}`);
  }
}

export function exportCheckpoint(ckptPath: string, manifest: ExportManifest,
                                 outDir: string): void {
  validateManifest(manifest);
  const arrays = loadCheckpoint(ckptPath);
  const missing = manifest.entries.filter((e) => !arrays.has(e.source))
    .map((e) => e.source);
  if (missing.length) {
    throw new Error(`checkpoint missing ${missing.length} array(s): `
                    + missing.join(', '));
  }
  const converted = new Map<string, { dims: number[]; data: Float32Array }>();
  const badDims: string[] = [];
  for (const entry of manifest.entries) {
    const got = transformLayout(arrays.get(entry.source)!, entry.layout);
    if (!sameDims(got.dims, entry.dims)) {
      badDims.push(`${entry.source} -> ${entry.target}: got `
                   + `[${got.dims}] expected [${entry.dims}]`);
      continue;
    }
    converted.set(entry.target, got);
  }
  if (badDims.length) {
    throw new Error(`dim mismatches: ${badDims.join('; ')}`);
  }
  writeModelDir(manifest, converted, outDir);
}

function writeModelDir(manifest: ExportManifest,
                       converted: Map<string, { dims: number[];
                                                data: Float32Array }>,
                       outDir: string): void {
  const topo = buildTopology(manifest.depth, manifest.width,
                             manifest.in_channels);
  fs.mkdirSync(outDir, { recursive: true });
  const index: Array<{ name: string; offset: number; dims: number[] }> = [];
  const blobs: Buffer[] = [];
  let offset = 0;
  for (const name of requiredWeightNames(topo)) {
    const { dims, data } = converted.get(name)!;
    const buf = Buffer.alloc(4 * data.length);
    for (let i = 0; i < data.length; i++) {
      buf.writeFloatLE(data[i], 4 * i);
    }
    index.push({ name, offset, dims });
    blobs.push(buf);
    offset += buf.length;
  }
  const layerJson = (l: any) => {
    const out: any = { kind: l.kind, name: l.name,
                       in_channels: l.in_channels,
                       out_channels: l.out_channels };
    if (l.skip_source) out.skip_source = l.skip_source;
    return out;
  };
  const topoJson = {
    format: MODEL_FORMAT,
    version: MODEL_VERSION,
    depth: manifest.depth,
    width: manifest.width,
    in_channels: manifest.in_channels,
    bn_eps: BN_EPS,
    trunk: topo.trunk.map(layerJson),
    seg_head: topo.seg_head.map(layerJson),
    cc_head: topo.cc_head.map(layerJson),
    weight_index: index,
  };
  fs.writeFileSync(path.join(outDir, 'topology.json'),
                   JSON.stringify(topoJson, null, 1));
  fs.writeFileSync(path.join(outDir, 'weights.bin'), Buffer.concat(blobs));
}
