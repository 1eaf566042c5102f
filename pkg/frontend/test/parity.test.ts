/**
 * Cross-framework parity: an exported checkpoint, loaded by the engine
 * through its CLI, must reproduce the source-framework forward outputs
 * within 1e-4 absolute on random inputs.
 */

import { spawnSync } from 'node:child_process';
import * as fs from 'node:fs';
import * as os from 'node:os';
import * as path from 'node:path';
import * as tf from '@tensorflow/tfjs';
import { beforeAll, describe, expect, it } from 'vitest';

import { saveCheckpoint } from '../src/checkpoint.js';
import { exportCheckpoint } from '../src/export.js';
import { writeRgbPng } from '../src/png.js';
import { readSetn } from '../src/setn.js';
import { buildManifest } from '../src/topology.js';
import { buildUnet, randomizeWeights } from '../src/unet.js';

const SIZE = 32;
const N_INPUTS = 5;

function lcg(seed: number): () => number {
  let s = seed >>> 0;
  return () => {
    s = (1664525 * s + 1013904223) >>> 0;
    return s / 2 ** 32;
  };
}

const tmp = fs.mkdtempSync(path.join(os.tmpdir(), 'dotseg-parity-'));
let model: tf.LayersModel;

beforeAll(async () => {
  model = buildUnet(2, 4);
  randomizeWeights(model, 11);
  await saveCheckpoint(model, path.join(tmp, 'ckpt'));
  exportCheckpoint(path.join(tmp, 'ckpt'), buildManifest(2, 4),
                   path.join(tmp, 'model'));
  fs.mkdirSync(path.join(tmp, 'ds', 'images'), { recursive: true });
  const rand = lcg(99);
  for (let k = 0; k < N_INPUTS; k++) {
    const rgb = new Uint8Array(SIZE * SIZE * 3);
    rgb.forEach((_, i) => { rgb[i] = Math.floor(rand() * 256); });
    writeRgbPng(path.join(tmp, 'ds', 'images', `img_${k}.png`),
                SIZE, SIZE, rgb);
    fs.writeFileSync(path.join(tmp, `input_${k}.raw`), Buffer.from(rgb));
  }
  const run = spawnSync('python3', ['-m', 'dotseg.cli', 'infer',
                                    '--data', path.join(tmp, 'ds'),
                                    '--model', path.join(tmp, 'model'),
                                    '--out', path.join(tmp, 'maps')],
                        { encoding: 'utf-8' });
  if (run.status !== 0) {
    throw new Error(`engine infer failed: ${run.stderr}`);
  }
}, 180_000);

describe('export parity', () => {
  it('engine forward matches the source framework within 1e-4', async () => {
    for (let k = 0; k < N_INPUTS; k++) {
      const rgb = fs.readFileSync(path.join(tmp, `input_${k}.raw`));
      const floats = Float32Array.from(rgb, (v) => v / 255);
      const input = tf.tensor4d(floats, [1, SIZE, SIZE, 3]);
      const [segT, ccT] = model.predict(input) as tf.Tensor[];
      const seg = (await segT.data()) as Float32Array;
      const cc = (await ccT.data()) as Float32Array;
      for (const [head, ours] of [['seg', seg], ['cc', cc]] as const) {
        const theirs = readSetn(path.join(tmp, 'maps',
                                          `img_${k}_${head}.setn`));
        expect(theirs.dims).toEqual([1, 2, SIZE, SIZE]);
        let worst = 0;
        for (let i = 0; i < SIZE; i++) {
          for (let j = 0; j < SIZE; j++) {
            for (let c = 0; c < 2; c++) {
              const a = ours[(i * SIZE + j) * 2 + c];        // NHWC
              const b = theirs.data[(c * SIZE + i) * SIZE + j]; // NCHW
              worst = Math.max(worst, Math.abs(a - b));
            }
          }
        }
        expect(worst).toBeLessThan(1e-4);
      }
    }
  }, 120_000);
});
