/**
 * Checkpoint files: the standard layers-model layout, one model.json with
 * a weights manifest plus a single weights.bin of concatenated f32 arrays.
 */

import * as fs from 'node:fs';
import * as path from 'node:path';
import * as tf from '@tensorflow/tfjs';

export interface CheckpointArray {
  name: string;
  shape: number[];
  data: Float32Array;
}

export async function saveCheckpoint(model: tf.LayersModel,
                                     dir: string): Promise<void> {
  fs.mkdirSync(dir, { recursive: true });
  await model.save(tf.io.withSaveHandler(async (artifacts) => {
    const weightData = artifacts.weightData as ArrayBuffer;
    const modelJson = {
      format: 'layers-model',
      generatedBy: 'dotseg-export',
      modelTopology: artifacts.modelTopology,
      weightsManifest: [{
        paths: ['weights.bin'],
        weights: artifacts.weightSpecs,
      }],
    };
    fs.writeFileSync(path.join(dir, 'model.json'),
                     JSON.stringify(modelJson));
    fs.writeFileSync(path.join(dir, 'weights.bin'),
                     Buffer.from(weightData));
    return { modelArtifactsInfo: { dateSaved: new Date(),
                                   modelTopologyType: 'JSON' } };
  }));
}

export function loadCheckpoint(ckptPath: string): Map<string, CheckpointArray> {
  const dir = ckptPath.endsWith('.json') ? path.dirname(ckptPath) : ckptPath;
  const jsonPath = ckptPath.endsWith('.json') ? ckptPath
                                              : path.join(dir, 'model.json');
  const modelJson = JSON.parse(fs.readFileSync(jsonPath, 'utf-8'));
  const arrays = new Map<string, CheckpointArray>();
  for (const group of modelJson.weightsManifest) {
    const buffers = group.paths.map((p: string) =>
      fs.readFileSync(path.join(dir, p)));
    const blob = Buffer.concat(buffers);
    let offset = 0;
    for (const spec of group.weights) {
      if (spec.dtype !== 'float32') {
        throw new Error(`${spec.name}: unsupported dtype ${spec.dtype}`);
      }
      const count = spec.shape.reduce((a: number, b: number) => a * b, 1);
      const data = new Float32Array(count);
      for (let i = 0; i < count; i++) {
        data[i] = blob.readFloatLE(offset + 4 * i);
      }
      offset += 4 * count;
      arrays.set(spec.name, { name: spec.name, shape: spec.shape, data });
    }
  }
  return arrays;
}
