/**
 * TensorFlow.js builder for the two-head U-Net (channels-last), with layer
 * names matching the export manifest. Batchnorm epsilon is pinned to the
 * engine's 1e-5.
 */

import * as tf from '@tensorflow/tfjs';
import { checkpointLayerName } from './topology.js';

export const BN_EPS = 1e-5;

function convBnRelu(x: tf.SymbolicTensor, filters: number, prefix: string,
                    idx: number): tf.SymbolicTensor {
  let y = tf.layers.conv2d({
    filters, kernelSize: 3, padding: 'same', useBias: true,
    name: checkpointLayerName(`${prefix}.conv${idx}`),
  }).apply(x) as tf.SymbolicTensor;
  y = tf.layers.batchNormalization({
    epsilon: BN_EPS, name: checkpointLayerName(`${prefix}.bn${idx}`),
  }).apply(y) as tf.SymbolicTensor;
  return tf.layers.reLU({
    name: checkpointLayerName(`${prefix}.relu${idx}`),
  }).apply(y) as tf.SymbolicTensor;
}

export function buildUnet(depth: number, width: number, inChannels = 3,
                          size: number | null = null): tf.LayersModel {
  const input = tf.input({ shape: [size, size, inChannels] });
  let x = input;
  const skips: tf.SymbolicTensor[] = [];
  for (let d = 1; d <= depth; d++) {
    const w = width * 2 ** (d - 1);
    x = convBnRelu(x, w, `enc${d}`, 1);
    x = convBnRelu(x, w, `enc${d}`, 2);
    skips.push(x);
    x = tf.layers.maxPooling2d({ poolSize: 2, strides: 2, name: `pool${d}` })
      .apply(x) as tf.SymbolicTensor;
  }
  const bw = width * 2 ** depth;
  x = convBnRelu(x, bw, 'bottleneck', 1);
  x = convBnRelu(x, bw, 'bottleneck', 2);
  for (let d = depth; d >= 1; d--) {
    const w = width * 2 ** (d - 1);
    x = tf.layers.conv2dTranspose({
      filters: w, kernelSize: 2, strides: 2, padding: 'same', useBias: true,
      name: `up${d}`,
    }).apply(x) as tf.SymbolicTensor;
    x = tf.layers.reLU({ name: checkpointLayerName(`up${d}.relu`) })
      .apply(x) as tf.SymbolicTensor;
    x = tf.layers.concatenate({ axis: -1, name: `cat${d}` })
      .apply([x, skips[d - 1]]) as tf.SymbolicTensor;
    x = convBnRelu(x, w, `dec${d}`, 1);
    x = convBnRelu(x, w, `dec${d}`, 2);
  }
  let seg = tf.layers.conv2d({
    filters: 2, kernelSize: 1, useBias: true, name: 'seg_conv',
  }).apply(x) as tf.SymbolicTensor;
  seg = tf.layers.softmax({ axis: -1, name: 'seg_softmax' })
    .apply(seg) as tf.SymbolicTensor;
  let cc = convBnRelu(x, width, 'cc', 1);
  cc = convBnRelu(cc, width, 'cc', 2);
  cc = tf.layers.conv2d({
    filters: 2, kernelSize: 1, useBias: true, name: 'cc_conv3',
  }).apply(cc) as tf.SymbolicTensor;
  cc = tf.layers.softmax({ axis: -1, name: 'cc_softmax' })
    .apply(cc) as tf.SymbolicTensor;
  return tf.model({ inputs: input, outputs: [seg, cc] });
}

/** Replace every weight with seeded uniform noise (moving variance > 0). */
export function randomizeWeights(model: tf.LayersModel, seed = 1): void {
  let counter = seed;
  for (const v of model.weights) {
    counter += 1;
    const shape = v.shape as number[];
    const base = tf.randomUniform(shape, -0.4, 0.4, 'float32', counter);
    if (v.originalName.endsWith('moving_variance')) {
      v.write(tf.add(tf.abs(base), 0.5));
    } else if (v.originalName.endsWith('gamma')) {
      v.write(tf.add(base, 1.0));
    } else {
      v.write(base);
    }
  }
}
