/**
 * Linear softmax models in the PIXLW1 binary format.
 *
 * Evaluation follows the engine's canonical operation order so both sides
 * produce bit-identical probability vectors: per class, weight*value
 * products are summed left to right in doubles starting from 0, the bias
 * is added last; softmax is max-stabilized; each probability is rounded
 * to float32.
 */
import { readFileSync, writeFileSync } from 'node:fs';

import type { Shape } from './tensor.js';
import { shapeSize } from './tensor.js';

const MAGIC = Buffer.from('PIXLW1', 'ascii');

export interface LinearModel {
  kind: 'linear';
  classes: number;
  shape: Shape;
  weights: Float64Array[]; // one row per class, widened from float32
  bias: Float64Array;
}

export function softmaxF32(logits: Float64Array): number[] {
  let m = logits[0];
  for (let i = 1; i < logits.length; i++) {
    if (logits[i] > m) m = logits[i];
  }
  const exps = new Float64Array(logits.length);
  for (let i = 0; i < logits.length; i++) {
    exps[i] = Math.exp(logits[i] - m);
  }
  let total = exps[0];
  for (let i = 1; i < exps.length; i++) {
    total += exps[i];
  }
  const probs = new Array<number>(logits.length);
  for (let i = 0; i < logits.length; i++) {
    probs[i] = Math.fround(exps[i] / total);
  }
  return probs;
}

export function linearPredict(model: LinearModel, values: Float32Array): number[] {
  const n = shapeSize(model.shape);
  const logits = new Float64Array(model.classes);
  for (let k = 0; k < model.classes; k++) {
    const row = model.weights[k];
    let s = 0;
    for (let i = 0; i < n; i++) {
      s += row[i] * values[i];
    }
    logits[k] = model.bias[k] + s;
  }
  return softmaxF32(logits);
}

export function loadLinearModel(path: string): LinearModel {
  const raw = readFileSync(path);
  if (raw.length < MAGIC.length + 16 || !raw.subarray(0, MAGIC.length).equals(MAGIC)) {
    throw new Error(`${path}: not a PIXLW1 model file`);
  }
  let offset = MAGIC.length;
  const classes = raw.readUInt32LE(offset);
  const c = raw.readUInt32LE(offset + 4);
  const h = raw.readUInt32LE(offset + 8);
  const w = raw.readUInt32LE(offset + 12);
  offset += 16;
  if (classes < 2) {
    throw new Error(`${path}: invalid model, ${classes} classes`);
  }
  const shape: Shape = [c, h, w];
  const n = shapeSize(shape);
  if (raw.length !== offset + 4 * (classes * n + classes)) {
    throw new Error(`${path}: truncated model file`);
  }
  const weights: Float64Array[] = [];
  for (let k = 0; k < classes; k++) {
    const row = new Float64Array(n);
    for (let i = 0; i < n; i++) {
      row[i] = raw.readFloatLE(offset);
      offset += 4;
    }
    weights.push(row);
  }
  const bias = new Float64Array(classes);
  for (let k = 0; k < classes; k++) {
    bias[k] = raw.readFloatLE(offset);
    offset += 4;
  }
  return { kind: 'linear', classes, shape, weights, bias };
}

export function saveLinearModel(
  path: string,
  shape: Shape,
  weights: number[][],
  bias: number[],
): void {
  const classes = weights.length;
  if (classes < 2) throw new Error('a linear model needs >= 2 classes');
  const n = shapeSize(shape);
  const buf = Buffer.alloc(MAGIC.length + 16 + 4 * (classes * n + classes));
  MAGIC.copy(buf, 0);
  let offset = MAGIC.length;
  buf.writeUInt32LE(classes, offset);
  buf.writeUInt32LE(shape[0], offset + 4);
  buf.writeUInt32LE(shape[1], offset + 8);
  buf.writeUInt32LE(shape[2], offset + 12);
  offset += 16;
  for (const row of weights) {
    if (row.length !== n) throw new Error('weight row length does not match shape');
    for (const value of row) {
      buf.writeFloatLE(value, offset);
      offset += 4;
    }
  }
  for (const value of bias) {
    buf.writeFloatLE(value, offset);
    offset += 4;
  }
  writeFileSync(path, buf);
}
