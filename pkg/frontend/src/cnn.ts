/**
 * A small convolutional classifier, trained from scratch in doubles:
 * conv 3x3 (valid) -> relu -> dense -> softmax, per-sample SGD. Small
 * enough to train on digits-scale data in seconds while staying fully
 * deterministic for a fixed seed.
 */
import { readFileSync, writeFileSync } from 'node:fs';

import { softmaxF32 } from './linear.js';
import { Rng } from './rng.js';
import type { Shape } from './tensor.js';

export interface CnnModel {
  kind: 'cnn';
  classes: number;
  shape: Shape; // [1, h, w]
  filters: number;
  ksize: number;
  convW: Float64Array; // filters * ksize * ksize
  convB: Float64Array;
  denseW: Float64Array; // classes * filters * oh * ow
  denseB: Float64Array;
}

export interface TrainOptions {
  classes: number;
  shape: Shape;
  filters?: number;
  ksize?: number;
  epochs?: number;
  learningRate?: number;
  seed?: number;
}

function outDims(model: Pick<CnnModel, 'shape' | 'ksize'>): [number, number] {
  return [model.shape[1] - model.ksize + 1, model.shape[2] - model.ksize + 1];
}

function forward(model: CnnModel, values: ArrayLike<number>) {
  const [oh, ow] = outDims(model);
  const w = model.shape[2];
  const hidden = new Float64Array(model.filters * oh * ow);
  for (let f = 0; f < model.filters; f++) {
    const wBase = f * model.ksize * model.ksize;
    for (let y = 0; y < oh; y++) {
      for (let x = 0; x < ow; x++) {
        let s = model.convB[f];
        for (let dy = 0; dy < model.ksize; dy++) {
          for (let dx = 0; dx < model.ksize; dx++) {
            s += model.convW[wBase + dy * model.ksize + dx] * values[(y + dy) * w + (x + dx)];
          }
        }
        hidden[(f * oh + y) * ow + x] = s > 0 ? s : 0;
      }
    }
  }
  const logits = new Float64Array(model.classes);
  for (let c = 0; c < model.classes; c++) {
    let s = model.denseB[c];
    const base = c * hidden.length;
    for (let j = 0; j < hidden.length; j++) {
      s += model.denseW[base + j] * hidden[j];
    }
    logits[c] = s;
  }
  return { hidden, logits };
}

export function cnnPredict(model: CnnModel, values: Float32Array): number[] {
  return softmaxF32(forward(model, values).logits);
}

export function cnnPredictClass(model: CnnModel, values: Float32Array): number {
  const probs = cnnPredict(model, values);
  let best = 0;
  for (let c = 1; c < probs.length; c++) {
    if (probs[c] > probs[best]) best = c;
  }
  return best;
}

export function trainCnn(
  images: Float32Array[],
  labels: number[],
  options: TrainOptions,
): CnnModel {
  const filters = options.filters ?? 8;
  const ksize = options.ksize ?? 3;
  const epochs = options.epochs ?? 20;
  const lr = options.learningRate ?? 0.05;
  const rng = new Rng(options.seed ?? 0);
  const [, h, w] = options.shape;
  if (options.shape[0] !== 1) throw new Error('cnn expects single-channel input');
  const oh = h - ksize + 1;
  const ow = w - ksize + 1;
  const hiddenSize = filters * oh * ow;

  const model: CnnModel = {
    kind: 'cnn',
    classes: options.classes,
    shape: options.shape,
    filters,
    ksize,
    convW: new Float64Array(filters * ksize * ksize),
    convB: new Float64Array(filters),
    denseW: new Float64Array(options.classes * hiddenSize),
    denseB: new Float64Array(options.classes),
  };
  for (let i = 0; i < model.convW.length; i++) model.convW[i] = rng.normalish(0.3);
  for (let i = 0; i < model.denseW.length; i++) model.denseW[i] = rng.normalish(0.05);

  const order = images.map((_, i) => i);
  for (let epoch = 0; epoch < epochs; epoch++) {
    rng.shuffle(order);
    for (const idx of order) {
      const values = images[idx];
      const label = labels[idx];
      const { hidden, logits } = forward(model, values);

      // softmax cross-entropy gradient on the logits
      let m = logits[0];
      for (let c = 1; c < logits.length; c++) if (logits[c] > m) m = logits[c];
      let total = 0;
      const p = new Float64Array(model.classes);
      for (let c = 0; c < model.classes; c++) {
        p[c] = Math.exp(logits[c] - m);
        total += p[c];
      }
      for (let c = 0; c < model.classes; c++) p[c] /= total;
      p[label] -= 1;

      const dHidden = new Float64Array(hiddenSize);
      for (let c = 0; c < model.classes; c++) {
        const g = p[c];
        const base = c * hiddenSize;
        for (let j = 0; j < hiddenSize; j++) {
          dHidden[j] += model.denseW[base + j] * g;
          model.denseW[base + j] -= lr * g * hidden[j];
        }
        model.denseB[c] -= lr * g;
      }
      for (let f = 0; f < filters; f++) {
        const wBase = f * ksize * ksize;
        let dBias = 0;
        for (let y = 0; y < oh; y++) {
          for (let x = 0; x < ow; x++) {
            const j = (f * oh + y) * ow + x;
            if (hidden[j] <= 0) continue; // relu gate
            const g = dHidden[j];
            dBias += g;
            for (let dy = 0; dy < ksize; dy++) {
              for (let dx = 0; dx < ksize; dx++) {
                model.convW[wBase + dy * ksize + dx] -= lr * g * values[(y + dy) * w + (x + dx)];
              }
            }
          }
        }
        model.convB[f] -= lr * dBias;
      }
    }
  }
  return model;
}

interface CnnJson {
  format: string;
  classes: number;
  shape: Shape;
  filters: number;
  ksize: number;
  convW: number[];
  convB: number[];
  denseW: number[];
  denseB: number[];
}

export function saveCnnModel(path: string, model: CnnModel): void {
  const doc: CnnJson = {
    format: 'pixle-cnn-v1',
    classes: model.classes,
    shape: model.shape,
    filters: model.filters,
    ksize: model.ksize,
    convW: Array.from(model.convW),
    convB: Array.from(model.convB),
    denseW: Array.from(model.denseW),
    denseB: Array.from(model.denseB),
  };
  writeFileSync(path, JSON.stringify(doc));
}

export function loadCnnModel(path: string): CnnModel {
  const doc = JSON.parse(readFileSync(path, 'utf8')) as CnnJson;
  if (doc.format !== 'pixle-cnn-v1') {
    throw new Error(`${path}: not a pixle-cnn-v1 model`);
  }
  return {
    kind: 'cnn',
    classes: doc.classes,
    shape: doc.shape,
    filters: doc.filters,
    ksize: doc.ksize,
    convW: Float64Array.from(doc.convW),
    convB: Float64Array.from(doc.convB),
    denseW: Float64Array.from(doc.denseW),
    denseB: Float64Array.from(doc.denseB),
  };
}
