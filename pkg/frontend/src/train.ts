/**
 * Demo-model training: fit the small CNN on a PNG+manifest dataset (or a
 * built-in synthetic glyph set), hold out a test split, and emit the
 * model artifact plus a PNG+manifest copy of the held-out split.
 */
import { mkdirSync, writeFileSync, existsSync } from 'node:fs';
import { join } from 'node:path';

import { type CnnModel, cnnPredictClass, saveCnnModel, trainCnn } from './cnn.js';
import { type Dataset, type DatasetItem, readManifest, writeDataset } from './dataset.js';
import { Rng } from './rng.js';

export interface TrainDemoOptions {
  outDir: string;
  dataManifest?: string;
  seed?: number;
  epochs?: number;
  filters?: number;
  testFraction?: number;
  minAccuracy?: number;
}

export interface TrainDemoResult {
  modelPath: string;
  testManifest: string;
  accuracy: number;
  correctPerClass: number[];
  classes: number;
}

const GLYPH_CLASSES = 4;

/** Synthetic 8x8 glyphs: horizontal bar, vertical bar, diagonal, ring. */
export function syntheticGlyphs(count: number, seed: number): Dataset {
  const rng = new Rng(seed);
  const items: DatasetItem[] = [];
  for (let i = 0; i < count; i++) {
    const label = i % GLYPH_CLASSES;
    const bytes = new Array<number>(64).fill(0);
    const at = (r: number, c: number, v: number) => {
      bytes[r * 8 + c] = v;
    };
    const row = 2 + rng.int(4);
    const col = 2 + rng.int(4);
    if (label === 0) {
      for (let c = 1; c < 7; c++) at(row, c, 200 + rng.int(56));
    } else if (label === 1) {
      for (let r = 1; r < 7; r++) at(r, col, 200 + rng.int(56));
    } else if (label === 2) {
      for (let d = 0; d < 8; d++) at(d, d, 200 + rng.int(56));
    } else {
      for (let d = 1; d < 7; d++) {
        at(1, d, 220);
        at(6, d, 220);
        at(d, 1, 220);
        at(d, 6, 220);
      }
    }
    for (let j = 0; j < 64; j++) {
      bytes[j] = Math.min(255, bytes[j] + rng.int(40)); // background noise
    }
    const values = new Float32Array(64);
    for (let j = 0; j < 64; j++) values[j] = Math.fround(bytes[j] / 255);
    items.push({ id: `g${i.toString().padStart(4, '0')}`, label, values, height: 8, width: 8 });
  }
  return { items, classCount: GLYPH_CLASSES, height: 8, width: 8 };
}

function splitPerClass(dataset: Dataset, fraction: number, rng: Rng) {
  const train: DatasetItem[] = [];
  const test: DatasetItem[] = [];
  for (let c = 0; c < dataset.classCount; c++) {
    const members = dataset.items.filter((it) => it.label === c);
    const order = members.map((_, i) => i);
    rng.shuffle(order);
    const cut = Math.max(1, Math.round(members.length * fraction));
    order.forEach((idx, pos) => {
      (pos < cut ? test : train).push(members[idx]);
    });
  }
  const byId = (a: DatasetItem, b: DatasetItem) => (a.id < b.id ? -1 : 1);
  train.sort(byId);
  test.sort(byId);
  return { train, test };
}

export function trainDemoModel(options: TrainDemoOptions): TrainDemoResult {
  const seed = options.seed ?? 0;
  const minAccuracy = options.minAccuracy ?? 0.8;
  const dataset = options.dataManifest
    ? readManifest(options.dataManifest)
    : syntheticGlyphs(480, seed);

  // Fail before training if the destination cannot be created.
  mkdirSync(options.outDir, { recursive: true });
  if (!existsSync(options.outDir)) {
    throw new Error(`cannot create output directory ${options.outDir}`);
  }

  const { train, test } = splitPerClass(dataset, options.testFraction ?? 0.25, new Rng(seed ^ 0x5eed));
  const model: CnnModel = trainCnn(
    train.map((it) => it.values),
    train.map((it) => it.label),
    {
      classes: dataset.classCount,
      shape: [1, dataset.height, dataset.width],
      filters: options.filters ?? 8,
      epochs: options.epochs ?? 20,
      seed,
    },
  );

  const correctPerClass = new Array<number>(dataset.classCount).fill(0);
  let hits = 0;
  for (const item of test) {
    if (cnnPredictClass(model, item.values) === item.label) {
      hits += 1;
      correctPerClass[item.label] += 1;
    }
  }
  const accuracy = hits / test.length;
  if (accuracy < minAccuracy) {
    throw new Error(`held-out accuracy ${accuracy.toFixed(3)} below ${minAccuracy}`);
  }

  const modelPath = join(options.outDir, 'demo_cnn.json');
  saveCnnModel(modelPath, model);
  const testManifest = join(options.outDir, 'test_manifest.csv');
  writeDataset(testManifest, join(options.outDir, 'test'), test);
  writeFileSync(
    join(options.outDir, 'training_summary.json'),
    JSON.stringify(
      {
        seed,
        classes: dataset.classCount,
        trainItems: train.length,
        testItems: test.length,
        accuracy,
        correctPerClass,
      },
      null,
      2,
    ) + '\n',
  );
  return { modelPath, testManifest, accuracy, correctPerClass, classes: dataset.classCount };
}
