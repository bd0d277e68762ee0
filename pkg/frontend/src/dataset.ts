/**
 * PNG + CSV-manifest datasets, matching the engine's on-disk format:
 * manifest header "id,path,label" with paths relative to the manifest,
 * 8-bit grayscale PNGs, byte b decoding to fround(b/255).
 */
import { mkdirSync, readFileSync, writeFileSync } from 'node:fs';
import { dirname, join, relative } from 'node:path';

import { PNG } from 'pngjs';

export interface DatasetItem {
  id: string;
  label: number;
  values: Float32Array; // single channel, row-major
  height: number;
  width: number;
}

export interface Dataset {
  items: DatasetItem[];
  classCount: number;
  height: number;
  width: number;
}

export function readPngGray(path: string): { values: Float32Array; height: number; width: number } {
  const png = PNG.sync.read(readFileSync(path));
  const values = new Float32Array(png.width * png.height);
  for (let i = 0; i < values.length; i++) {
    const r = png.data[4 * i];
    const g = png.data[4 * i + 1];
    const b = png.data[4 * i + 2];
    if (r !== g || g !== b) {
      throw new Error(`${path}: expected a grayscale image`);
    }
    values[i] = Math.fround(r / 255);
  }
  return { values, height: png.height, width: png.width };
}

/** Round half to even, mirroring the engine's quantization. */
export function rint(x: number): number {
  const floor = Math.floor(x);
  const diff = x - floor;
  if (diff > 0.5) return floor + 1;
  if (diff < 0.5) return floor;
  return floor % 2 === 0 ? floor : floor + 1;
}

export function writePngGray(path: string, values: ArrayLike<number>, height: number, width: number): void {
  const png = new PNG({ width, height, colorType: 0, inputColorType: 0, inputHasAlpha: false });
  const bytes = Buffer.alloc(width * height);
  for (let i = 0; i < bytes.length; i++) {
    const b = rint(values[i] * 255);
    bytes[i] = b < 0 ? 0 : b > 255 ? 255 : b;
  }
  png.data = bytes as unknown as Buffer;
  writeFileSync(path, PNG.sync.write(png, { colorType: 0, inputColorType: 0, inputHasAlpha: false }));
}

export function readManifest(manifestPath: string): Dataset {
  const lines = readFileSync(manifestPath, 'utf8')
    .trim()
    .split('\n')
    .map((line) => line.replace(/\r$/, ''));
  if (lines[0] !== 'id,path,label') {
    throw new Error(`${manifestPath}: manifest header must be id,path,label`);
  }
  const items: DatasetItem[] = [];
  let classCount = 2;
  for (const line of lines.slice(1)) {
    if (!line) continue;
    const [id, rel, labelStr] = line.split(',');
    const label = Number.parseInt(labelStr, 10);
    if (!Number.isFinite(label) || label < 0) {
      throw new Error(`${manifestPath}: bad label ${labelStr}`);
    }
    const { values, height, width } = readPngGray(join(dirname(manifestPath), rel));
    items.push({ id, label, values, height, width });
    if (label + 1 > classCount) classCount = label + 1;
  }
  if (items.length === 0) throw new Error(`${manifestPath}: empty manifest`);
  const { height, width } = items[0];
  for (const item of items) {
    if (item.height !== height || item.width !== width) {
      throw new Error('all dataset images must share one shape');
    }
  }
  return { items, classCount, height, width };
}

export function writeDataset(
  manifestPath: string,
  imageDir: string,
  items: Array<Pick<DatasetItem, 'id' | 'label' | 'values' | 'height' | 'width'>>,
): void {
  mkdirSync(imageDir, { recursive: true });
  const rows = ['id,path,label'];
  for (const item of items) {
    const imagePath = join(imageDir, `${item.id}.png`);
    writePngGray(imagePath, item.values, item.height, item.width);
    rows.push(`${item.id},${relative(dirname(manifestPath), imagePath)},${item.label}`);
  }
  writeFileSync(manifestPath, rows.join('\n') + '\n');
}
