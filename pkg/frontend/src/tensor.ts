/**
 * Image payload codec: channel-major float32 little-endian, base64 on the
 * wire. Decoding must be bit-exact; every float travels untouched.
 */

export type Shape = [number, number, number]; // channels, height, width

export function shapeSize(shape: Shape): number {
  return shape[0] * shape[1] * shape[2];
}

export function decodePayload(b64: string, shape: Shape): Float32Array {
  const raw = Buffer.from(b64, 'base64');
  const expected = 4 * shapeSize(shape);
  if (raw.length !== expected) {
    throw new Error(`payload holds ${raw.length} bytes, expected ${expected}`);
  }
  const values = new Float32Array(shapeSize(shape));
  for (let i = 0; i < values.length; i++) {
    values[i] = raw.readFloatLE(4 * i);
  }
  return values;
}

export function encodePayload(values: Float32Array): string {
  const raw = Buffer.alloc(4 * values.length);
  for (let i = 0; i < values.length; i++) {
    raw.writeFloatLE(values[i], 4 * i);
  }
  return raw.toString('base64');
}
