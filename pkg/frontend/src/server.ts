/**
 * The oracle server: newline-delimited JSON over stdio or TCP.
 *
 * The server speaks first with a hello describing the wrapped model.
 * Every query is answered with a probability vector; malformed requests
 * get an error message and the connection stays alive. One request id
 * namespace per connection, strictly increasing.
 */
import { closeSync, openSync, readSync } from 'node:fs';
import { createInterface } from 'node:readline';
import { createServer } from 'node:net';

import { type CnnModel, cnnPredict, loadCnnModel } from './cnn.js';
import { type LinearModel, linearPredict, loadLinearModel } from './linear.js';
import { decodePayload } from './tensor.js';

export const PROTOCOL_VERSION = 1;

export type Model = LinearModel | CnnModel;

export function loadModel(path: string): Model {
  const head = Buffer.alloc(6);
  try {
    const fd = openSync(path, 'r');
    readSync(fd, head, 0, 6, 0);
    closeSync(fd);
  } catch {
    // fall through; loaders produce the real error message
  }
  if (head.toString('ascii') === 'PIXLW1') {
    return loadLinearModel(path);
  }
  return loadCnnModel(path);
}

export function predict(model: Model, values: Float32Array): number[] {
  return model.kind === 'linear' ? linearPredict(model, values) : cnnPredict(model, values);
}

export function helloMessage(model: Model, concurrent: boolean): string {
  return JSON.stringify({
    type: 'hello',
    version: PROTOCOL_VERSION,
    classes: model.classes,
    shape: model.shape,
    concurrent,
  });
}

export class Session {
  private lastId = 0;

  constructor(private readonly model: Model) {}

  /** One request line in, one response line out (without newline). */
  handle(line: string): string {
    let request: any;
    try {
      request = JSON.parse(line);
    } catch {
      return JSON.stringify({ type: 'error', id: 0, message: 'malformed JSON line' });
    }
    const id = typeof request?.id === 'number' ? request.id : 0;
    const fail = (message: string) => JSON.stringify({ type: 'error', id, message });
    if (request?.type !== 'query') {
      return fail(`unsupported request type ${String(request?.type)}`);
    }
    if (!Number.isInteger(id) || id <= this.lastId) {
      return fail('request ids must be strictly increasing integers');
    }
    this.lastId = id;
    if (typeof request.image !== 'string') {
      return fail('query needs a base64 image field');
    }
    let values: Float32Array;
    try {
      values = decodePayload(request.image, this.model.shape);
    } catch (err) {
      return fail(err instanceof Error ? err.message : String(err));
    }
    for (const v of values) {
      if (!(v >= 0 && v <= 1)) {
        return fail('image values must lie in [0, 1]');
      }
    }
    return JSON.stringify({ type: 'probs', id, probs: predict(this.model, values) });
  }
}

export function serveStdio(model: Model, concurrent = false): Promise<void> {
  process.stdout.write(helloMessage(model, concurrent) + '\n');
  const session = new Session(model);
  const reader = createInterface({ input: process.stdin, terminal: false });
  return new Promise((resolve) => {
    reader.on('line', (line) => {
      if (!line.trim()) return;
      process.stdout.write(session.handle(line) + '\n');
    });
    reader.on('close', resolve);
  });
}

export function serveTcp(model: Model, port: number, concurrent = false): Promise<void> {
  return new Promise((resolve) => {
    let busy = false;
    const server = createServer((socket) => {
      if (busy) {
        socket.destroy(); // one connection at a time
        return;
      }
      busy = true;
      socket.write(helloMessage(model, concurrent) + '\n');
      const session = new Session(model);
      const reader = createInterface({ input: socket, terminal: false });
      reader.on('line', (line) => {
        if (!line.trim()) return;
        socket.write(session.handle(line) + '\n');
      });
      socket.on('close', () => {
        busy = false;
      });
      socket.on('error', () => {
        busy = false;
      });
    });
    server.listen(port, '127.0.0.1', () => {
      const address = server.address();
      const bound = typeof address === 'object' && address ? address.port : port;
      process.stderr.write(`listening on 127.0.0.1:${bound}\n`);
    });
    server.on('close', resolve);
  });
}
