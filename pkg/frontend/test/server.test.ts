import { spawn } from 'node:child_process';
import { mkdtempSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { createInterface } from 'node:readline';

import { describe, expect, it } from 'vitest';

import { linearPredict, loadLinearModel, saveLinearModel } from '../src/linear.js';
import { Session, helloMessage, loadModel } from '../src/server.js';
import { encodePayload } from '../src/tensor.js';

const dir = mkdtempSync(join(tmpdir(), 'bridge-server-'));
const modelPath = join(dir, 'model.pixlw');
saveLinearModel(
  modelPath,
  [1, 2, 2],
  [
    [3, -1, 0.5, 2],
    [-2, 1.5, 1, -0.5],
    [0.25, 0.75, -1.25, 1],
  ],
  [0.1, 0.2, -0.3],
);

const input = Float32Array.from([0.9, 0.2, 0.4, 0.7]);

describe('session', () => {
  it('describes the model in the hello', () => {
    const hello = JSON.parse(helloMessage(loadModel(modelPath), false));
    expect(hello).toEqual({
      type: 'hello',
      version: 1,
      classes: 3,
      shape: [1, 2, 2],
      concurrent: false,
    });
  });

  it('answers a valid query with the model output', () => {
    const model = loadModel(modelPath);
    const session = new Session(model);
    const response = JSON.parse(
      session.handle(JSON.stringify({ type: 'query', id: 1, image: encodePayload(input) })),
    );
    expect(response.type).toBe('probs');
    expect(response.id).toBe(1);
    expect(response.probs).toEqual(linearPredict(loadLinearModel(modelPath), input));
  });

  it('rejects malformed lines but keeps serving', () => {
    const session = new Session(loadModel(modelPath));
    const bad = JSON.parse(session.handle('{{{ not json'));
    expect(bad.type).toBe('error');
    const wrongSize = JSON.parse(
      session.handle(
        JSON.stringify({ type: 'query', id: 1, image: encodePayload(new Float32Array(3)) }),
      ),
    );
    expect(wrongSize.type).toBe('error');
    const ok = JSON.parse(
      session.handle(JSON.stringify({ type: 'query', id: 2, image: encodePayload(input) })),
    );
    expect(ok.type).toBe('probs');
  });

  it('requires strictly increasing ids', () => {
    const session = new Session(loadModel(modelPath));
    const q = (id: number) =>
      JSON.parse(session.handle(JSON.stringify({ type: 'query', id, image: encodePayload(input) })));
    expect(q(5).type).toBe('probs');
    expect(q(5).type).toBe('error');
    expect(q(4).type).toBe('error');
    expect(q(6).type).toBe('probs');
  });

  it('rejects out-of-range values', () => {
    const session = new Session(loadModel(modelPath));
    const outOfRange = Float32Array.from([1.5, 0, 0, 0]);
    const response = JSON.parse(
      session.handle(JSON.stringify({ type: 'query', id: 1, image: encodePayload(outOfRange) })),
    );
    expect(response.type).toBe('error');
  });
});

describe('stdio server process', () => {
  it('handshakes and answers queries end to end', async () => {
    const child = spawn('node', [join(__dirname, '..', 'dist', 'main.js'), 'serve', '--model', modelPath], {
      stdio: ['pipe', 'pipe', 'inherit'],
    });
    const lines = createInterface({ input: child.stdout! });
    const nextLine = () =>
      new Promise<string>((resolve) => lines.once('line', resolve));

    const hello = JSON.parse(await nextLine());
    expect(hello.type).toBe('hello');
    expect(hello.classes).toBe(3);

    child.stdin!.write(
      JSON.stringify({ type: 'query', id: 1, image: encodePayload(input) }) + '\n',
    );
    const first = JSON.parse(await nextLine());
    expect(first.type).toBe('probs');
    expect(first.probs).toEqual(linearPredict(loadLinearModel(modelPath), input));

    // malformed request, then the connection must survive
    child.stdin!.write('garbage\n');
    const err = JSON.parse(await nextLine());
    expect(err.type).toBe('error');

    child.stdin!.write(
      JSON.stringify({ type: 'query', id: 2, image: encodePayload(input) }) + '\n',
    );
    const second = JSON.parse(await nextLine());
    expect(second.type).toBe('probs');
    expect(second.probs).toEqual(first.probs);

    child.stdin!.end();
    await new Promise((resolve) => child.once('exit', resolve));
  }, 15000);
});
