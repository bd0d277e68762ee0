/**
 * CLI: `serve --model PATH [--transport stdio|tcp:PORT] [--concurrent]`
 * and `train --out DIR [--data MANIFEST] [--seed N] [--epochs N]`.
 */
import { loadModel, serveStdio, serveTcp } from './server.js';
import { trainDemoModel } from './train.js';

function parseFlags(argv: string[]): Map<string, string | boolean> {
  const flags = new Map<string, string | boolean>();
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (!arg.startsWith('--')) {
      throw new Error(`unexpected argument ${arg}`);
    }
    const name = arg.slice(2);
    if (i + 1 < argv.length && !argv[i + 1].startsWith('--')) {
      flags.set(name, argv[i + 1]);
      i += 1;
    } else {
      flags.set(name, true);
    }
  }
  return flags;
}

function requireString(flags: Map<string, string | boolean>, name: string): string {
  const value = flags.get(name);
  if (typeof value !== 'string') {
    throw new Error(`missing required flag --${name}`);
  }
  return value;
}

function optionalInt(flags: Map<string, string | boolean>, name: string): number | undefined {
  const value = flags.get(name);
  if (value === undefined) return undefined;
  const parsed = Number.parseInt(String(value), 10);
  if (!Number.isFinite(parsed)) throw new Error(`--${name} must be an integer`);
  return parsed;
}

async function main(): Promise<number> {
  const [command, ...rest] = process.argv.slice(2);
  try {
    if (command === 'serve') {
      const flags = parseFlags(rest);
      const model = loadModel(requireString(flags, 'model'));
      const transport = String(flags.get('transport') ?? 'stdio');
      const concurrent = flags.get('concurrent') === true;
      if (transport === 'stdio') {
        await serveStdio(model, concurrent);
      } else if (transport.startsWith('tcp:')) {
        await serveTcp(model, Number.parseInt(transport.slice(4), 10), concurrent);
      } else {
        throw new Error(`unknown transport ${transport}; use stdio or tcp:PORT`);
      }
      return 0;
    }
    if (command === 'train') {
      const flags = parseFlags(rest);
      const result = trainDemoModel({
        outDir: requireString(flags, 'out'),
        dataManifest: typeof flags.get('data') === 'string' ? String(flags.get('data')) : undefined,
        seed: optionalInt(flags, 'seed'),
        epochs: optionalInt(flags, 'epochs'),
        filters: optionalInt(flags, 'filters'),
      });
      process.stdout.write(`model: ${result.modelPath}\n`);
      process.stdout.write(`test manifest: ${result.testManifest}\n`);
      process.stdout.write(`held-out accuracy: ${result.accuracy.toFixed(3)}\n`);
      return 0;
    }
    process.stderr.write('usage: main.js serve|train [flags]\n');
    return 1;
  } catch (err) {
    process.stderr.write(`error: ${err instanceof Error ? err.message : String(err)}\n`);
    return 1;
  }
}

main().then((code) => {
  process.exitCode = code;
});
