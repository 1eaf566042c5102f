/**
 * Exporter CLI.
 *
 *   export         --ckpt FILE|DIR --manifest FILE --out DIR
 *   make-manifest  --depth D --width W [--in-channels C] --out FILE
 *   make-checkpoint --depth D --width W [--seed S] --out DIR
 */

import * as fs from 'node:fs';
import { exportCheckpoint } from './export.js';
import { ExportManifest, buildManifest } from './topology.js';

function parseFlags(argv: string[]): Map<string, string> {
  const flags = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    if (!argv[i].startsWith('--') || i + 1 >= argv.length) {
      throw new Error(`bad argument: ${argv[i]}`);
    }
    flags.set(argv[i].slice(2), argv[i + 1]);
  }
  return flags;
}

function need(flags: Map<string, string>, name: string): string {
  const v = flags.get(name);
  if (v === undefined) {
    throw new Error(`missing required flag --${name}`);
  }
  return v;
}

async function main(): Promise<number> {
  const [command, ...rest] = process.argv.slice(2);
  try {
    const flags = parseFlags(rest);
    if (command === 'export') {
      const manifest: ExportManifest = JSON.parse(
        fs.readFileSync(need(flags, 'manifest'), 'utf-8'));
      exportCheckpoint(need(flags, 'ckpt'), manifest, need(flags, 'out'));
      console.log(`exported model to ${flags.get('out')}`);
    } else if (command === 'make-manifest') {
      const manifest = buildManifest(
        parseInt(need(flags, 'depth'), 10),
        parseInt(need(flags, 'width'), 10),
        parseInt(flags.get('in-channels') ?? '3', 10));
      fs.writeFileSync(need(flags, 'out'),
                       JSON.stringify(manifest, null, 1));
      console.log(`wrote manifest with ${manifest.entries.length} entries`);
    } else if (command === 'make-checkpoint') {
      const { buildUnet, randomizeWeights } = await import('./unet.js');
      const { saveCheckpoint } = await import('./checkpoint.js');
      const model = buildUnet(parseInt(need(flags, 'depth'), 10),
                              parseInt(need(flags, 'width'), 10));
      randomizeWeights(model, parseInt(flags.get('seed') ?? '1', 10));
      await saveCheckpoint(model, need(flags, 'out'));
      console.log(`wrote checkpoint to ${flags.get('out')}`);
    } else {
      console.error('usage: cli.js export|make-manifest|make-checkpoint ...');
      return 1;
    }
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 2;
  }
  return 0;
}

main().then((code) => { process.exitCode = code; });
