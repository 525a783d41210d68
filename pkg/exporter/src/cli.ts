#!/usr/bin/env node
/**
 * export-features --model M --layer auto --lr-dir D --out F.npy
 *
 * Loads the model module, captures the selected layer's activations
 * over the LR patch directory, and writes the feature file + sidecar.
 * Exit codes: 0 success, 2 validation/selector error, 1 unexpected.
 */

import { loadModel, ModelError, SelectorError } from './model'
import { exportFeatures } from './exporter'
import { ShapeError } from './tensor'

interface Args {
  model: string
  layer: string
  lrDir: string
  out: string
  batchSize: number
  datasetId?: string
}

function parseArgs(argv: string[]): Args {
  const args: Partial<Args> = { layer: 'auto', batchSize: 16 }
  for (let i = 0; i < argv.length; i++) {
    const flag = argv[i]
    const next = () => {
      if (i + 1 >= argv.length) throw new Error(`missing value for ${flag}`)
      return argv[++i]
    }
    switch (flag) {
      case '--model': args.model = next(); break
      case '--layer': args.layer = next(); break
      case '--lr-dir': args.lrDir = next(); break
      case '--out': args.out = next(); break
      case '--batch-size': args.batchSize = parseInt(next(), 10); break
      case '--dataset-id': args.datasetId = next(); break
      case '--help':
        console.log(
          'usage: export-features --model M [--layer auto|NAME] ' +
            '--lr-dir D --out F.npy [--batch-size 16] [--dataset-id ID]')
        process.exit(0)
        break
      default:
        throw new Error(`unknown flag ${flag}`)
    }
  }
  for (const key of ['model', 'lrDir', 'out'] as const) {
    if (!args[key]) throw new Error(`--${key === 'lrDir' ? 'lr-dir' : key} is required`)
  }
  return args as Args
}

async function main(): Promise<number> {
  let args: Args
  try {
    args = parseArgs(process.argv.slice(2))
  } catch (err) {
    console.error(`error: ${(err as Error).message}`)
    return 2
  }
  try {
    const model = await loadModel(args.model)
    const result = await exportFeatures(model, args.lrDir, args.out, {
      layer: args.layer,
      batchSize: args.batchSize,
      datasetId: args.datasetId,
    })
    console.log(
      `${result.count} tensors of shape [${result.shape.slice(1).join(', ')}] ` +
        `from layer '${result.layerTag}' -> ${result.outPath}`)
    return 0
  } catch (err) {
    if (err instanceof SelectorError || err instanceof ModelError || err instanceof ShapeError) {
      console.error(`error: ${(err as Error).message}`)
      return 2
    }
    throw err
  }
}

main().then(
  code => process.exit(code),
  err => {
    console.error(err)
    process.exit(1)
  },
)
