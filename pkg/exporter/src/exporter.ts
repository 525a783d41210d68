/**
 * Feature export: run the model over the patches of a directory (sorted
 * filenames, batched), capture the selected layer's activation, convert
 * to NHWC float32, and write the feature file plus its metadata sidecar.
 */

import { createHash } from 'crypto'
import { promises as fs } from 'fs'
import * as path from 'path'
import { PNG } from 'pngjs'
import { resolveLayerIndex, SequentialModel } from './model'
import { encodeNpy } from './npy'
import { assert4d, concatBatches, nchwToNhwc, ShapeError, Tensor4D, tensor4d } from './tensor'

export interface ExportOptions {
  layer?: string // layer name or 'auto' (default)
  batchSize?: number
  datasetId?: string
}

export interface ExportResult {
  count: number
  shape: [number, number, number, number]
  layerTag: string
  outPath: string
}

export interface PatchSet {
  /** NHWC uint8 RGB pixels, one entry per patch */
  patches: { name: string; width: number; height: number; rgb: Uint8Array }[]
  manifestSha256: string
}

export async function loadPatchDir(dir: string): Promise<PatchSet> {
  const names = (await fs.readdir(dir)).filter(n => n.toLowerCase().endsWith('.png')).sort()
  if (names.length === 0) throw new ShapeError(`no PNG patches found in ${dir}`)
  const patches: PatchSet['patches'] = []
  const manifest = createHash('sha256')
  for (const name of names) {
    const raw = await fs.readFile(path.join(dir, name))
    manifest.update(name)
    manifest.update(raw)
    const png = PNG.sync.read(raw)
    const rgb = new Uint8Array(png.width * png.height * 3)
    for (let i = 0; i < png.width * png.height; i++) {
      rgb[i * 3] = png.data[i * 4]
      rgb[i * 3 + 1] = png.data[i * 4 + 1]
      rgb[i * 3 + 2] = png.data[i * 4 + 2]
    }
    patches.push({ name, width: png.width, height: png.height, rgb })
  }
  const { width, height } = patches[0]
  for (const p of patches) {
    if (p.width !== width || p.height !== height) {
      throw new ShapeError(`patch ${p.name} is ${p.width}x${p.height}, expected ${width}x${height}`)
    }
  }
  return { patches, manifestSha256: manifest.digest('hex') }
}

/** Stack patches into an NHWC or NCHW input batch scaled to [0, 1]. */
export function batchInput(
  patches: PatchSet['patches'],
  layout: 'nhwc' | 'nchw',
): Tensor4D {
  const n = patches.length
  const { width, height } = patches[0]
  const shape: [number, number, number, number] =
    layout === 'nhwc' ? [n, height, width, 3] : [n, 3, height, width]
  const out = tensor4d(shape)
  for (let i = 0; i < n; i++) {
    const rgb = patches[i].rgb
    for (let y = 0; y < height; y++) {
      for (let x = 0; x < width; x++) {
        for (let c = 0; c < 3; c++) {
          const value = rgb[(y * width + x) * 3 + c] / 255
          if (layout === 'nhwc') {
            out.data[((i * height + y) * width + x) * 3 + c] = value
          } else {
            out.data[((i * 3 + c) * height + y) * width + x] = value
          }
        }
      }
    }
  }
  return out
}

export function captureActivations(
  model: SequentialModel,
  input: Tensor4D,
  layerIndex: number,
): Tensor4D {
  let current = assert4d(input)
  for (let i = 0; i <= layerIndex; i++) {
    current = assert4d(model.layers[i].forward(current))
  }
  const layout = model.layout ?? 'nchw'
  return layout === 'nchw' ? nchwToNhwc(current) : current
}

export async function exportFeatures(
  model: SequentialModel,
  lrDir: string,
  outPath: string,
  options: ExportOptions = {},
): Promise<ExportResult> {
  const selector = options.layer ?? 'auto'
  const batchSize = options.batchSize ?? 16
  if (batchSize < 1) throw new ShapeError('batch size must be positive')
  const layerIndex = resolveLayerIndex(model, selector)
  const layerTag = model.layers[layerIndex].name
  const layout = model.layout ?? 'nchw'

  const { patches, manifestSha256 } = await loadPatchDir(lrDir)
  const parts: Tensor4D[] = []
  for (let start = 0; start < patches.length; start += batchSize) {
    const slice = patches.slice(start, start + batchSize)
    parts.push(captureActivations(model, batchInput(slice, layout), layerIndex))
  }
  const features = concatBatches(parts)
  for (const value of features.data) {
    if (!Number.isFinite(value)) {
      throw new ShapeError('model produced non-finite activations')
    }
  }

  await fs.mkdir(path.dirname(path.resolve(outPath)), { recursive: true })
  await fs.writeFile(outPath, encodeNpy(features))
  const sidecar = {
    model_id: model.modelId,
    dataset_id: options.datasetId ?? path.basename(lrDir),
    layer_tag: layerTag,
    patch_manifest_sha256: manifestSha256,
  }
  await fs.writeFile(`${outPath}.meta.json`, JSON.stringify(sidecar, null, 2) + '\n')
  return { count: features.shape[0], shape: features.shape, layerTag, outPath }
}
