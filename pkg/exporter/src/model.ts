/**
 * Model contract for the exporter: a sequential stack of named layers,
 * each mapping a 4-D activation to a 4-D activation. Models declare
 * the layout of their activations ('nhwc' or 'nchw', default 'nchw');
 * the exporter converts to NHWC on capture.
 *
 * Layer selection: an explicit layer name must match exactly one layer;
 * 'auto' picks the penultimate layer (the deepest activation before the
 * output head, i.e. the last layer whose output feeds exactly one
 * further layer in a sequential stack). Models that do not expose a
 * sequential `layers` array refuse 'auto' and require an explicit name.
 */

import { pathToFileURL } from 'url'
import { Tensor4D } from './tensor'

export interface Layer {
  name: string
  forward(input: Tensor4D): Tensor4D
}

export interface SequentialModel {
  modelId: string
  /** activation layout produced by the layers; default 'nchw' */
  layout?: 'nhwc' | 'nchw'
  layers: Layer[]
}

export class SelectorError extends Error {}
export class ModelError extends Error {}

export function validateModel(model: unknown): SequentialModel {
  const m = model as SequentialModel
  if (!m || typeof m !== 'object') throw new ModelError('model is not an object')
  if (typeof m.modelId !== 'string' || !m.modelId) {
    throw new ModelError('model must declare a modelId string')
  }
  if (m.layout !== undefined && m.layout !== 'nhwc' && m.layout !== 'nchw') {
    throw new ModelError(`unknown activation layout ${String(m.layout)}`)
  }
  return m
}

export function resolveLayerIndex(model: SequentialModel, selector: string): number {
  if (!Array.isArray(model.layers) || model.layers.length === 0) {
    if (selector === 'auto') {
      throw new SelectorError(
        "model does not expose a sequential layer stack; 'auto' selection " +
          'is ambiguous here, pass an explicit layer name')
    }
    throw new SelectorError('model exposes no layers to hook')
  }
  for (const [i, layer] of model.layers.entries()) {
    if (!layer || typeof layer.forward !== 'function' || typeof layer.name !== 'string') {
      throw new ModelError(`layer ${i} lacks a name or forward()`)
    }
  }
  if (selector === 'auto') {
    if (model.layers.length < 2) {
      throw new SelectorError('auto selection needs at least two layers (body + output head)')
    }
    return model.layers.length - 2
  }
  const matches = model.layers
    .map((layer, i) => ({ layer, i }))
    .filter(({ layer }) => layer.name === selector)
  if (matches.length === 0) {
    const names = model.layers.map(l => l.name).join(', ')
    throw new SelectorError(`no layer named '${selector}' (layers: ${names})`)
  }
  if (matches.length > 1) {
    throw new SelectorError(`layer name '${selector}' matches ${matches.length} layers`)
  }
  return matches[0].i
}

// keep a genuine dynamic import (the CommonJS transpilation would turn
// `import()` into `require()`, which cannot load file URLs or ESM)
const dynamicImport = new Function('specifier', 'return import(specifier)') as (
  specifier: string,
) => Promise<Record<string, unknown>>

/**
 * Load a model module from a script path. The module's default export
 * (or the module itself) may be the model object or a zero-argument
 * factory returning one.
 */
export async function loadModel(scriptPath: string): Promise<SequentialModel> {
  const mod = await dynamicImport(pathToFileURL(scriptPath).href)
  let candidate = (mod.default ?? mod) as Record<string, unknown> | (() => unknown)
  if (candidate && (candidate as Record<string, unknown>).default) {
    candidate = (candidate as Record<string, unknown>).default as typeof candidate
  }
  if (typeof candidate === 'function') candidate = candidate() as typeof candidate
  return validateModel(await candidate)
}
