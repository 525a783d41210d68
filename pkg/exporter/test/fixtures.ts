/**
 * Test fixtures: a deterministic toy convolutional model (seeded weight
 * generation, NCHW activations) and helpers for synthesizing patch
 * directories.
 */

import { promises as fs } from 'fs'
import * as path from 'path'
import { PNG } from 'pngjs'
import { Layer, SequentialModel } from '../src/model'
import { Tensor4D, tensor4d } from '../src/tensor'

/** mulberry32: tiny deterministic PRNG for fixture weights and pixels */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0
  return () => {
    a = (a + 0x6d2b79f5) >>> 0
    let t = a
    t = Math.imul(t ^ (t >>> 15), t | 1)
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61)
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296
  }
}

/** 3x3 stride-1 conv on NCHW input with zero padding, optional relu. */
export function convLayer(
  name: string,
  cIn: number,
  cOut: number,
  seed: number,
  relu: boolean,
): Layer {
  const rand = mulberry32(seed)
  const bound = Math.sqrt(3 / (9 * cIn))
  const weights = new Float32Array(cOut * cIn * 9)
  for (let i = 0; i < weights.length; i++) weights[i] = (rand() * 2 - 1) * bound
  return {
    name,
    forward(input: Tensor4D): Tensor4D {
      const [n, c, h, w] = input.shape
      if (c !== cIn) throw new Error(`${name}: expected ${cIn} channels, got ${c}`)
      const out = tensor4d([n, cOut, h, w])
      for (let b = 0; b < n; b++) {
        for (let oc = 0; oc < cOut; oc++) {
          for (let y = 0; y < h; y++) {
            for (let x = 0; x < w; x++) {
              let acc = 0
              for (let ic = 0; ic < cIn; ic++) {
                for (let ky = -1; ky <= 1; ky++) {
                  for (let kx = -1; kx <= 1; kx++) {
                    const yy = y + ky
                    const xx = x + kx
                    if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue
                    const wv = weights[((oc * cIn + ic) * 3 + ky + 1) * 3 + kx + 1]
                    acc += wv * input.data[((b * c + ic) * h + yy) * w + xx]
                  }
                }
              }
              out.data[((b * cOut + oc) * h + y) * w + x] = relu ? Math.max(acc, 0) : acc
            }
          }
        }
      }
      return out
    },
  }
}

/** Toy backbone: conv(3->8) relu, conv(8->6) relu, conv(6->3) head. */
export function toyModel(seed = 1): SequentialModel {
  return {
    modelId: `toy-conv-seed${seed}`,
    layout: 'nchw',
    layers: [
      convLayer('conv1', 3, 8, seed, true),
      convLayer('conv2', 8, 6, seed + 1, true),
      convLayer('head', 6, 3, seed + 2, false),
    ],
  }
}

export async function writePatchDir(
  dir: string,
  count: number,
  size = 16,
  seed = 5,
  shift = 0,
): Promise<void> {
  await fs.mkdir(dir, { recursive: true })
  const rand = mulberry32(seed)
  for (let i = 0; i < count; i++) {
    const png = new PNG({ width: size, height: size })
    for (let p = 0; p < size * size; p++) {
      for (let c = 0; c < 3; c++) {
        png.data[p * 4 + c] = Math.min(255, Math.max(0, Math.floor(rand() * 256) + shift))
      }
      png.data[p * 4 + 3] = 255
    }
    await fs.writeFile(path.join(dir, `${String(i).padStart(4, '0')}.png`), PNG.sync.write(png))
  }
}
