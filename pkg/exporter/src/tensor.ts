/**
 * Minimal 4-D activation tensor: flat float32 data in C order plus its
 * shape. Models emit either NHWC or NCHW; the exporter normalizes to
 * NHWC before writing.
 */

export interface Tensor4D {
  /** [n, d1, d2, d3] — interpretation depends on the model's layout */
  shape: [number, number, number, number]
  data: Float32Array
}

export class ShapeError extends Error {}

export function tensor4d(shape: [number, number, number, number], data?: Float32Array): Tensor4D {
  const size = shape.reduce((a, b) => a * b, 1)
  if (data && data.length !== size) {
    throw new ShapeError(`data length ${data.length} does not match shape [${shape.join(', ')}]`)
  }
  return { shape, data: data ?? new Float32Array(size) }
}

export function assert4d(t: { shape: number[]; data: Float32Array }): Tensor4D {
  if (!Array.isArray(t.shape) || t.shape.length !== 4) {
    throw new ShapeError(`expected a 4-D activation, got shape [${t.shape.join(', ')}]`)
  }
  const size = t.shape.reduce((a, b) => a * b, 1)
  if (t.data.length !== size) {
    throw new ShapeError(`activation data length ${t.data.length} does not match shape`)
  }
  return { shape: t.shape as [number, number, number, number], data: t.data }
}

/** (N, C, H, W) -> (N, H, W, C) */
export function nchwToNhwc(t: Tensor4D): Tensor4D {
  const [n, c, h, w] = t.shape
  const out = tensor4d([n, h, w, c])
  for (let i = 0; i < n; i++) {
    const inBase = i * c * h * w
    const outBase = i * h * w * c
    for (let ch = 0; ch < c; ch++) {
      for (let y = 0; y < h; y++) {
        for (let x = 0; x < w; x++) {
          out.data[outBase + (y * w + x) * c + ch] = t.data[inBase + (ch * h + y) * w + x]
        }
      }
    }
  }
  return out
}

/** Stack same-shaped batches along the first axis. */
export function concatBatches(parts: Tensor4D[]): Tensor4D {
  if (parts.length === 0) throw new ShapeError('nothing to concatenate')
  const [, d1, d2, d3] = parts[0].shape
  for (const p of parts) {
    if (p.shape[1] !== d1 || p.shape[2] !== d2 || p.shape[3] !== d3) {
      throw new ShapeError('batch activations disagree on tensor shape')
    }
  }
  const total = parts.reduce((acc, p) => acc + p.shape[0], 0)
  const out = tensor4d([total, d1, d2, d3])
  let offset = 0
  for (const p of parts) {
    out.data.set(p.data, offset)
    offset += p.data.length
  }
  return out
}
