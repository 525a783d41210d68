/**
 * Writer for the narrow NPY v1.0 subset the scoring toolkit accepts:
 * little-endian float32, C order, exactly 4-D shape. The header is the
 * magic bytes, version (1, 0), a 2-byte little-endian header length,
 * and the header dict padded with spaces so the payload starts on a
 * 64-byte boundary, terminated by a newline.
 */

import { Tensor4D } from './tensor'

const MAGIC = Buffer.from([0x93, 0x4e, 0x55, 0x4d, 0x50, 0x59]) // \x93NUMPY
const ALIGN = 64

export function npyHeader(shape: number[]): Buffer {
  const dictStr = `{'descr': '<f4', 'fortran_order': False, 'shape': (${shape.join(', ')}), }`
  const base = MAGIC.length + 2 + 2
  const total = base + dictStr.length + 1
  const padded = Math.ceil(total / ALIGN) * ALIGN
  const header = dictStr + ' '.repeat(padded - total) + '\n'
  if (header.length > 0xffff) throw new Error('header too long for NPY v1.0')
  const out = Buffer.alloc(base + header.length)
  MAGIC.copy(out, 0)
  out[6] = 1 // version major
  out[7] = 0 // version minor
  out.writeUInt16LE(header.length, 8)
  out.write(header, 10, 'latin1')
  return out
}

export function encodeNpy(t: Tensor4D): Buffer {
  const header = npyHeader(t.shape)
  // Float32Array is IEEE-754 in platform byte order; all supported node
  // platforms are little-endian, which the format requires
  const payload = Buffer.from(t.data.buffer, t.data.byteOffset, t.data.byteLength)
  return Buffer.concat([header, payload])
}
