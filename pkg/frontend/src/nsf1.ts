// NSF1 field decoding: little-endian header (magic, nx, ny, channels, dtype
// tag) followed by row-major channel planes; dtype 0 = f32, 1 = f64.

export interface DecodedField {
  nx: number;
  ny: number;
  channels: Float64Array[];
}

export function decodeBase64(b64: string): Uint8Array {
  const binary = atob(b64);
  const bytes = new Uint8Array(binary.length);
  for (let i = 0; i < binary.length; i++) bytes[i] = binary.charCodeAt(i);
  return bytes;
}

export function decodeNsf1(bytes: Uint8Array): DecodedField {
  if (bytes.length < 17) throw new Error("nsf1: truncated header");
  const magic = String.fromCharCode(bytes[0], bytes[1], bytes[2], bytes[3]);
  if (magic !== "NSF1") throw new Error(`nsf1: bad magic ${magic}`);
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  const nx = view.getUint32(4, true);
  const ny = view.getUint32(8, true);
  const nChannels = view.getUint32(12, true);
  const dtype = view.getUint8(16);
  const itemSize = dtype === 0 ? 4 : 8;
  const expected = 17 + nChannels * ny * nx * itemSize;
  if (bytes.length !== expected) {
    throw new Error(`nsf1: payload is ${bytes.length} bytes, expected ${expected}`);
  }
  const channels: Float64Array[] = [];
  let offset = 17;
  for (let c = 0; c < nChannels; c++) {
    const plane = new Float64Array(ny * nx);
    for (let k = 0; k < ny * nx; k++) {
      plane[k] = dtype === 0 ? view.getFloat32(offset, true) : view.getFloat64(offset, true);
      offset += itemSize;
    }
    channels.push(plane);
  }
  return { nx, ny, channels };
}

export function encodeNsf1(nx: number, ny: number, channels: Float64Array[], f64 = false): Uint8Array {
  const itemSize = f64 ? 8 : 4;
  const out = new Uint8Array(17 + channels.length * ny * nx * itemSize);
  out[0] = 78; out[1] = 83; out[2] = 70; out[3] = 49; // "NSF1"
  const view = new DataView(out.buffer);
  view.setUint32(4, nx, true);
  view.setUint32(8, ny, true);
  view.setUint32(12, channels.length, true);
  view.setUint8(16, f64 ? 1 : 0);
  let offset = 17;
  for (const plane of channels) {
    for (let k = 0; k < ny * nx; k++) {
      if (f64) view.setFloat64(offset, plane[k], true);
      else view.setFloat32(offset, plane[k], true);
      offset += itemSize;
    }
  }
  return out;
}
