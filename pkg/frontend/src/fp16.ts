/** IEEE-754 binary16 -> binary32, exact. */

export function fp16ToF32(h: number): number {
  const sign = (h & 0x8000) >> 15;
  const exp = (h & 0x7c00) >> 10;
  const frac = h & 0x03ff;
  let v: number;
  if (exp === 0) {
    v = frac * 2 ** -24; // subnormal (or zero)
  } else if (exp === 0x1f) {
    v = frac ? Number.NaN : Number.POSITIVE_INFINITY;
  } else {
    v = (1 + frac * 2 ** -10) * 2 ** (exp - 15);
  }
  return sign ? -v : v;
}

export function fp16ArrayToF32(src: Uint16Array): Float32Array {
  const out = new Float32Array(src.length);
  for (let i = 0; i < src.length; i++) out[i] = fp16ToF32(src[i]);
  return out;
}
