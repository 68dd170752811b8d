/**
 * Dequantization and codebook expansion, mirroring the reference decoder bit
 * for bit: grid arithmetic runs in float32 (Math.fround after each op), while
 * normalizations run in float64 and round once at the end, exactly like the
 * numpy implementation.
 */

import { Container, Header, TruncatedError } from "./container.js";
import { fp16ArrayToF32 } from "./fp16.js";

export interface DecodedScene {
  n: number;
  shCoeffs: number;
  positions: Float32Array;   // n*3
  quaternions: Float32Array; // n*4, unit, scalar-first
  scaleDirs: Float32Array;   // n*3, unit norm
  eta: Float32Array;         // n
  alphas: Float32Array;      // n, in [0,1]
  sh: Float32Array;          // n*shCoeffs*3
  covariances: Float32Array; // n*6 world-space (xx,xy,xz,yy,yz,zz)
  header: Header;
}

const f = Math.fround;

export function dequantize(codes: Uint8Array, min: number, max: number): Float32Array {
  const lo = f(min);
  const step = f(f(max - lo) / 255);
  const out = new Float32Array(codes.length);
  for (let i = 0; i < codes.length; i++) out[i] = f(lo + f(codes[i] * step));
  return out;
}

export function unpackBits(data: Uint8Array, bits: number, count: number): Uint32Array {
  const out = new Uint32Array(count);
  if (bits === 0) return out;
  for (let i = 0; i < count; i++) {
    let v = 0;
    const base = i * bits;
    for (let b = 0; b < bits; b++) {
      const pos = base + b;
      if (data[pos >> 3] & (1 << (pos & 7))) v |= 1 << b;
    }
    out[i] = v >>> 0;
  }
  return out;
}

function normalizeRows(v: Float32Array, width: number, absFirst: boolean): Float32Array {
  const rows = v.length / width;
  const out = new Float32Array(v.length);
  for (let r = 0; r < rows; r++) {
    let norm2 = 0;
    for (let c = 0; c < width; c++) {
      let x: number = v[r * width + c]; // float64 math from here, like numpy
      if (absFirst) x = Math.max(Math.abs(x), 1e-12);
      out[r * width + c] = x; // staging; rounded again below
      norm2 += x * x;
    }
    const norm = Math.sqrt(norm2);
    for (let c = 0; c < width; c++) {
      const x = absFirst ? Math.max(Math.abs(v[r * width + c]), 1e-12) : v[r * width + c];
      out[r * width + c] = f(x / norm);
    }
  }
  return out;
}

function quatScaleToCov6(q: Float64Array, s: Float64Array): Float64Array {
  const [w, x, y, z] = q;
  const r = [
    1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
    2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
    2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y),
  ];
  // M = R * diag(s); Sigma = M M^T
  const m = [
    r[0] * s[0], r[1] * s[1], r[2] * s[2],
    r[3] * s[0], r[4] * s[1], r[5] * s[2],
    r[6] * s[0], r[7] * s[1], r[8] * s[2],
  ];
  const dot = (a: number, b: number) =>
    m[a * 3] * m[b * 3] + m[a * 3 + 1] * m[b * 3 + 1] + m[a * 3 + 2] * m[b * 3 + 2];
  return new Float64Array([dot(0, 0), dot(0, 1), dot(0, 2), dot(1, 1), dot(1, 2), dot(2, 2)]);
}

export function decodeScene(c: Container): DecodedScene {
  const h = c.header;
  const n = h.n;
  const need = (name: keyof typeof c.sections, bytes: number) => {
    if (c.sections[name].length < bytes) {
      throw new TruncatedError(`section '${name}' smaller than header implies`);
    }
  };
  need("positions", n * 6);
  need("opacity", n);
  need("eta", n);
  need("color_codebook", h.kTotalColor * h.shCoeffs * 3);
  need("shape_codebook", h.kTotalShape * 7);

  const positions = fp16ArrayToF32(
    new Uint16Array(c.sections.positions.buffer, c.sections.positions.byteOffset, n * 3));
  const alphasRaw = dequantize(c.sections.opacity, h.opacity.min, h.opacity.max);
  const alphas = new Float32Array(n);
  for (let i = 0; i < n; i++) alphas[i] = f(Math.min(Math.max(alphasRaw[i], 0), 1));
  const etaPre = dequantize(c.sections.eta, h.eta.min, h.eta.max);
  const eta = new Float32Array(n);
  for (let i = 0; i < n; i++) eta[i] = f(Math.exp(etaPre[i]));

  const colorIdx = unpackBits(c.sections.color_indices, h.colorIndexBits, n);
  const shapeIdx = unpackBits(c.sections.shape_indices, h.shapeIndexBits, n);

  const colorEntries = dequantize(c.sections.color_codebook, h.color.min, h.color.max);
  const quatEntries = normalizeRows(
    dequantize(c.sections.shape_codebook.subarray(0, h.kTotalShape * 4), h.quat.min, h.quat.max),
    4, false);
  const scaleEntries = normalizeRows(
    dequantize(c.sections.shape_codebook.subarray(h.kTotalShape * 4), h.scale.min, h.scale.max),
    3, true);

  const stride = h.shCoeffs * 3;
  const sh = new Float32Array(n * stride);
  const quaternions = new Float32Array(n * 4);
  const scaleDirs = new Float32Array(n * 3);
  const covariances = new Float32Array(n * 6);
  for (let i = 0; i < n; i++) {
    const ci = colorIdx[i];
    if (ci >= h.kTotalColor) throw new TruncatedError(`color index ${ci} out of range`);
    const si = shapeIdx[i];
    if (si >= h.kTotalShape) throw new TruncatedError(`shape index ${si} out of range`);
    sh.set(colorEntries.subarray(ci * stride, (ci + 1) * stride), i * stride);
    quaternions.set(quatEntries.subarray(si * 4, si * 4 + 4), i * 4);
    scaleDirs.set(scaleEntries.subarray(si * 3, si * 3 + 3), i * 3);
    const q = new Float64Array(quatEntries.subarray(si * 4, si * 4 + 4));
    const s = new Float64Array(3);
    for (let a = 0; a < 3; a++) s[a] = eta[i] * scaleEntries[si * 3 + a];
    const cov = quatScaleToCov6(q, s);
    for (let a = 0; a < 6; a++) covariances[i * 6 + a] = f(cov[a]);
  }
  return {
    n, shCoeffs: h.shCoeffs, positions, quaternions, scaleDirs, eta, alphas,
    sh, covariances, header: h,
  };
}
