/** Real spherical harmonics (degree <= 3): color = 0.5 + sum c * Y. */

export const SH_C0 = 0.28209479177387814;
const C1 = 0.4886025119029199;
const C2 = [1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
  -1.0925484305920792, 0.5462742152960396];
const C3 = [-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
  0.3731763325901154, -0.4570457994644658, 1.445305721320277, -0.5900435899266435];

export function shBasis(x: number, y: number, z: number, coeffs: number): number[] {
  const out = [SH_C0];
  if (coeffs > 1) out.push(-C1 * y, C1 * z, -C1 * x);
  if (coeffs > 4) {
    const xx = x * x, yy = y * y, zz = z * z;
    out.push(C2[0] * x * y, C2[1] * y * z, C2[2] * (2 * zz - xx - yy),
      C2[3] * x * z, C2[4] * (xx - yy));
  }
  if (coeffs > 9) {
    const xx = x * x, yy = y * y, zz = z * z;
    out.push(
      C3[0] * y * (3 * xx - yy),
      C3[1] * x * y * z,
      C3[2] * y * (4 * zz - xx - yy),
      C3[3] * z * (2 * zz - 3 * xx - 3 * yy),
      C3[4] * x * (4 * zz - xx - yy),
      C3[5] * z * (xx - yy),
      C3[6] * x * (xx - 3 * yy),
    );
  }
  return out;
}

/** Unclamped RGB for splat i of a flat (n, coeffs, 3) coefficient array. */
export function evalSh(
  sh: Float32Array, i: number, coeffs: number, x: number, y: number, z: number,
): [number, number, number] {
  const basis = shBasis(x, y, z, coeffs);
  const base = i * coeffs * 3;
  let r = 0.5, g = 0.5, b = 0.5;
  for (let k = 0; k < coeffs; k++) {
    const w = basis[k];
    r += w * sh[base + k * 3];
    g += w * sh[base + k * 3 + 1];
    b += w * sh[base + k * 3 + 2];
  }
  return [r, g, b];
}
