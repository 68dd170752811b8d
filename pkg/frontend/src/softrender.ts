/**
 * CPU reference renderer: the same projection, culling, sorting and blending
 * rules as the GPU path, evaluated per pixel.  Used by tests to compare
 * frames against the reference implementation and as a WebGL-free fallback.
 */

import { CameraSpec, cameraCenter, toCamera } from "./camera.js";
import { DecodedScene } from "./decode.js";
import { evalSh } from "./sh.js";

export const R99 = 3.0349;
export const DILATION = 0.3;
export const NEAR_PLANE = 0.01;
export const ALPHA_MIN = 1 / 255;
export const T_MIN = 1e-4;

export interface ProjectedSplat {
  index: number;
  depth: number;
  cx: number;
  cy: number;
  // 2x2 screen covariance (a, b, c) with dilation applied
  a: number;
  b: number;
  c: number;
}

/** Project one splat; returns null when behind the near plane or singular. */
export function projectSplat(
  scene: DecodedScene, i: number, cam: CameraSpec,
): ProjectedSplat | null {
  const p: [number, number, number] = [
    scene.positions[i * 3], scene.positions[i * 3 + 1], scene.positions[i * 3 + 2],
  ];
  const t = toCamera(cam, p);
  if (t[2] <= NEAR_PLANE) return null;
  const w = cam.world_to_camera;
  const idx = i * 6;
  const s = [
    scene.covariances[idx], scene.covariances[idx + 1], scene.covariances[idx + 2],
    scene.covariances[idx + 1], scene.covariances[idx + 3], scene.covariances[idx + 4],
    scene.covariances[idx + 2], scene.covariances[idx + 4], scene.covariances[idx + 5],
  ];
  const invZ = 1 / t[2];
  // J rows (2x3) at the camera-space point
  const j = [
    cam.fx * invZ, 0, -cam.fx * t[0] * invZ * invZ,
    0, cam.fy * invZ, -cam.fy * t[1] * invZ * invZ,
  ];
  // JW (2x3): world -> screen linearization
  const jw = new Array(6).fill(0);
  for (let r = 0; r < 2; r++) {
    for (let c = 0; c < 3; c++) {
      jw[r * 3 + c] = j[r * 3] * w[c] + j[r * 3 + 1] * w[4 + c] + j[r * 3 + 2] * w[8 + c];
    }
  }
  const ms = new Array(6).fill(0); // JW * Sigma
  for (let r = 0; r < 2; r++) {
    for (let c = 0; c < 3; c++) {
      ms[r * 3 + c] = jw[r * 3] * s[c] + jw[r * 3 + 1] * s[3 + c] + jw[r * 3 + 2] * s[6 + c];
    }
  }
  const dot = (r0: number, r1: number) =>
    ms[r0 * 3] * jw[r1 * 3] + ms[r0 * 3 + 1] * jw[r1 * 3 + 1] + ms[r0 * 3 + 2] * jw[r1 * 3 + 2];
  return {
    index: i,
    depth: t[2],
    cx: cam.fx * t[0] * invZ + cam.cx,
    cy: cam.fy * t[1] * invZ + cam.cy,
    a: dot(0, 0) + DILATION,
    b: dot(0, 1),
    c: dot(1, 1) + DILATION,
  };
}

/** Visible splats sorted front to back (depth, then source index). */
export function visibleSorted(scene: DecodedScene, cam: CameraSpec): ProjectedSplat[] {
  const out: ProjectedSplat[] = [];
  for (let i = 0; i < scene.n; i++) {
    const sp = projectSplat(scene, i, cam);
    if (!sp) continue;
    const det = sp.a * sp.c - sp.b * sp.b;
    if (det <= 1e-12) continue;
    const rx = R99 * Math.sqrt(Math.max(sp.a, 0));
    const ry = R99 * Math.sqrt(Math.max(sp.c, 0));
    if (sp.cx + rx < 0 || sp.cx - rx > cam.width || sp.cy + ry < 0 || sp.cy - ry > cam.height) {
      continue;
    }
    out.push(sp);
  }
  out.sort((x, y) => x.depth - y.depth || x.index - y.index);
  return out;
}

/** View-direction colors for every splat (clamped at zero). */
export function splatColors(scene: DecodedScene, cam: CameraSpec): Float32Array {
  const eye = cameraCenter(cam);
  const out = new Float32Array(scene.n * 3);
  for (let i = 0; i < scene.n; i++) {
    const dx = scene.positions[i * 3] - eye[0];
    const dy = scene.positions[i * 3 + 1] - eye[1];
    const dz = scene.positions[i * 3 + 2] - eye[2];
    const n = Math.hypot(dx, dy, dz) || 1;
    const rgb = evalSh(scene.sh, i, scene.shCoeffs, dx / n, dy / n, dz / n);
    out[i * 3] = Math.max(rgb[0], 0);
    out[i * 3 + 1] = Math.max(rgb[1], 0);
    out[i * 3 + 2] = Math.max(rgb[2], 0);
  }
  return out;
}

/** Render to a flat RGB float buffer, front-to-back like the reference. */
export function renderSoftware(scene: DecodedScene, cam: CameraSpec): Float32Array {
  const img = new Float32Array(cam.width * cam.height * 3);
  const sorted = visibleSorted(scene, cam);
  const colors = splatColors(scene, cam);
  const trans = new Float32Array(cam.width * cam.height).fill(1);
  const r2 = R99 * R99;
  for (const sp of sorted) {
    const det = sp.a * sp.c - sp.b * sp.b;
    const ia = sp.c / det;
    const ib = -sp.b / det;
    const ic = sp.a / det;
    const alpha = scene.alphas[sp.index];
    const rx = R99 * Math.sqrt(sp.a);
    const ry = R99 * Math.sqrt(sp.c);
    const x0 = Math.max(0, Math.ceil(sp.cx - rx - 0.5));
    const x1 = Math.min(cam.width - 1, Math.floor(sp.cx + rx - 0.5));
    const y0 = Math.max(0, Math.ceil(sp.cy - ry - 0.5));
    const y1 = Math.min(cam.height - 1, Math.floor(sp.cy + ry - 0.5));
    const cr = colors[sp.index * 3];
    const cg = colors[sp.index * 3 + 1];
    const cb = colors[sp.index * 3 + 2];
    for (let py = y0; py <= y1; py++) {
      for (let px = x0; px <= x1; px++) {
        const dx = px + 0.5 - sp.cx;
        const dy = py + 0.5 - sp.cy;
        const q = ia * dx * dx + 2 * ib * dx * dy + ic * dy * dy;
        if (q > r2) continue;
        const a = alpha * Math.exp(-0.5 * q);
        if (a < ALPHA_MIN) continue;
        const pi = py * cam.width + px;
        const t = trans[pi];
        if (t < T_MIN) continue;
        img[pi * 3] += cr * a * t;
        img[pi * 3 + 1] += cg * a * t;
        img[pi * 3 + 2] += cb * a * t;
        trans[pi] = t * (1 - a);
      }
    }
  }
  return img;
}
