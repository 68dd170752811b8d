/** Pinhole camera math shared by the GPU path, CPU sorting and tests. */

export interface CameraSpec {
  world_to_camera: number[]; // 16 reals, row-major
  fx: number;
  fy: number;
  cx: number;
  cy: number;
  width: number;
  height: number;
}

export interface OrbitState {
  target: [number, number, number];
  distance: number;
  azimuth: number;   // radians around +z
  elevation: number; // radians above the xy plane
}

export function cameraEye(o: OrbitState): [number, number, number] {
  const ce = Math.cos(o.elevation);
  return [
    o.target[0] + o.distance * ce * Math.cos(o.azimuth),
    o.target[1] + o.distance * ce * Math.sin(o.azimuth),
    o.target[2] + o.distance * Math.sin(o.elevation),
  ];
}

function sub(a: number[], b: number[]): number[] {
  return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

function cross(a: number[], b: number[]): number[] {
  return [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
}

function norm(a: number[]): number[] {
  const n = Math.hypot(a[0], a[1], a[2]);
  return [a[0] / n, a[1] / n, a[2] / n];
}

/** Row-major world-to-camera with +z forward, +y down (image convention). */
export function lookAtMatrix(eye: number[], target: number[], up: number[]): number[] {
  const fwd = norm(sub(target, eye));
  const right = norm(cross(fwd, up));
  const down = cross(fwd, right);
  const r = [right, down, fwd];
  const t = r.map((row) => -(row[0] * eye[0] + row[1] * eye[1] + row[2] * eye[2]));
  return [
    r[0][0], r[0][1], r[0][2], t[0],
    r[1][0], r[1][1], r[1][2], t[1],
    r[2][0], r[2][1], r[2][2], t[2],
    0, 0, 0, 1,
  ];
}

export function orbitCamera(o: OrbitState, fovYDeg: number, width: number, height: number): CameraSpec {
  const eye = cameraEye(o);
  const upHint: [number, number, number] =
    Math.abs(Math.cos(o.elevation)) < 1e-3 ? [0, 1, 0] : [0, 0, 1];
  const fy = (0.5 * height) / Math.tan((fovYDeg * Math.PI) / 360);
  return {
    world_to_camera: lookAtMatrix(eye, o.target as unknown as number[], upHint),
    fx: fy,
    fy,
    cx: width / 2,
    cy: height / 2,
    width,
    height,
  };
}

export function cameraCenter(cam: CameraSpec): [number, number, number] {
  const w = cam.world_to_camera;
  // -R^T t for the 3x4 block
  return [
    -(w[0] * w[3] + w[4] * w[7] + w[8] * w[11]),
    -(w[1] * w[3] + w[5] * w[7] + w[9] * w[11]),
    -(w[2] * w[3] + w[6] * w[7] + w[10] * w[11]),
  ];
}

/** Camera-space point of a world position. */
export function toCamera(cam: CameraSpec, p: [number, number, number]): [number, number, number] {
  const w = cam.world_to_camera;
  return [
    w[0] * p[0] + w[1] * p[1] + w[2] * p[2] + w[3],
    w[4] * p[0] + w[5] * p[1] + w[6] * p[2] + w[7],
    w[8] * p[0] + w[9] * p[1] + w[10] * p[2] + w[11],
  ];
}
