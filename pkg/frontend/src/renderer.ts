/**
 * WebGL2 splat renderer: one instanced quad per Gaussian, sized to the
 * 99%-confidence ellipse of the projected covariance, alpha-blended back to
 * front.  View-dependent colors and the depth sort are refreshed on the CPU
 * whenever the camera moves beyond a staleness threshold.
 */

import { CameraSpec, cameraCenter } from "./camera.js";
import { DecodedScene } from "./decode.js";
import { splatColors, visibleSorted, R99, DILATION } from "./softrender.js";

const VERT = `#version 300 es
precision highp float;
layout(location=0) in vec3 aPosition;
layout(location=1) in vec3 aCovA;   // xx, xy, xz
layout(location=2) in vec3 aCovB;   // yy, yz, zz
layout(location=3) in float aAlpha;
layout(location=4) in vec3 aColor;

uniform mat4 uW;        // world-to-camera, row-major loaded as column-major -> transpose
uniform vec4 uFxFyCxCy;
uniform vec2 uSize;     // viewport in px
uniform float uR;       // confidence radius
uniform float uDilation;

out vec2 vLocal;
out vec3 vColor;
out float vAlpha;

void main() {
  vec2 corner = vec2((gl_VertexID & 1) == 0 ? -1.0 : 1.0,
                     (gl_VertexID & 2) == 0 ? -1.0 : 1.0);
  vec3 t = (uW * vec4(aPosition, 1.0)).xyz;
  if (t.z <= 0.01) { gl_Position = vec4(0.0, 0.0, 2.0, 1.0); vLocal = vec2(9.0); return; }
  float fx = uFxFyCxCy.x, fy = uFxFyCxCy.y;
  mat3 sigma = mat3(aCovA.x, aCovA.y, aCovA.z,
                    aCovA.y, aCovB.x, aCovB.y,
                    aCovA.z, aCovB.y, aCovB.z);
  mat3 w3 = mat3(uW);
  float iz = 1.0 / t.z;
  // rows of J (2x3)
  vec3 j0 = vec3(fx * iz, 0.0, -fx * t.x * iz * iz);
  vec3 j1 = vec3(0.0, fy * iz, -fy * t.y * iz * iz);
  vec3 jw0 = j0 * w3;  // row vector times matrix (w3 columns are uW rows)
  vec3 jw1 = j1 * w3;
  float ca = dot(jw0, sigma * jw0) + uDilation;
  float cb = dot(jw0, sigma * jw1);
  float cc = dot(jw1, sigma * jw1) + uDilation;
  // eigen-decomposition of [[ca, cb], [cb, cc]]
  float mid = 0.5 * (ca + cc);
  float rad = sqrt(max(mid * mid - (ca * cc - cb * cb), 0.0));
  float l1 = mid + rad, l2 = max(mid - rad, 1e-12);
  vec2 e1 = (abs(cb) > 1e-12) ? normalize(vec2(l1 - cc, cb)) : vec2(1.0, 0.0);
  vec2 e2 = vec2(-e1.y, e1.x);
  vec2 center = vec2(fx * t.x * iz + uFxFyCxCy.z, fy * t.y * iz + uFxFyCxCy.w);
  vec2 px = center + uR * (corner.x * sqrt(l1) * e1 + corner.y * sqrt(l2) * e2);
  vec2 ndc = vec2(px.x / uSize.x * 2.0 - 1.0, 1.0 - px.y / uSize.y * 2.0);
  gl_Position = vec4(ndc, 0.0, 1.0);
  vLocal = corner;
  vColor = aColor;
  vAlpha = aAlpha;
}`;

const FRAG = `#version 300 es
precision highp float;
in vec2 vLocal;
in vec3 vColor;
in float vAlpha;
uniform float uR;
out vec4 frag;

void main() {
  float q = dot(vLocal, vLocal) * uR * uR;
  if (q > uR * uR) discard;
  float a = vAlpha * exp(-0.5 * q);
  if (a < 1.0 / 255.0) discard;
  frag = vec4(vColor * a, a);  // premultiplied
}`;

export class SplatRenderer {
  private gl: WebGL2RenderingContext;
  private program: WebGLProgram;
  private vao: WebGLVertexArrayObject;
  private buffers: Record<string, WebGLBuffer> = {};
  private scene: DecodedScene | null = null;
  private lastSortEye: [number, number, number] | null = null;
  visibleCount = 0;

  constructor(private canvas: HTMLCanvasElement) {
    const gl = canvas.getContext("webgl2", { antialias: false, alpha: false });
    if (!gl) throw new Error("WebGL2 is not available");
    this.gl = gl;
    this.program = this.link(VERT, FRAG);
    this.vao = gl.createVertexArray()!;
  }

  private link(vs: string, fs: string): WebGLProgram {
    const gl = this.gl;
    const compile = (type: number, src: string) => {
      const sh = gl.createShader(type)!;
      gl.shaderSource(sh, src);
      gl.compileShader(sh);
      if (!gl.getShaderParameter(sh, gl.COMPILE_STATUS)) {
        throw new Error(gl.getShaderInfoLog(sh) ?? "shader compile failure");
      }
      return sh;
    };
    const prog = gl.createProgram()!;
    gl.attachShader(prog, compile(gl.VERTEX_SHADER, vs));
    gl.attachShader(prog, compile(gl.FRAGMENT_SHADER, fs));
    gl.linkProgram(prog);
    if (!gl.getProgramParameter(prog, gl.LINK_STATUS)) {
      throw new Error(gl.getProgramInfoLog(prog) ?? "program link failure");
    }
    return prog;
  }

  setScene(scene: DecodedScene): void {
    this.scene = scene;
    this.lastSortEye = null;
  }

  /** Re-sorts and re-colors when the eye moved beyond ~1% of scene scale. */
  private refreshOrder(cam: CameraSpec): void {
    const scene = this.scene!;
    const eye = cameraCenter(cam);
    if (this.lastSortEye) {
      const d = Math.hypot(eye[0] - this.lastSortEye[0], eye[1] - this.lastSortEye[1],
        eye[2] - this.lastSortEye[2]);
      const scale = Math.hypot(
        scene.header.aabbMax[0] - scene.header.aabbMin[0],
        scene.header.aabbMax[1] - scene.header.aabbMin[1],
        scene.header.aabbMax[2] - scene.header.aabbMin[2]) || 1;
      if (d < 0.01 * scale) return;
    }
    this.lastSortEye = eye;

    const sorted = visibleSorted(scene, cam);
    // back-to-front for standard alpha blending
    sorted.reverse();
    const colors = splatColors(scene, cam);
    const m = sorted.length;
    this.visibleCount = m;
    const pos = new Float32Array(m * 3);
    const covA = new Float32Array(m * 3);
    const covB = new Float32Array(m * 3);
    const alpha = new Float32Array(m);
    const color = new Float32Array(m * 3);
    for (let k = 0; k < m; k++) {
      const i = sorted[k].index;
      pos.set(scene.positions.subarray(i * 3, i * 3 + 3), k * 3);
      covA.set(scene.covariances.subarray(i * 6, i * 6 + 3), k * 3);
      covB.set(scene.covariances.subarray(i * 6 + 3, i * 6 + 6), k * 3);
      alpha[k] = scene.alphas[i];
      color.set(colors.subarray(i * 3, i * 3 + 3), k * 3);
    }
    this.upload({ pos, covA, covB, alpha, color });
  }

  private upload(data: Record<string, Float32Array>): void {
    const gl = this.gl;
    gl.bindVertexArray(this.vao);
    const layout: [string, number, number][] = [
      ["pos", 0, 3], ["covA", 1, 3], ["covB", 2, 3], ["alpha", 3, 1], ["color", 4, 3],
    ];
    for (const [name, loc, size] of layout) {
      if (!this.buffers[name]) this.buffers[name] = gl.createBuffer()!;
      gl.bindBuffer(gl.ARRAY_BUFFER, this.buffers[name]);
      gl.bufferData(gl.ARRAY_BUFFER, data[name], gl.DYNAMIC_DRAW);
      gl.enableVertexAttribArray(loc);
      gl.vertexAttribPointer(loc, size, gl.FLOAT, false, 0, 0);
      gl.vertexAttribDivisor(loc, 1);
    }
    gl.bindVertexArray(null);
  }

  render(cam: CameraSpec): void {
    const gl = this.gl;
    if (!this.scene) return;
    this.refreshOrder(cam);
    gl.viewport(0, 0, cam.width, cam.height);
    gl.clearColor(0, 0, 0, 1);
    gl.clear(gl.COLOR_BUFFER_BIT);
    gl.disable(gl.DEPTH_TEST);
    gl.enable(gl.BLEND);
    gl.blendFunc(gl.ONE, gl.ONE_MINUS_SRC_ALPHA);

    gl.useProgram(this.program);
    const u = (n: string) => gl.getUniformLocation(this.program, n);
    // world_to_camera is row-major; transpose=true hands GL the actual matrix
    gl.uniformMatrix4fv(u("uW"), true, new Float32Array(cam.world_to_camera));
    gl.uniform4f(u("uFxFyCxCy"), cam.fx, cam.fy, cam.cx, cam.cy);
    gl.uniform2f(u("uSize"), cam.width, cam.height);
    gl.uniform1f(u("uR"), R99);
    gl.uniform1f(u("uDilation"), DILATION);

    gl.bindVertexArray(this.vao);
    gl.drawArraysInstanced(gl.TRIANGLE_STRIP, 0, 4, this.visibleCount);
    gl.bindVertexArray(null);
  }
}
