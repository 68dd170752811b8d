/**
 * Orbit controls: left-drag rotates, wheel dollies, right-drag pans the
 * target in the view plane.
 */

import { OrbitState, cameraEye } from "./camera.js";

export class OrbitControls {
  state: OrbitState;
  onChange: (() => void) | null = null;
  private dragging: 0 | 1 | 2 | null = null;
  private lastX = 0;
  private lastY = 0;

  constructor(private element: HTMLElement, initial: OrbitState) {
    this.state = { ...initial, target: [...initial.target] as [number, number, number] };
    element.addEventListener("pointerdown", this.onDown);
    element.addEventListener("pointermove", this.onMove);
    element.addEventListener("pointerup", this.onUp);
    element.addEventListener("pointercancel", this.onUp);
    element.addEventListener("wheel", this.onWheel, { passive: false });
    element.addEventListener("contextmenu", (e) => e.preventDefault());
  }

  private onDown = (e: PointerEvent) => {
    this.dragging = e.button === 2 ? 2 : e.button === 1 ? 1 : 0;
    this.lastX = e.clientX;
    this.lastY = e.clientY;
    this.element.setPointerCapture(e.pointerId);
  };

  private onUp = (e: PointerEvent) => {
    this.dragging = null;
    this.element.releasePointerCapture(e.pointerId);
  };

  private onMove = (e: PointerEvent) => {
    if (this.dragging === null) return;
    const dx = e.clientX - this.lastX;
    const dy = e.clientY - this.lastY;
    this.lastX = e.clientX;
    this.lastY = e.clientY;
    const s = this.state;
    if (this.dragging === 0) {
      s.azimuth -= dx * 0.008;
      s.elevation = Math.min(Math.max(s.elevation + dy * 0.008, -1.5), 1.5);
    } else {
      // pan: move the target in the camera's right/up plane
      const eye = cameraEye(s);
      const fwd = [s.target[0] - eye[0], s.target[1] - eye[1], s.target[2] - eye[2]];
      const fl = Math.hypot(fwd[0], fwd[1], fwd[2]) || 1;
      for (let i = 0; i < 3; i++) fwd[i] /= fl;
      const right = [fwd[1] * 1 - 0, 0 - fwd[0] * 1, 0]; // fwd x (0,0,1)
      const rl = Math.hypot(right[0], right[1], right[2]) || 1;
      for (let i = 0; i < 3; i++) right[i] /= rl;
      const up = [
        right[1] * fwd[2] - right[2] * fwd[1],
        right[2] * fwd[0] - right[0] * fwd[2],
        right[0] * fwd[1] - right[1] * fwd[0],
      ];
      const k = s.distance * 0.0015;
      for (let i = 0; i < 3; i++) {
        s.target[i] += (-dx * right[i] + dy * up[i]) * k;
      }
    }
    this.onChange?.();
  };

  private onWheel = (e: WheelEvent) => {
    e.preventDefault();
    this.state.distance *= Math.exp(e.deltaY * 0.001);
    this.state.distance = Math.min(Math.max(this.state.distance, 0.05), 500);
    this.onChange?.();
  };
}
