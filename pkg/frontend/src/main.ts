/**
 * Viewer entry point.  `?scene=<url>` selects the container (default
 * fixtures/e2e.c3gs).  Decode runs in a worker; errors land in the banner.
 */

import { OrbitState, orbitCamera } from "./camera.js";
import { OrbitControls } from "./controls.js";
import { DecodedScene } from "./decode.js";
import { SplatRenderer } from "./renderer.js";
import type { DecodeResponse } from "./worker.js";

const canvas = document.getElementById("view") as HTMLCanvasElement;
const banner = document.getElementById("banner") as HTMLDivElement;
const overlay = document.getElementById("overlay") as HTMLDivElement;

function fail(message: string): void {
  banner.textContent = message;
  banner.style.display = "block";
}

function sceneUrl(): string {
  return new URLSearchParams(location.search).get("scene") ?? "fixtures/e2e.c3gs";
}

function fit(): void {
  canvas.width = canvas.clientWidth * devicePixelRatio;
  canvas.height = canvas.clientHeight * devicePixelRatio;
}

function start(scene: DecodedScene): void {
  let renderer: SplatRenderer;
  try {
    renderer = new SplatRenderer(canvas);
  } catch (e) {
    fail(e instanceof Error ? e.message : String(e));
    return;
  }
  renderer.setScene(scene);
  canvas.addEventListener("webglcontextlost", (e) => {
    e.preventDefault();
    fail("GPU context lost; reload the page to continue");
  });

  const lo = scene.header.aabbMin;
  const hi = scene.header.aabbMax;
  const center: [number, number, number] = [
    (lo[0] + hi[0]) / 2, (lo[1] + hi[1]) / 2, (lo[2] + hi[2]) / 2,
  ];
  const extent = Math.hypot(hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]) || 1;
  const initial: OrbitState = {
    target: center, distance: extent * 1.6, azimuth: -1.2, elevation: 0.5,
  };
  const controls = new OrbitControls(canvas, initial);

  let frames = 0;
  let fps = 0;
  let lastTick = performance.now();
  const loop = () => {
    fit();
    const cam = orbitCamera(controls.state, 50, canvas.width, canvas.height);
    renderer.render(cam);
    frames += 1;
    const now = performance.now();
    if (now - lastTick > 500) {
      fps = (frames * 1000) / (now - lastTick);
      frames = 0;
      lastTick = now;
      overlay.textContent =
        `${scene.n} splats | ${renderer.visibleCount} drawn | ${fps.toFixed(0)} fps`;
    }
    requestAnimationFrame(loop);
  };
  requestAnimationFrame(loop);
}

const worker = new Worker(new URL("./worker.js", import.meta.url), { type: "module" });
worker.onmessage = (e: MessageEvent<DecodeResponse>) => {
  if (!e.data.ok) {
    fail(`${e.data.kind}: ${e.data.error}`);
    return;
  }
  banner.style.display = "none";
  start(e.data.scene as DecodedScene);
};
worker.onerror = (e) => fail(`decode worker failed: ${e.message}`);
banner.textContent = `loading ${sceneUrl()} ...`;
banner.style.display = "block";
worker.postMessage({ url: sceneUrl() });
