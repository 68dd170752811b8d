/** Background decode worker: fetch, inflate, checksum and expand off-thread. */

import { ContainerError, parseContainer } from "./container.js";
import { decodeScene } from "./decode.js";

export interface DecodeRequest {
  url: string;
}

export type DecodeResponse =
  | { ok: true; scene: ReturnType<typeof decodeScene>; sectionSizes: Record<string, number> }
  | { ok: false; error: string; kind: string };

self.onmessage = async (e: MessageEvent<DecodeRequest>) => {
  try {
    const resp = await fetch(e.data.url);
    if (!resp.ok) {
      throw new ContainerError(`HTTP ${resp.status} fetching ${e.data.url}`);
    }
    const container = await parseContainer(await resp.arrayBuffer());
    const scene = decodeScene(container);
    const msg: DecodeResponse = { ok: true, scene, sectionSizes: container.sectionSizes };
    (self as unknown as Worker).postMessage(msg, [
      scene.positions.buffer, scene.quaternions.buffer, scene.scaleDirs.buffer,
      scene.eta.buffer, scene.alphas.buffer, scene.sh.buffer, scene.covariances.buffer,
    ]);
  } catch (err) {
    const msg: DecodeResponse = {
      ok: false,
      error: err instanceof Error ? err.message : String(err),
      kind: err?.constructor?.name ?? "Error",
    };
    (self as unknown as Worker).postMessage(msg);
  }
};
