"""Generate binary fixtures + expected values for the browser viewer tests.

Outputs under frontend/fixtures/:
  e2e.c3gs            small pipeline-compressed scene
  e2e_expected.json   header fields, per-section sizes, decoded scalar arrays
  corrupt.c3gs        e2e.c3gs with one payload byte flipped
  single.c3gs         one fat white Gaussian
  single_camera.json  camera for the reference frame
  single_ref.f32      256x256x3 float32 reference render (little-endian)
"""

import json
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from c3gs import codec
from c3gs.cameras import look_at
from c3gs.pipeline import PipelineConfig, compress
from c3gs.quantization import FinetuneConfig, dequantize_array, dequantize_scene
from c3gs.render import render
from c3gs.scene import GaussianScene
from c3gs.sensitivity import parameter_sensitivity
from c3gs.sh import SH_C0
from c3gs.synth import SynthSpec, synth_cameras, synth_scene

OUT = Path(__file__).resolve().parents[1] / "frontend" / "fixtures"


def expected_json(c) -> dict:
    """Decoded values the TS implementation must match within 1 ulp."""
    scene = dequantize_scene(c)
    eta = np.exp(dequantize_array(c.eta_q, c.eta_state))
    return {
        "n": int(c.n),
        "sh_coeffs": int(c.sh_coeffs),
        "k_color": int(c.k_color),
        "k_total_color": int(c.color_codebook_q.shape[0]),
        "k_shape": int(c.k_shape),
        "k_total_shape": int(c.shape_quat_q.shape[0]),
        "color_index": c.color_index.tolist(),
        "shape_index": c.shape_index.tolist(),
        "positions": scene.positions.reshape(-1).tolist(),
        "alphas": dequantize_array(c.opacity_q, c.opacity_state).tolist(),
        "eta": eta.astype(np.float32).tolist(),
        "quaternions": scene.rotations.reshape(-1).tolist(),
        "sh": scene.sh.reshape(-1).tolist(),
    }


def make_e2e() -> None:
    spec = SynthSpec(n=600, shape_prototypes=8, color_prototypes=8,
                     shape_noise=0.02, color_noise=0.005, eta_jitter=0.1)
    scene = synth_scene(spec, seed=3)
    cams = synth_cameras(spec, n_views=8, width=48, height=48)
    field = parameter_sensitivity(scene, cams[1:])
    config = PipelineConfig(
        k_color=16, k_shape=16,
        beta_c=float(np.quantile(field.color_vector(), 0.99)),
        beta_g=float(np.quantile(field.shape_vector(), 0.99)),
        color_steps=8, shape_steps=16,
        finetune_steps=40, finetune=FinetuneConfig(views_per_step=0).scaled_rates(10.0),
        seed=3,
    )
    data, _ = compress(scene, cams, None, config)
    (OUT / "e2e.c3gs").write_bytes(data)

    c = codec.decode(data)
    doc = expected_json(c)
    rep = codec.report(data, scene.n)
    doc["section_bytes"] = rep.section_bytes
    doc["total_bytes"] = rep.total_bytes
    (OUT / "e2e_expected.json").write_text(json.dumps(doc))

    corrupt = bytearray(data)
    corrupt[-3] ^= 0x5A
    (OUT / "corrupt.c3gs").write_bytes(bytes(corrupt))


def make_single() -> None:
    sh = np.zeros((1, 16, 3), np.float32)
    sh[0, 0, :] = (1.0 - 0.5) / SH_C0  # white
    scene = GaussianScene(
        positions=np.zeros((1, 3), np.float32),
        rotations=np.array([[1, 0, 0, 0]], np.float32),
        log_scales=np.log(np.full((1, 3), 0.35, np.float32)),
        opacity_logits=np.full((1,), 1.2, np.float32),
        sh=sh,
    )
    cam = look_at(np.array([0.0, -2.6, 0.0]), np.zeros(3), np.array([0.0, 0.0, 1.0]),
                  45.0, 256, 256)
    cams = [cam, look_at(np.array([1.8, -1.9, 0.4]), np.zeros(3),
                         np.array([0.0, 0.0, 1.0]), 45.0, 256, 256)]
    field = parameter_sensitivity(scene, cams)
    config = PipelineConfig(k_color=1, k_shape=1, beta_c=1e9, beta_g=1e9,
                            color_steps=4, shape_steps=4, finetune_steps=0, seed=0)
    data, _ = compress(scene, cams, None, config)
    (OUT / "single.c3gs").write_bytes(data)
    (OUT / "single_camera.json").write_text(json.dumps(cam.to_dict()))

    ref = render(dequantize_scene(codec.decode(data)), cam)
    (OUT / "single_ref.f32").write_bytes(ref.astype("<f4").tobytes())


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    make_e2e()
    make_single()
    print(f"fixtures written to {OUT}")
