"""Synthetic splat scenes for self-supervised pipeline tests.

Gaussians sit on a smooth height-field patch and draw their shape and color
from small prototype sets assigned by spatial tile, so attributes are
spatially coherent: nearby Gaussians share prototypes, which is what Morton
ordering and codebook clustering exploit.  Additive seeded noise controls how
lossy clustering is.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cameras import Camera, orbit_cameras
from .scene import GaussianScene, normalize_quaternions


@dataclass
class SynthSpec:
    n: int = 5000
    shape_prototypes: int = 32
    color_prototypes: int = 32
    sh_coeffs: int = 16
    extent: float = 1.0             # half-width of the patch
    relief: float = 0.35            # height-field amplitude
    scale_range: tuple[float, float] = (0.035, 0.09)   # eta = |s|, smooth in position
    opacity_range: tuple[float, float] = (0.55, 0.95)
    dc_range: float = 1.2           # palette half-range of the diffuse coefficients
    sh_rest_scale: float = 0.08     # magnitude of the view-dependent coefficients
    shape_noise: float = 0.0        # perturbation of log-scales and rotations
    color_noise: float = 0.0        # additive SH noise (scaled down for l > 0)
    eta_jitter: float = 0.0         # lognormal per-Gaussian size jitter

    def __post_init__(self):
        assert self.n > 0 and self.shape_prototypes > 0 and self.color_prototypes > 0


def _random_unit_quats(rng: np.random.Generator, k: int) -> np.ndarray:
    q = rng.normal(size=(k, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    q[q[:, 0] < 0] *= -1.0
    return q


def _tile_assign(u: np.ndarray, v: np.ndarray, k: int, flip: bool) -> np.ndarray:
    """Partition the unit square into k tiles; flip swaps the tiling axes."""
    rows = int(np.ceil(np.sqrt(k)))
    cols = int(np.ceil(k / rows))
    a, b = (v, u) if flip else (u, v)
    ti = np.minimum((a * rows).astype(np.int64), rows - 1)
    tj = np.minimum((b * cols).astype(np.int64), cols - 1)
    return (ti * cols + tj) % k


def synth_scene(spec: SynthSpec, seed: int = 0) -> GaussianScene:
    rng = np.random.default_rng(seed)
    n, e = spec.n, spec.extent

    u = rng.random(n)
    v = rng.random(n)
    x = (2 * u - 1) * e
    y = (2 * v - 1) * e
    z = spec.relief * np.sin(np.pi * x / e) * np.cos(np.pi * y / e)
    positions = np.stack([x, y, z], axis=1)

    shape_id = _tile_assign(u, v, spec.shape_prototypes, flip=False)
    color_id = _tile_assign(u, v, spec.color_prototypes, flip=True)

    proto_q = _random_unit_quats(rng, spec.shape_prototypes)
    raw = rng.uniform(0.25, 1.0, size=(spec.shape_prototypes, 3))
    proto_sdir = raw / np.linalg.norm(raw, axis=1, keepdims=True)  # unit-norm axis ratios

    b = spec.sh_coeffs
    proto_sh = np.zeros((spec.color_prototypes, b, 3))
    proto_sh[:, 0, :] = rng.uniform(-spec.dc_range, spec.dc_range, size=(spec.color_prototypes, 3))
    if b > 1:
        proto_sh[:, 1:, :] = rng.normal(size=(spec.color_prototypes, b - 1, 3)) * spec.sh_rest_scale

    lo, hi = spec.scale_range
    t = 0.5 + 0.5 * np.sin(2.3 * x / e + 1.7 * y / e)   # smooth in position
    eta = lo + (hi - lo) * t
    if spec.eta_jitter > 0:
        eta = eta * np.exp(rng.normal(size=n) * spec.eta_jitter)

    quats = proto_q[shape_id]
    log_scales = np.log(eta[:, None] * proto_sdir[shape_id])
    if spec.shape_noise > 0:
        quats = quats + rng.normal(size=(n, 4)) * spec.shape_noise
        quats = normalize_quaternions(quats, tol=0.0)
        log_scales = log_scales + rng.normal(size=(n, 3)) * spec.shape_noise

    sh = proto_sh[color_id]
    if spec.color_noise > 0:
        noise = rng.normal(size=(n, b, 3)) * spec.color_noise
        if b > 1:
            noise[:, 1:, :] *= 0.25
        sh = sh + noise

    olo, ohi = spec.opacity_range
    alpha = olo + (ohi - olo) * (0.5 + 0.5 * np.cos(1.9 * x / e - 1.1 * y / e))
    logits = np.log(alpha / (1 - alpha))

    return GaussianScene(
        positions=positions.astype(np.float32),
        rotations=quats.astype(np.float32),
        log_scales=log_scales.astype(np.float32),
        opacity_logits=logits.astype(np.float32),
        sh=sh.astype(np.float32),
    )


def synth_cameras(spec: SynthSpec, n_views: int = 8, width: int = 64,
                  height: int = 64) -> list[Camera]:
    """Ring of views looking at the patch from above its rim."""
    radius = spec.extent * 3.2
    return orbit_cameras(n_views, center=np.zeros(3), radius=radius,
                         height=spec.extent * 1.8, fov_y_deg=42.0,
                         width=width, image_height=height)
