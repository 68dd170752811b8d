"""Per-parameter sensitivity of total rendered image energy.

The sensitivity of a scalar parameter p over a set of training views is the
sum over views of |dE_i/dp| divided by the total pixel count, where E_i is the
sum of all RGB components of view i.  Colors are evaluated without the
negative clamp in this pass so coefficients hidden by the clamp still count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .cameras import Camera
from .render import DILATION, _composite, build_inputs, scene_tensors
from .scene import GaussianScene


@dataclass
class SensitivityField:
    """Non-negative sensitivities mirroring the scene layout.

    ``cov6`` holds sensitivities of the six unique world-covariance entries,
    which shape clustering uses as weights; they come from the same backward
    passes by treating the assembled covariance as an intermediate variable.
    """

    positions: np.ndarray       # (N, 3)
    rotations: np.ndarray       # (N, 4)
    log_scales: np.ndarray      # (N, 3)
    opacity_logits: np.ndarray  # (N,)
    sh: np.ndarray              # (N, B, 3)
    cov6: np.ndarray            # (N, 6)
    n_images: int
    total_pixels: int

    def color_vector(self) -> np.ndarray:
        """Per-Gaussian color sensitivity: max over the SH block (Eq.-4 style)."""
        return self.sh.reshape(self.sh.shape[0], -1).max(axis=1)

    def shape_vector(self) -> np.ndarray:
        """Per-Gaussian shape sensitivity: max over covariance entries."""
        return self.cov6.max(axis=1)


MAGIC = b"SENS"


def export_binary(field: SensitivityField) -> bytes:
    """Flat little-endian f32 dump for inspection; layout in docs/container.md."""
    n = field.positions.shape[0]
    b = field.sh.shape[1]
    head = MAGIC + np.array([n, b], dtype="<u4").tobytes()
    parts = [field.positions, field.rotations, field.log_scales,
             field.opacity_logits, field.sh, field.cov6]
    return head + b"".join(np.ascontiguousarray(p, dtype="<f4").tobytes() for p in parts)


def parameter_sensitivity(scene: GaussianScene, cameras: list[Camera], *,
                          dtype: torch.dtype = torch.float32) -> SensitivityField:
    """Accumulate |dE/dp| over views and normalize by the total pixel count."""
    if not cameras:
        raise ValueError("at least one camera is required")
    leaves = scene_tensors(scene, dtype, requires_grad=True)
    inputs, cov6 = build_inputs(leaves)
    names = ["positions", "rotations", "log_scales", "opacity_logits", "sh"]
    tracked = [leaves[k] for k in names] + [cov6]

    acc = [torch.zeros_like(t) for t in tracked]
    total_pixels = 0
    for cam in cameras:
        flat = _composite(inputs, cam, None, clamp=False, dilation=DILATION)
        energy = flat.sum()
        grads = torch.autograd.grad(energy, tracked, retain_graph=True, allow_unused=True)
        for slot, grad in zip(acc, grads):
            if grad is not None:
                slot += grad.abs()
        total_pixels += cam.pixels

    arrays = [(a / total_pixels).numpy().astype(np.float32) for a in acc]
    return SensitivityField(
        positions=arrays[0], rotations=arrays[1], log_scales=arrays[2],
        opacity_logits=arrays[3], sh=arrays[4], cov6=arrays[5],
        n_images=len(cameras), total_pixels=total_pixels,
    )


def vector_sensitivity(values: np.ndarray, groups: list[np.ndarray] | None = None) -> np.ndarray:
    """Max of each group of scalar sensitivities (rows when groups is None)."""
    v = np.asarray(values)
    if groups is None:
        return v.reshape(v.shape[0], -1).max(axis=1)
    flat = v.reshape(-1)
    return np.array([flat[g].max() if len(g) else 0.0 for g in groups])


def prune_zero_sensitivity(scene: GaussianScene, field: SensitivityField) -> tuple[GaussianScene, int]:
    """Drop Gaussians whose color sensitivity is exactly zero.

    The threshold is exact zero: anything higher risks deleting fine detail
    that does contribute to the training views.
    """
    if field.sh.shape[0] != scene.n:
        raise ValueError("sensitivity field does not match the scene")
    keep = field.color_vector() > 0.0
    removed = int((~keep).sum())
    return scene.take(np.nonzero(keep)[0]), removed


def split_by_threshold(indices: np.ndarray, s: np.ndarray, beta: float) -> tuple[np.ndarray, np.ndarray]:
    """Partition indices into (clusterable, retained) by sensitivity > beta."""
    if beta < 0:
        raise ValueError("threshold must be non-negative")
    indices = np.asarray(indices)
    retained_mask = np.asarray(s) > beta
    return indices[~retained_mask], indices[retained_mask]
