"""Deterministic differentiable CPU renderer for Gaussian-splat scenes.

Forward model, per camera:
  1. covariances are pushed through the view transform and the perspective
     Jacobian to 2D screen covariances (low-pass dilation added on the
     diagonal),
  2. splats behind the near plane or whose 99% confidence ellipse misses the
     image rectangle are culled,
  3. visible splats are sorted by view depth (source index breaks ties) and
     composited front to back per pixel:
         C = sum_i c_i * a_i * prod_{j<i} (1 - a_j),
     with a_i = alpha_i * exp(-0.5 d^T inv(cov2d) d).

Contributions are skipped outside the confidence ellipse, when a_i < 1/255,
and once the pixel transmittance T falls below 1e-4; these thresholds are part
of the forward definition, so reverse-mode gradients replay them exactly.

The implementation is sparse: each visible splat is expanded into (pixel,
splat) pairs over its ellipse bounding box, pairs are ordered by (pixel, depth
rank), and transmittance is a segmented cumulative sum of log(1 - a).  All of
it is plain torch, so gradients for every scene parameter come from one
reverse-mode pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from .cameras import Camera
from .scene import GaussianScene, covariance_from_t, cov6_to_mat
from .sh import sh_eval_t

# sqrt of the 99% quantile of chi^2 with 2 dof: confidence-ellipse radius in
# standard deviations.
R99 = 3.0349
# Low-pass dilation added to the 2D covariance diagonal, in px^2.
DILATION = 0.3
NEAR_PLANE = 0.01
ALPHA_MIN = 1.0 / 255.0
T_MIN = 1e-4
DET_MIN = 1e-12


@dataclass
class Splat2D:
    """One projected Gaussian: screen geometry plus appearance."""

    screen_center: np.ndarray  # (2,) pixels
    cov2d: np.ndarray          # (3,) symmetric 2x2 packed (a, b, c)
    view_depth: float          # camera-space z
    rgb: np.ndarray | None = None
    alpha: float | None = None
    source_index: int = -1


@dataclass
class SceneGradients:
    """d(loss)/d(parameter), mirroring the GaussianScene layout."""

    positions: np.ndarray
    rotations: np.ndarray
    log_scales: np.ndarray
    opacity_logits: np.ndarray
    sh: np.ndarray


@dataclass
class RenderInputs:
    """Differentiable per-Gaussian tensors the compositor consumes."""

    positions: torch.Tensor  # (N, 3)
    cov6: torch.Tensor       # (N, 6)
    alphas: torch.Tensor     # (N,)
    sh: torch.Tensor         # (N, B, 3)


def scene_tensors(scene: GaussianScene, dtype: torch.dtype, requires_grad: bool = False) -> dict[str, torch.Tensor]:
    t = {
        "positions": torch.from_numpy(scene.positions.astype(np.float64)).to(dtype),
        "rotations": torch.from_numpy(scene.rotations.astype(np.float64)).to(dtype),
        "log_scales": torch.from_numpy(scene.log_scales.astype(np.float64)).to(dtype),
        "opacity_logits": torch.from_numpy(scene.opacity_logits.astype(np.float64)).to(dtype),
        "sh": torch.from_numpy(scene.sh.astype(np.float64)).to(dtype),
    }
    if requires_grad:
        for v in t.values():
            v.requires_grad_(True)
    return t


def build_inputs(t: dict[str, torch.Tensor]) -> tuple[RenderInputs, torch.Tensor]:
    """Activations: normalized quaternion, exp scale, sigmoid opacity.

    Returns the inputs plus the intermediate packed covariance tensor so
    callers can request gradients with respect to the covariance entries.
    """
    q = t["rotations"] / torch.linalg.norm(t["rotations"], dim=-1, keepdim=True)
    s = torch.exp(t["log_scales"])
    cov6 = covariance_from_t(q, s)
    alphas = torch.sigmoid(t["opacity_logits"])
    return RenderInputs(t["positions"], cov6, alphas, t["sh"]), cov6


def _camera_tensors(cam: Camera, dtype: torch.dtype) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    w = torch.from_numpy(cam.world_to_camera).to(dtype)
    return w[:3, :3], w[:3, 3], torch.from_numpy(cam.center()).to(dtype)


def _project_cov(cov6: torch.Tensor, tcam: torch.Tensor, rot: torch.Tensor,
                 fx: float, fy: float, dilation: float) -> torch.Tensor:
    """2D screen covariance packed (a, b, c) for camera-space centers tcam."""
    rows = torch.tensor([0, 0, 0, 1, 1, 2], device=cov6.device)
    cols = torch.tensor([0, 1, 2, 1, 2, 2], device=cov6.device)
    sigma = cov6.new_zeros(cov6.shape[:-1] + (3, 3))
    sigma[..., rows, cols] = cov6
    sigma[..., cols, rows] = cov6

    tx, ty, tz = tcam.unbind(-1)
    inv_z = 1.0 / tz
    zero = torch.zeros_like(tx)
    j0 = torch.stack([fx * inv_z, zero, -fx * tx * inv_z * inv_z], dim=-1)
    j1 = torch.stack([zero, fy * inv_z, -fy * ty * inv_z * inv_z], dim=-1)
    j = torch.stack([j0, j1], dim=-2)  # (N, 2, 3)
    jw = j @ rot
    cov2 = jw @ sigma @ jw.transpose(-1, -2)
    a = cov2[..., 0, 0] + dilation
    b = cov2[..., 0, 1]
    c = cov2[..., 1, 1] + dilation
    return torch.stack([a, b, c], dim=-1)


def project(cov6: np.ndarray, position: np.ndarray, cam: Camera,
            dilation: float = DILATION) -> Splat2D | None:
    """Project one Gaussian; None when its center is behind the near plane."""
    dtype = torch.float64
    rot, trans, _ = _camera_tensors(cam, dtype)
    x = torch.from_numpy(np.asarray(position, dtype=np.float64))
    t = rot @ x + trans
    if float(t[2]) <= NEAR_PLANE:
        return None
    cov2d = _project_cov(torch.from_numpy(np.asarray(cov6, dtype=np.float64)).unsqueeze(0),
                         t.unsqueeze(0), rot, cam.fx, cam.fy, dilation)[0]
    center = np.array([cam.fx * float(t[0]) / float(t[2]) + cam.cx,
                       cam.fy * float(t[1]) / float(t[2]) + cam.cy])
    return Splat2D(screen_center=center, cov2d=cov2d.numpy(), view_depth=float(t[2]))


def _ellipse_rect_mindist2(center: torch.Tensor, cov2d: torch.Tensor,
                           width: int, height: int) -> torch.Tensor:
    """Min Mahalanobis^2 from each splat center to the [0,W]x[0,H] rectangle.

    Zero when the center lies inside; otherwise the minimum over the four
    edges of a 1D quadratic restricted to the edge segment.
    """
    a, b, c = cov2d.unbind(-1)
    det = a * c - b * b
    det = torch.clamp_min(det, DET_MIN)
    ia, ib, ic = c / det, -b / det, a / det  # inverse covariance entries

    cx, cy = center.unbind(-1)
    inside = (cx >= 0) & (cx <= width) & (cy >= 0) & (cy <= height)

    def quad(dx: torch.Tensor, dy: torch.Tensor) -> torch.Tensor:
        return ia * dx * dx + 2 * ib * dx * dy + ic * dy * dy

    best = torch.full_like(cx, float("inf"))
    # Horizontal edges y = y0, x in [0, W]: minimize over x with y fixed.
    for y0 in (0.0, float(height)):
        dy = y0 - cy
        x_star = cx - (ib / ia) * dy  # stationary point of the restricted quadratic
        x_star = torch.clamp(x_star, 0.0, float(width))
        best = torch.minimum(best, quad(x_star - cx, dy))
    # Vertical edges x = x0, y in [0, H].
    for x0 in (0.0, float(width)):
        dx = x0 - cx
        y_star = cy - (ib / ic) * dx
        y_star = torch.clamp(y_star, 0.0, float(height))
        best = torch.minimum(best, quad(dx, y_star - cy))
    return torch.where(inside, torch.zeros_like(best), best)


def cull(scene: GaussianScene, cam: Camera, dilation: float = DILATION) -> np.ndarray:
    """Indices of Gaussians whose confidence ellipse touches the image."""
    with torch.no_grad():
        t = scene_tensors(scene, torch.float64)
        inputs, _ = build_inputs(t)
        rot, trans, _ = _camera_tensors(cam, torch.float64)
        tcam = inputs.positions @ rot.T + trans
        front = tcam[:, 2] > NEAR_PLANE
        safe_t = torch.where(front.unsqueeze(-1), tcam, torch.ones_like(tcam))
        cov2d = _project_cov(inputs.cov6, safe_t, rot, cam.fx, cam.fy, dilation)
        cx = cam.fx * safe_t[:, 0] / safe_t[:, 2] + cam.cx
        cy = cam.fy * safe_t[:, 1] / safe_t[:, 2] + cam.cy
        d2 = _ellipse_rect_mindist2(torch.stack([cx, cy], dim=-1), cov2d,
                                    cam.width, cam.height)
        keep = front & (d2 <= R99 * R99)
    return np.nonzero(keep.numpy())[0]


def _composite(inputs: RenderInputs, cam: Camera, pixel_ids: torch.Tensor | None,
               clamp: bool, dilation: float) -> torch.Tensor:
    """Blend all splats into the selected pixels (all pixels when None).

    Returns a (P, 3) tensor of linear RGB, rows following ``pixel_ids``.
    """
    dtype = inputs.positions.dtype
    n = inputs.positions.shape[0]
    w, h = cam.width, cam.height
    npix = w * h if pixel_ids is None else int(pixel_ids.shape[0])
    out_shape = (npix, 3)
    if n == 0:
        return torch.zeros(out_shape, dtype=dtype)

    rot, trans, cam_center = _camera_tensors(cam, dtype)
    tcam = inputs.positions @ rot.T + trans
    depth = tcam[:, 2]
    front = depth > NEAR_PLANE

    safe_t = torch.where(front.unsqueeze(-1), tcam, torch.ones_like(tcam))
    cov2d = _project_cov(inputs.cov6, safe_t, rot, cam.fx, cam.fy, dilation)
    a, b, c = cov2d.unbind(-1)
    det = a * c - b * b
    ok = front & (det > DET_MIN)

    center_x = cam.fx * safe_t[:, 0] / safe_t[:, 2] + cam.cx
    center_y = cam.fy * safe_t[:, 1] / safe_t[:, 2] + cam.cy

    # Ellipse bounding box in pixel-center coordinates (centers at +0.5).
    with torch.no_grad():
        rx = R99 * torch.sqrt(torch.clamp_min(a, 0.0))
        ry = R99 * torch.sqrt(torch.clamp_min(c, 0.0))
        x0 = torch.ceil(center_x - rx - 0.5).long().clamp(0, w - 1)
        x1 = torch.floor(center_x + rx - 0.5).long().clamp(0, w - 1)
        y0 = torch.ceil(center_y - ry - 0.5).long().clamp(0, h - 1)
        y1 = torch.floor(center_y + ry - 0.5).long().clamp(0, h - 1)
        empty = (torch.ceil(center_x - rx - 0.5) > w - 1) | (torch.floor(center_x + rx - 0.5) < 0) \
            | (torch.ceil(center_y - ry - 0.5) > h - 1) | (torch.floor(center_y + ry - 0.5) < 0)
        visible = ok & ~empty
        vis_idx = torch.nonzero(visible, as_tuple=False).squeeze(-1)

    if vis_idx.numel() == 0:
        return torch.zeros(out_shape, dtype=dtype)

    # Depth order with source-index tie break (stable sort over source order).
    with torch.no_grad():
        order = torch.argsort(depth[vis_idx], stable=True)
        ranked = vis_idx[order]                     # splat ids, front to back
        rank_of = torch.empty(n, dtype=torch.long)
        rank_of[ranked] = torch.arange(ranked.numel())

        bw = (x1 - x0 + 1)[vis_idx]
        bh = (y1 - y0 + 1)[vis_idx]
        counts = bw * bh
        total = int(counts.sum())
        pair_vis = torch.repeat_interleave(torch.arange(vis_idx.numel()), counts)
        starts = torch.cumsum(counts, 0) - counts
        within = torch.arange(total) - starts[pair_vis]
        pair_splat = vis_idx[pair_vis]
        px = x0[pair_splat] + within % bw[pair_vis]
        py = y0[pair_splat] + within // bw[pair_vis]
        pair_pixel = py * w + px

        if pixel_ids is not None:
            # Map requested pixels to compact rows; drop pairs outside the set.
            lut = torch.full((w * h,), -1, dtype=torch.long)
            lut[pixel_ids] = torch.arange(npix)
            rowid = lut[pair_pixel]
            sel = rowid >= 0
            pair_splat, px, py, rowid = pair_splat[sel], px[sel], py[sel], rowid[sel]
        else:
            rowid = pair_pixel
        if pair_splat.numel() == 0:
            return torch.zeros(out_shape, dtype=dtype)

        key = rowid * n + rank_of[pair_splat]
        perm = torch.argsort(key)
        pair_splat, px, py, rowid = pair_splat[perm], px[perm], py[perm], rowid[perm]
        seg_start = torch.ones_like(rowid, dtype=torch.bool)
        seg_start[1:] = rowid[1:] != rowid[:-1]

    # Per-splat appearance.
    dirs = inputs.positions - cam_center
    dirs = dirs / torch.linalg.norm(dirs, dim=-1, keepdim=True)
    rgb = sh_eval_t(inputs.sh, dirs, clamp=clamp)

    # Per-pair Gaussian falloff.
    g = pair_splat
    dx = (px.to(dtype) + 0.5) - center_x[g]
    dy = (py.to(dtype) + 0.5) - center_y[g]
    dg, bg, cg, ag = det[g], b[g], c[g], a[g]
    q = (cg * dx * dx - 2.0 * bg * dx * dy + ag * dy * dy) / dg
    falloff = torch.exp(-0.5 * q)
    amp = inputs.alphas[g] * falloff

    with torch.no_grad():
        live_shape = (q <= R99 * R99) & (amp >= ALPHA_MIN)
    eff = amp * live_shape.to(dtype)

    # Segmented exclusive cumsum of log(1 - a) -> transmittance before each pair.
    log_t = torch.log1p(-eff)
    csum = torch.cumsum(log_t, 0)
    excl = csum - log_t
    seg_base = torch.cumsum(seg_start.to(torch.long), 0) - 1
    first_excl = excl[seg_start]
    t_excl = torch.exp(excl - first_excl[seg_base])

    with torch.no_grad():
        alive = t_excl >= T_MIN
    contrib = (eff * t_excl * alive.to(dtype)).unsqueeze(-1) * rgb[g]

    out = torch.zeros(out_shape, dtype=dtype)
    out.index_add_(0, rowid, contrib)
    return out


def render(scene: GaussianScene, cam: Camera, *, dtype: torch.dtype = torch.float32,
           dilation: float = DILATION) -> np.ndarray:
    """Render the scene to a (H, W, 3) linear-RGB float array."""
    with torch.no_grad():
        inputs, _ = build_inputs(scene_tensors(scene, dtype))
        flat = _composite(inputs, cam, None, clamp=True, dilation=dilation)
    return flat.reshape(cam.height, cam.width, 3).numpy()


def render_backward(scene: GaussianScene, cam: Camera, upstream: np.ndarray,
                    clamp: bool = True, *, dtype: torch.dtype = torch.float64,
                    dilation: float = DILATION) -> SceneGradients:
    """Reverse-mode gradients of sum(render * upstream) for every parameter."""
    if upstream.shape != (cam.height, cam.width, 3):
        raise ValueError("upstream gradient dimensions must match the camera")
    leaves = scene_tensors(scene, dtype, requires_grad=True)
    inputs, _ = build_inputs(leaves)
    up = torch.from_numpy(np.asarray(upstream, dtype=np.float64)).to(dtype).reshape(-1, 3)
    flat = _composite(inputs, cam, None, clamp=clamp, dilation=dilation)
    loss = (flat * up).sum()
    names = ["positions", "rotations", "log_scales", "opacity_logits", "sh"]
    grads = torch.autograd.grad(loss, [leaves[k] for k in names], allow_unused=True)
    out = {}
    for name, grad in zip(names, grads):
        out[name] = (torch.zeros_like(leaves[name]) if grad is None else grad).numpy()
    return SceneGradients(**out)


def render_cov6(cov6: np.ndarray, scene: GaussianScene, cam: Camera, *,
                dtype: torch.dtype = torch.float32) -> np.ndarray:
    """Render with covariances supplied directly (rotation/scale ignored)."""
    with torch.no_grad():
        t = scene_tensors(scene, dtype)
        inputs = RenderInputs(
            positions=t["positions"],
            cov6=torch.from_numpy(np.asarray(cov6, dtype=np.float64)).to(dtype),
            alphas=torch.sigmoid(t["opacity_logits"]),
            sh=t["sh"],
        )
        flat = _composite(inputs, cam, None, clamp=True, dilation=DILATION)
    return flat.reshape(cam.height, cam.width, 3).numpy()
