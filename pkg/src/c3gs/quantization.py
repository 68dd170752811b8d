"""Min-Max k-bit simulated quantization and quantization-aware fine-tuning.

A quantizer tracks a moving-average [min, max] range per parameter group.  The
forward pass rounds onto the b-bit grid spanning that range; the backward pass
is the straight-through identity, so optimization sees full-precision
gradients while the forward always matches what will be stored.

Quantizer placement per parameter:
  opacity      after the sigmoid activation
  scale factor before the exp activation (eta_pre = log eta)
  codebook rotation/scale entries before their normalization step
  SH entries   raw
  positions    float16 round-trip (no Min-Max state)
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import torch

from .cameras import Camera
from .render import DILATION, RenderInputs, _composite
from .scene import GaussianScene, covariance_from_t
from .clustering import Codebook


@dataclass
class QuantState:
    """b-bit Min-Max range tracker (EMA momentum m once initialized)."""

    bits: int = 8
    momentum: float = 0.99
    running_min: float | None = None
    running_max: float | None = None
    frozen: bool = False

    def __post_init__(self):
        if not 2 <= self.bits <= 16:
            raise ValueError("bits must be in [2, 16]")

    @property
    def levels(self) -> int:
        return (1 << self.bits) - 1

    def observe(self, p: torch.Tensor) -> None:
        if self.frozen:
            return
        lo = float(p.detach().min())
        hi = float(p.detach().max())
        if self.running_min is None:
            self.running_min, self.running_max = lo, hi
        else:
            m = self.momentum
            self.running_min = m * self.running_min + (1 - m) * lo
            self.running_max = m * self.running_max + (1 - m) * hi


def fake_quantize(p: torch.Tensor, state: QuantState) -> torch.Tensor:
    """Round onto the state's grid; gradient is the identity everywhere."""
    state.observe(p)
    lo, hi = state.running_min, state.running_max
    if hi == lo:
        return p + (torch.full_like(p, lo) - p).detach()
    span = hi - lo
    with torch.no_grad():
        q = torch.round((torch.clamp(p, lo, hi) - lo) / span * state.levels)
        deq = lo + q / state.levels * span
    return p + (deq - p).detach()


def quantize_array(values: np.ndarray, state: QuantState) -> np.ndarray:
    """Freeze ``values`` onto the grid as integer codes (u8 for b <= 8)."""
    lo, hi = state.running_min, state.running_max
    dtype = np.uint8 if state.bits <= 8 else np.uint16
    if hi == lo:
        return np.zeros(np.shape(values), dtype=dtype)
    q = np.round((np.clip(values, lo, hi) - lo) / (hi - lo) * state.levels)
    return q.astype(dtype)


def dequantize_array(codes: np.ndarray, state: QuantState) -> np.ndarray:
    """Grid codes back to float32; float32 arithmetic is the wire contract."""
    lo = np.float32(state.running_min)
    hi = np.float32(state.running_max)
    step = np.float32((hi - lo) / np.float32(state.levels))
    return (lo + codes.astype(np.float32) * step).astype(np.float32)


def fp16_round(p: torch.Tensor) -> torch.Tensor:
    """Straight-through float16 rounding for positions."""
    return p + (p.to(torch.float16).to(p.dtype) - p).detach()


@dataclass
class CompressedScene:
    """Quantized per-Gaussian attributes plus the two quantized codebooks."""

    positions: np.ndarray      # (N, 3) float16
    opacity_q: np.ndarray      # (N,) u8, post-sigmoid
    eta_q: np.ndarray          # (N,) u8, pre-exp scale factor
    color_index: np.ndarray    # (N,) int
    shape_index: np.ndarray    # (N,) int
    color_codebook_q: np.ndarray  # (Kc_total, B*3) u8
    shape_quat_q: np.ndarray   # (Ks_total, 4) u8
    shape_scale_q: np.ndarray  # (Ks_total, 3) u8
    opacity_state: QuantState
    eta_state: QuantState
    color_state: QuantState
    quat_state: QuantState
    scale_state: QuantState
    k_color: int               # clustered entries; rows beyond are retained
    k_shape: int
    sh_coeffs: int = 16

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    def validate(self) -> None:
        if self.color_index.size and (self.color_index.min() < 0 or
                                      self.color_index.max() >= self.color_codebook_q.shape[0]):
            raise ValueError("color index out of codebook range")
        if self.shape_index.size and (self.shape_index.min() < 0 or
                                      self.shape_index.max() >= self.shape_quat_q.shape[0]):
            raise ValueError("shape index out of codebook range")


def _frozen_state(values: np.ndarray, bits: int = 8) -> QuantState:
    st = QuantState(bits=bits)
    st.running_min = float(np.min(values))
    st.running_max = float(np.max(values))
    st.frozen = True
    return st


def quantize_scene(scene: GaussianScene, color_book: Codebook, color_index: np.ndarray,
                   shape_book: Codebook, shape_index: np.ndarray,
                   eta: np.ndarray) -> CompressedScene:
    """Freeze clustered scene data into the 8-bit container representation."""
    alphas = 1.0 / (1.0 + np.exp(-scene.opacity_logits.astype(np.float64)))
    eta_pre = np.log(np.asarray(eta, dtype=np.float64))
    quats = shape_book.entries[:, :4]
    scales = shape_book.entries[:, 4:]

    st_o = _frozen_state(alphas)
    st_e = _frozen_state(eta_pre)
    st_c = _frozen_state(color_book.entries)
    st_q = _frozen_state(quats)
    st_s = _frozen_state(scales)
    return CompressedScene(
        positions=scene.positions.astype(np.float16),
        opacity_q=quantize_array(alphas, st_o),
        eta_q=quantize_array(eta_pre, st_e),
        color_index=np.asarray(color_index, dtype=np.int64),
        shape_index=np.asarray(shape_index, dtype=np.int64),
        color_codebook_q=quantize_array(color_book.entries, st_c),
        shape_quat_q=quantize_array(quats, st_q),
        shape_scale_q=quantize_array(scales, st_s),
        opacity_state=st_o, eta_state=st_e, color_state=st_c,
        quat_state=st_q, scale_state=st_s,
        k_color=color_book.clustered_count, k_shape=shape_book.clustered_count,
        sh_coeffs=scene.sh_coeffs,
    )


def dequantize_scene(c: CompressedScene) -> GaussianScene:
    """Expand codebooks and invert activations back to scene parameters."""
    c.validate()
    eta = np.exp(dequantize_array(c.eta_q, c.eta_state).astype(np.float64))
    quats = dequantize_array(c.shape_quat_q, c.quat_state).astype(np.float64)
    quats /= np.linalg.norm(quats, axis=1, keepdims=True)
    # the covariance depends on the scale only through its square, so flip
    # negative dequantized entries and floor them to keep log finite
    scales = np.abs(dequantize_array(c.shape_scale_q, c.scale_state).astype(np.float64))
    scales = np.maximum(scales, 1e-12)
    scales /= np.linalg.norm(scales, axis=1, keepdims=True)

    alphas = np.clip(dequantize_array(c.opacity_q, c.opacity_state).astype(np.float64),
                     1e-7, 1.0 - 1e-7)
    sh = dequantize_array(c.color_codebook_q, c.color_state)[c.color_index]
    return GaussianScene(
        positions=c.positions.astype(np.float32),
        rotations=quats[c.shape_index].astype(np.float32),
        log_scales=np.log(eta[:, None] * scales[c.shape_index]).astype(np.float32),
        opacity_logits=np.log(alphas / (1.0 - alphas)).astype(np.float32),
        sh=sh.reshape(c.n, c.sh_coeffs, 3),
    )


@dataclass
class FinetuneConfig:
    """Adam learning rates per parameter group (upstream splat defaults / 10).

    ``views_per_step`` averages the loss over that many training views per
    optimizer step; 0 means all views (deterministic full-batch steps, the
    right choice for short desk-scale runs).
    """

    lr_position: float = 1.6e-5   # additionally scaled by the scene extent
    lr_opacity: float = 5e-3
    lr_eta: float = 5e-4
    lr_quat: float = 1e-4
    lr_scale: float = 5e-4
    lr_sh_dc: float = 2.5e-4
    lr_sh_rest: float = 1.25e-5
    views_per_step: int = 1
    seed: int = 0

    def scaled(self, extent: float) -> "FinetuneConfig":
        return replace(self, lr_position=self.lr_position * max(extent, 1e-6))

    def scaled_rates(self, mult: float) -> "FinetuneConfig":
        return replace(self, lr_position=self.lr_position * mult,
                       lr_opacity=self.lr_opacity * mult, lr_eta=self.lr_eta * mult,
                       lr_quat=self.lr_quat * mult, lr_scale=self.lr_scale * mult,
                       lr_sh_dc=self.lr_sh_dc * mult, lr_sh_rest=self.lr_sh_rest * mult)


def _logit(a: np.ndarray) -> np.ndarray:
    a = np.clip(a, 1e-7, 1.0 - 1e-7)
    return np.log(a / (1.0 - a))


def finetune(c: CompressedScene, cameras: list[Camera], targets: list[np.ndarray],
             steps: int, config: FinetuneConfig | None = None, *,
             dtype: torch.dtype = torch.float32,
             on_step=None) -> CompressedScene:
    """Quantization-aware fine-tuning of the compressed representation.

    Free variables: per-Gaussian position, opacity and scale factor, plus both
    codebooks' entries (entry gradients accumulate over every Gaussian that
    references them).  Codebook indices stay frozen.  The loss is mean L1
    against the targets, one view per step, cycling in a seeded random order.
    """
    if steps == 0 or c.n == 0:
        return c
    if len(cameras) != len(targets):
        raise ValueError("need one target image per camera")
    config = config or FinetuneConfig()
    b = c.sh_coeffs

    # Quantizer ranges keep moving (EMA) during fine-tuning and are frozen for
    # export; copies leave the caller's scene decodable as it was.
    st_o, st_e, st_c, st_q, st_s = (
        replace(s, frozen=False) for s in
        (c.opacity_state, c.eta_state, c.color_state, c.quat_state, c.scale_state)
    )

    def leaf(x, dt=dtype):
        return torch.tensor(np.asarray(x, dtype=np.float64), dtype=dt, requires_grad=True)

    pos = leaf(c.positions.astype(np.float32))
    logits = leaf(_logit(dequantize_array(c.opacity_q, c.opacity_state)))
    eta_pre = leaf(dequantize_array(c.eta_q, c.eta_state))
    colors = dequantize_array(c.color_codebook_q, c.color_state).reshape(-1, b, 3)
    sh_dc = leaf(colors[:, :1])
    sh_rest = leaf(colors[:, 1:])
    quats = leaf(dequantize_array(c.shape_quat_q, c.quat_state))
    scales = leaf(dequantize_array(c.shape_scale_q, c.scale_state))

    extent = float(np.ptp(c.positions.astype(np.float32)))
    cfg = config.scaled(extent)
    opt = torch.optim.Adam([
        {"params": [pos], "lr": cfg.lr_position},
        {"params": [logits], "lr": cfg.lr_opacity},
        {"params": [eta_pre], "lr": cfg.lr_eta},
        {"params": [quats], "lr": cfg.lr_quat},
        {"params": [scales], "lr": cfg.lr_scale},
        {"params": [sh_dc], "lr": cfg.lr_sh_dc},
        {"params": [sh_rest], "lr": cfg.lr_sh_rest},
    ], eps=1e-15)

    color_idx = torch.from_numpy(c.color_index)
    shape_idx = torch.from_numpy(c.shape_index)
    targets_t = [torch.from_numpy(np.asarray(t, dtype=np.float64)).to(dtype).reshape(-1, 3)
                 for t in targets]

    rng = np.random.default_rng(config.seed)
    views_per_step = config.views_per_step or len(cameras)
    views_per_step = min(views_per_step, len(cameras))
    view_order = rng.permutation(len(cameras))
    cursor = 0
    for step in range(steps):
        view_ids = []
        for _ in range(views_per_step):
            if cursor >= len(view_order):
                view_order = rng.permutation(len(cameras))
                cursor = 0
            view_ids.append(int(view_order[cursor]))
            cursor += 1

        q_e = fake_quantize(quats, st_q)
        q_n = q_e / torch.linalg.norm(q_e, dim=-1, keepdim=True)
        s_e = fake_quantize(scales, st_s)
        s_n = s_e / torch.linalg.norm(s_e, dim=-1, keepdim=True)
        eta = torch.exp(fake_quantize(eta_pre, st_e))
        alpha = fake_quantize(torch.sigmoid(logits), st_o)
        sh_all = fake_quantize(torch.cat([sh_dc, sh_rest], dim=1), st_c)

        g_quat = q_n[shape_idx]
        g_scale = eta.unsqueeze(-1) * s_n[shape_idx]
        inputs = RenderInputs(
            positions=fp16_round(pos),
            cov6=covariance_from_t(g_quat, g_scale),
            alphas=alpha,
            sh=sh_all[color_idx],
        )
        loss = sum((_composite(inputs, cameras[vi], None, clamp=True, dilation=DILATION)
                    - targets_t[vi]).abs().mean() for vi in view_ids) / len(view_ids)
        if not torch.isfinite(loss):
            raise FloatingPointError(f"non-finite fine-tuning loss at step {step}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        if on_step is not None:
            on_step(step, float(loss.detach()))

    for st in (st_o, st_e, st_c, st_q, st_s):
        st.frozen = True
    with torch.no_grad():
        sh_np = torch.cat([sh_dc, sh_rest], dim=1).reshape(c.color_codebook_q.shape[0], -1).detach().numpy()
        return CompressedScene(
            positions=pos.detach().numpy().astype(np.float16),
            opacity_q=quantize_array(torch.sigmoid(logits).detach().numpy(), st_o),
            eta_q=quantize_array(eta_pre.detach().numpy(), st_e),
            color_index=c.color_index.copy(),
            shape_index=c.shape_index.copy(),
            color_codebook_q=quantize_array(sh_np, st_c),
            shape_quat_q=quantize_array(quats.detach().numpy(), st_q),
            shape_scale_q=quantize_array(scales.detach().numpy(), st_s),
            opacity_state=st_o, eta_state=st_e, color_state=st_c,
            quat_state=st_q, scale_state=st_s,
            k_color=c.k_color, k_shape=c.k_shape, sh_coeffs=c.sh_coeffs,
        )
