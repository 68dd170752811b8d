"""Full compression pipeline: sensitivity -> pruning -> clustering -> QA
fine-tuning -> Morton + entropy coding, with a per-stage report.

Every 8th camera is held out for the report's PSNR column; the remaining
cameras drive sensitivity and fine-tuning.  Stage PSNR is always measured
against renders of the unmodified input scene on the held-out views.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import codec
from .cameras import Camera
from .clustering import ClusterConfig, cluster_colors, cluster_shapes
from .image import psnr
from .quantization import FinetuneConfig, dequantize_scene, finetune, quantize_scene
from .render import render
from .scene import GaussianScene
from .sensitivity import parameter_sensitivity, prune_zero_sensitivity


@dataclass
class PipelineConfig:
    k_color: int = 4096
    k_shape: int = 4096
    beta_c: float = 6e-7
    beta_g: float = 3e-6
    decay: float = 0.8
    color_steps: int = 100
    shape_steps: int = 800
    color_batch: int = 2 ** 18
    shape_batch: int = 2 ** 20
    finetune_steps: int = 5000
    finetune: FinetuneConfig = field(default_factory=FinetuneConfig)
    seed: int = 0

    def __post_init__(self):
        assert min(self.k_color, self.k_shape, self.color_steps, self.shape_steps,
                   self.color_batch, self.shape_batch) > 0
        assert self.finetune_steps >= 0

    def color_cluster_config(self) -> ClusterConfig:
        return ClusterConfig(k=self.k_color, steps=self.color_steps,
                             batch_size=self.color_batch, decay=self.decay, seed=self.seed)

    def shape_cluster_config(self) -> ClusterConfig:
        return ClusterConfig(k=self.k_shape, steps=self.shape_steps,
                             batch_size=self.shape_batch, decay=self.decay, seed=self.seed + 1)


@dataclass
class StageRow:
    name: str
    size_bytes: int
    psnr_db: float


@dataclass
class StageReport:
    rows: list[StageRow] = field(default_factory=list)

    def add(self, name: str, size_bytes: int, psnr_db: float) -> None:
        self.rows.append(StageRow(name, int(size_bytes), float(psnr_db)))

    def __getitem__(self, name: str) -> StageRow:
        for row in self.rows:
            if row.name == name:
                return row
        raise KeyError(name)

    def to_text(self) -> str:
        lines = [f"{'stage':<20}{'size [bytes]':>14}{'PSNR [dB]':>12}"]
        for r in self.rows:
            p = "inf" if np.isinf(r.psnr_db) else f"{r.psnr_db:.2f}"
            lines.append(f"{r.name:<20}{r.size_bytes:>14}{p:>12}")
        return "\n".join(lines)


def split_cameras(cameras: list[Camera]) -> tuple[list[Camera], list[Camera]]:
    """(train, held_out): every 8th camera is held out when that leaves any."""
    held = cameras[::8]
    train = [c for i, c in enumerate(cameras) if i % 8 != 0]
    if not train:
        train = list(cameras)
    return train, held


def _raw_bytes(n: int, *, colors_clustered=False, shapes_clustered=False,
               kc: int = 0, ks: int = 0, quantized=False) -> int:
    """Uncompressed footprint of the intermediate representation."""
    if quantized:
        per_g = 3 * 2 + 1 + 1 + 4 + 4
        return n * per_g + kc * 48 + ks * 7 + 10 * 4
    per_g = 59
    if colors_clustered:
        per_g = per_g - 48 + 1
    if shapes_clustered:
        per_g = per_g - 7 + 2  # rot+scale replaced by index + eta
    cb = (kc * 48 if colors_clustered else 0) + (ks * 7 if shapes_clustered else 0)
    return (n * per_g + cb) * 4


def compress(scene: GaussianScene, cameras: list[Camera],
             targets: list[np.ndarray] | None = None,
             config: PipelineConfig | None = None) -> tuple[bytes, StageReport]:
    if not cameras:
        raise ValueError("at least one camera is required")
    config = config or PipelineConfig()
    train, held = split_cameras(cameras)
    report = StageReport()

    baseline = [render(scene, cam) for cam in held]

    def stage_psnr(s: GaussianScene) -> float:
        vals = [psnr(render(s, cam), ref) for cam, ref in zip(held, baseline)]
        return float(np.mean(vals))

    report.add("baseline", _raw_bytes(scene.n), float("inf"))

    field_ = parameter_sensitivity(scene, train)
    pruned, _removed = prune_zero_sensitivity(scene, field_)
    keep = field_.color_vector() > 0.0
    field_pruned = replace(
        field_,
        positions=field_.positions[keep], rotations=field_.rotations[keep],
        log_scales=field_.log_scales[keep], opacity_logits=field_.opacity_logits[keep],
        sh=field_.sh[keep], cov6=field_.cov6[keep],
    )
    report.add("pruning", _raw_bytes(pruned.n), stage_psnr(pruned))

    color_book, color_idx = cluster_colors(
        pruned, field_pruned.color_vector(), config.beta_c, config.color_cluster_config())
    after_color = pruned.with_(sh=color_book.entries[color_idx]
                               .reshape(pruned.n, pruned.sh_coeffs, 3).astype(np.float32))
    report.add("color-clustering",
               _raw_bytes(pruned.n, colors_clustered=True, kc=color_book.k_total),
               stage_psnr(after_color))

    shape_book, shape_idx, eta = cluster_shapes(
        pruned, field_pruned.shape_vector(), config.beta_g, config.shape_cluster_config())
    entry = shape_book.entries[shape_idx]
    after_shape = after_color.with_(
        rotations=entry[:, :4].astype(np.float32),
        log_scales=np.log(eta[:, None] * entry[:, 4:]).astype(np.float32),
    )
    report.add("shape-clustering",
               _raw_bytes(pruned.n, colors_clustered=True, shapes_clustered=True,
                          kc=color_book.k_total, ks=shape_book.k_total),
               stage_psnr(after_shape))

    compressed = quantize_scene(pruned, color_book, color_idx, shape_book, shape_idx, eta)
    quant_size = _raw_bytes(pruned.n, quantized=True,
                            kc=color_book.k_total, ks=shape_book.k_total)
    report.add("quantize", quant_size, stage_psnr(dequantize_scene(compressed)))

    if targets is None:
        targets = [render(scene, cam) for cam in train]
    elif len(targets) == len(cameras):
        targets = [t for i, t in enumerate(targets) if i % 8 != 0] or list(targets)
    ft = replace(config.finetune, seed=config.seed)
    compressed = finetune(compressed, train, targets, config.finetune_steps, ft)
    report.add("qa-finetune", quant_size, stage_psnr(dequantize_scene(compressed)))

    plain = codec.encode(compressed, permutation=np.arange(compressed.n))
    report.add("encode", len(plain), report["qa-finetune"].psnr_db)

    data = codec.encode(compressed)
    report.add("morton", len(data), report["qa-finetune"].psnr_db)
    return data, report
