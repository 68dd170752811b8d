"""Compressed 3D Gaussian-splat scenes: codec, reference renderer, pipeline."""

from .cameras import Camera, load_cameras, look_at, orbit_cameras, save_cameras
from .clustering import ClusterConfig, Codebook, cluster_colors, cluster_shapes, weighted_kmeans
from .codec import decode, encode, morton_sort, report
from .image import load_png, psnr, save_png
from .pipeline import PipelineConfig, StageReport, compress
from .ply import load_ply, load_ply_file, save_ply, save_ply_file
from .quantization import (CompressedScene, FinetuneConfig, QuantState,
                           dequantize_scene, fake_quantize, finetune, quantize_scene)
from .render import SceneGradients, Splat2D, cull, project, render, render_backward
from .scene import (GaussianScene, covariance_from, eigendecompose_covariance,
                    normalize_covariance)
from .sensitivity import (SensitivityField, parameter_sensitivity,
                          prune_zero_sensitivity, split_by_threshold, vector_sensitivity)
from .sh import sh_eval
from .synth import SynthSpec, synth_cameras, synth_scene

__version__ = "0.1.0"
