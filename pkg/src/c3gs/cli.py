"""Command-line front end: compress, decompress, render, metrics, info, synth.

Exit codes: 0 success, 1 usage, 2 I/O failure, 3 data corruption.  With
``--json`` each invocation emits one self-contained JSON document on stdout.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import codec
from .cameras import load_cameras, save_cameras
from .image import load_png, psnr, save_png
from .pipeline import PipelineConfig, compress
from .ply import PlyError, load_ply_file, save_ply_file
from .quantization import dequantize_scene
from .render import render
from .scene import GaussianScene, ZeroQuaternionError
from .synth import SynthSpec, synth_cameras, synth_scene


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def load_scene(path: str) -> GaussianScene:
    data = Path(path).read_bytes()
    if data[:4] == codec.MAGIC:
        return dequantize_scene(codec.decode(data))
    return load_ply_file(path)


def _emit(args, doc: dict, text: str) -> None:
    if args.json:
        print(json.dumps(doc))
    else:
        print(text)


def cmd_compress(args) -> int:
    scene = load_scene(args.input)
    cameras = load_cameras(args.cameras)
    targets = None
    if args.images:
        files = sorted(Path(args.images).glob("*.png"))
        if len(files) != len(cameras):
            raise UsageError(f"{len(files)} images for {len(cameras)} cameras")
        targets = [load_png(f) for f in files]
    config = PipelineConfig(
        k_color=args.k_color, k_shape=args.k_shape,
        beta_c=args.beta_c, beta_g=args.beta_g,
        finetune_steps=args.finetune_steps, seed=args.seed,
    )
    data, report = compress(scene, cameras, targets, config)
    Path(args.output).write_bytes(data)
    doc = {"output": args.output, "bytes": len(data),
           "stages": [{"name": r.name, "size_bytes": r.size_bytes, "psnr_db": r.psnr_db}
                      for r in report.rows]}
    _emit(args, doc, report.to_text() + f"\nwrote {len(data)} bytes to {args.output}")
    return 0


def cmd_decompress(args) -> int:
    scene = dequantize_scene(codec.decode(Path(args.input).read_bytes()))
    save_ply_file(scene, args.output)
    _emit(args, {"output": args.output, "gaussians": scene.n},
          f"wrote {scene.n} Gaussians to {args.output}")
    return 0


def cmd_render(args) -> int:
    scene = load_scene(args.input)
    cams = load_cameras(args.camera)
    if len(cams) != 1:
        raise UsageError(f"render expects exactly one camera, file has {len(cams)}")
    img = render(scene, cams[0])
    save_png(img, args.output)
    _emit(args, {"output": args.output, "width": cams[0].width, "height": cams[0].height},
          f"rendered {cams[0].width}x{cams[0].height} to {args.output}")
    return 0


def cmd_metrics(args) -> int:
    scene_a = load_scene(args.a)
    scene_b = load_scene(args.b)
    cams = load_cameras(args.cameras)
    values = [psnr(render(scene_a, c), render(scene_b, c)) for c in cams]
    mean = float(np.mean(values))
    doc = {"per_view_psnr_db": values, "mean_psnr_db": mean}
    text = "\n".join(f"view {i}: {v:.3f} dB" for i, v in enumerate(values))
    _emit(args, doc, text + f"\nmean: {mean:.3f} dB")
    return 0


def cmd_info(args) -> int:
    data = Path(args.input).read_bytes()
    c = codec.decode(data)
    rep = codec.report(data, c.n)
    doc = {"gaussians": c.n, "sh_coeffs": c.sh_coeffs,
           "k_color": c.k_color, "k_total_color": int(c.color_codebook_q.shape[0]),
           "k_shape": c.k_shape, "k_total_shape": int(c.shape_quat_q.shape[0]),
           "sections": rep.section_bytes, "header_bytes": rep.header_bytes,
           "total_bytes": rep.total_bytes}
    text = (f"gaussians: {c.n}\nsh coefficients: {c.sh_coeffs}\n"
            f"color codebook: {c.k_color} clustered / {c.color_codebook_q.shape[0]} total\n"
            f"shape codebook: {c.k_shape} clustered / {c.shape_quat_q.shape[0]} total\n"
            + rep.to_text())
    _emit(args, doc, text)
    return 0


def cmd_synth(args) -> int:
    spec = SynthSpec(n=args.n, shape_prototypes=args.prototypes,
                     color_prototypes=args.prototypes,
                     shape_noise=args.shape_noise, color_noise=args.color_noise,
                     eta_jitter=args.eta_jitter)
    scene = synth_scene(spec, seed=args.seed)
    save_ply_file(scene, args.output)
    if args.cameras_out:
        save_cameras(synth_cameras(spec, n_views=args.views, width=args.size,
                                   height=args.size), args.cameras_out)
    _emit(args, {"output": args.output, "gaussians": scene.n},
          f"wrote {scene.n} Gaussians to {args.output}")
    return 0


def build_parser() -> _Parser:
    p = _Parser(prog="c3gs", description=__doc__)
    p.add_argument("--json", action="store_true", help="emit one JSON document")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compress", help="compress a PLY scene into a .c3gs container")
    c.add_argument("input")
    c.add_argument("-o", "--output", required=True)
    c.add_argument("--cameras", required=True, help="JSON camera list for training views")
    c.add_argument("--images", help="directory of target PNGs (default: self-render)")
    c.add_argument("--k-color", type=int, default=4096)
    c.add_argument("--k-shape", type=int, default=4096)
    c.add_argument("--beta-c", type=float, default=6e-7)
    c.add_argument("--beta-g", type=float, default=3e-6)
    c.add_argument("--finetune-steps", type=int, default=5000)
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_compress)

    d = sub.add_parser("decompress", help="expand a .c3gs container back to PLY")
    d.add_argument("input")
    d.add_argument("-o", "--output", required=True)
    d.set_defaults(func=cmd_decompress)

    r = sub.add_parser("render", help="render a scene to PNG")
    r.add_argument("input", help=".ply or .c3gs scene")
    r.add_argument("--camera", required=True)
    r.add_argument("-o", "--output", required=True)
    r.set_defaults(func=cmd_render)

    m = sub.add_parser("metrics", help="per-view and mean PSNR between two scenes")
    m.add_argument("a")
    m.add_argument("b")
    m.add_argument("--cameras", required=True)
    m.set_defaults(func=cmd_metrics)

    i = sub.add_parser("info", help="container header and per-section sizes")
    i.add_argument("input")
    i.set_defaults(func=cmd_info)

    s = sub.add_parser("synth", help="generate a synthetic scene (and cameras)")
    s.add_argument("--prototypes", type=int, default=32)
    s.add_argument("-n", type=int, default=5000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--cameras-out")
    s.add_argument("--views", type=int, default=8)
    s.add_argument("--size", type=int, default=64, help="view width and height")
    s.add_argument("--shape-noise", type=float, default=0.05)
    s.add_argument("--color-noise", type=float, default=0.02)
    s.add_argument("--eta-jitter", type=float, default=0.1)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except (FileNotFoundError, PermissionError, IsADirectoryError) as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 2
    except (codec.ContainerError, PlyError, ZeroQuaternionError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
