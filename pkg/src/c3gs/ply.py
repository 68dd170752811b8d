"""Binary little-endian PLY reader/writer for the standard splat layout.

Required float attributes per vertex: x, y, z, f_dc_0..2, f_rest_0..44,
opacity, scale_0..2, rot_0..3.  Extra attributes (e.g. normals) are tolerated
on load and ignored; save_ply writes exactly the required set.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .scene import GaussianScene, normalize_quaternions


class PlyError(ValueError):
    pass


_DC = [f"f_dc_{i}" for i in range(3)]
_REST = [f"f_rest_{i}" for i in range(45)]
ATTRIBUTES = ["x", "y", "z", *_DC, *_REST, "opacity",
              "scale_0", "scale_1", "scale_2",
              "rot_0", "rot_1", "rot_2", "rot_3"]

_PLY_FLOAT_NAMES = {"float", "float32"}
_PLY_SIZES = {"char": 1, "uchar": 1, "short": 2, "ushort": 2, "int": 4, "uint": 4,
              "float": 4, "float32": 4, "double": 8, "float64": 8, "int8": 1,
              "uint8": 1, "int16": 2, "uint16": 2, "int32": 4, "uint32": 4}


def load_ply(data: bytes) -> GaussianScene:
    header_end = data.find(b"end_header\n")
    if header_end < 0:
        raise PlyError("malformed header: no end_header line")
    body_offset = header_end + len(b"end_header\n")
    lines = data[:header_end].decode("ascii", errors="replace").splitlines()
    if not lines or lines[0].strip() != "ply":
        raise PlyError("malformed header: missing 'ply' magic at byte 0")

    fmt = next((ln for ln in lines if ln.startswith("format")), None)
    if fmt is None or "binary_little_endian" not in fmt:
        raise PlyError("malformed header: only binary_little_endian PLY is supported")

    count = None
    props: list[tuple[str, str]] = []  # (type, name), in file order
    in_vertex = False
    for ln in lines:
        parts = ln.split()
        if not parts:
            continue
        if parts[0] == "element":
            in_vertex = parts[1] == "vertex"
            if in_vertex:
                count = int(parts[2])
        elif parts[0] == "property" and in_vertex:
            if parts[1] == "list":
                raise PlyError(f"unsupported list property '{parts[-1]}' in vertex element")
            props.append((parts[1], parts[2]))
    if count is None:
        raise PlyError("malformed header: no vertex element")

    names = [name for _, name in props]
    for attr in ATTRIBUTES:
        if attr not in names:
            raise PlyError(f"missing attribute '{attr}' in vertex properties")

    try:
        stride = sum(_PLY_SIZES[t] for t, _ in props)
    except KeyError as e:
        raise PlyError(f"unknown property type {e}") from None
    need = count * stride
    if len(data) - body_offset < need:
        raise PlyError(
            f"truncated payload: need {need} bytes after offset {body_offset}, "
            f"have {len(data) - body_offset}"
        )

    dtype = np.dtype([(name, "<" + {"float": "f4", "float32": "f4", "double": "f8",
                                    "char": "i1", "uchar": "u1", "short": "i2",
                                    "ushort": "u2", "int": "i4", "uint": "u4",
                                    "int8": "i1", "uint8": "u1", "int16": "i2",
                                    "uint16": "u2", "int32": "i4", "uint32": "u4",
                                    "float64": "f8"}[t]) for t, name in props])
    rows = np.frombuffer(data, dtype=dtype, count=count, offset=body_offset)

    def cols(names_: list[str]) -> np.ndarray:
        return np.stack([rows[n].astype(np.float32) for n in names_], axis=-1)

    sh = np.empty((count, 16, 3), dtype=np.float32)
    sh[:, 0, :] = cols(_DC)
    # f_rest is stored channel-major: 15 coeffs for R, then G, then B.
    rest = cols(_REST).reshape(count, 3, 15)
    sh[:, 1:, :] = np.transpose(rest, (0, 2, 1))

    return GaussianScene(
        positions=cols(["x", "y", "z"]),
        rotations=normalize_quaternions(cols(["rot_0", "rot_1", "rot_2", "rot_3"])),
        log_scales=cols(["scale_0", "scale_1", "scale_2"]),
        opacity_logits=rows["opacity"].astype(np.float32),
        sh=sh,
    )


def save_ply(scene: GaussianScene) -> bytes:
    n = scene.n
    if scene.sh_coeffs != 16:
        raise PlyError(f"PLY layout requires 16 SH coefficients, scene has {scene.sh_coeffs}")
    header = "\n".join(
        ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
        + [f"property float {a}" for a in ATTRIBUTES]
        + ["end_header", ""]
    ).encode("ascii")

    out = np.empty((n, len(ATTRIBUTES)), dtype="<f4")
    out[:, 0:3] = scene.positions
    out[:, 3:6] = scene.sh[:, 0, :]
    out[:, 6:51] = np.transpose(scene.sh[:, 1:, :], (0, 2, 1)).reshape(n, 45)
    out[:, 51] = scene.opacity_logits
    out[:, 52:55] = scene.log_scales
    out[:, 55:59] = scene.rotations
    return header + out.tobytes()


def load_ply_file(path: str | Path) -> GaussianScene:
    return load_ply(Path(path).read_bytes())


def save_ply_file(scene: GaussianScene, path: str | Path) -> None:
    Path(path).write_bytes(save_ply(scene))
