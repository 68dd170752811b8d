"""Bit-exact `.c3gs` container: Morton ordering + per-section DEFLATE.

Layout (all little-endian, byte tables in docs/container.md):

  magic "C3GS" | version u16 | header | section table | section payloads

The header stores counts, codebook sizes, bit widths, the scene AABB and the
full quantizer min/max table.  Each section is an independently
zlib-compressed stream with its own CRC32 (computed over the compressed
bytes), so a streaming client can validate and inflate sections as they
arrive.  Codebook indices are bit-packed at ceil(log2(K_total)) bits.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .quantization import CompressedScene, QuantState

MAGIC = b"C3GS"
VERSION = 1
MORTON_BITS = 21

SECTION_NAMES = ["positions", "opacity", "eta", "color_indices", "shape_indices",
                 "color_codebook", "shape_codebook"]


class ContainerError(ValueError):
    """Base class for malformed-container errors."""


class BadMagicError(ContainerError):
    pass


class VersionError(ContainerError):
    pass


class ChecksumError(ContainerError):
    def __init__(self, section: str):
        super().__init__(f"CRC mismatch in section '{section}'")
        self.section = section


class TruncatedError(ContainerError):
    pass


# -- Morton order ------------------------------------------------------------

def _part1by2(x: np.ndarray) -> np.ndarray:
    """Spread the low 21 bits of x so bit i lands at position 3i."""
    x = x.astype(np.uint64) & np.uint64(0x1FFFFF)
    x = (x | (x << np.uint64(32))) & np.uint64(0x1F00000000FFFF)
    x = (x | (x << np.uint64(16))) & np.uint64(0x1F0000FF0000FF)
    x = (x | (x << np.uint64(8))) & np.uint64(0x100F00F00F00F00F)
    x = (x | (x << np.uint64(4))) & np.uint64(0x10C30C30C30C30C3)
    x = (x | (x << np.uint64(2))) & np.uint64(0x1249249249249249)
    return x


def morton_key(grid: np.ndarray) -> np.ndarray:
    """Interleave integer grid coordinates (N, 3) into 63-bit keys."""
    g = np.asarray(grid, dtype=np.uint64)
    return _part1by2(g[..., 0]) | (_part1by2(g[..., 1]) << np.uint64(1)) \
        | (_part1by2(g[..., 2]) << np.uint64(2))


def position_grid(positions: np.ndarray, aabb: tuple[np.ndarray, np.ndarray],
                  bits: int = MORTON_BITS) -> np.ndarray:
    """Quantize positions onto the AABB grid; degenerate axes collapse to 0."""
    lo, hi = (np.asarray(v, dtype=np.float64) for v in aabb)
    span = hi - lo
    levels = (1 << bits) - 1
    p = np.clip(np.asarray(positions, dtype=np.float64), lo, hi)
    with np.errstate(invalid="ignore", divide="ignore"):
        g = np.floor((p - lo) / span * levels)
    g[:, span <= 0] = 0
    return np.clip(g, 0, levels).astype(np.uint64)


def morton_sort(positions: np.ndarray, aabb: tuple[np.ndarray, np.ndarray] | None = None) -> np.ndarray:
    """Permutation of [0, N) ordering Gaussians along the Z-curve."""
    positions = np.asarray(positions, dtype=np.float64)
    if aabb is None:
        if positions.shape[0] == 0:
            return np.zeros(0, dtype=np.int64)
        aabb = (positions.min(axis=0), positions.max(axis=0))
    keys = morton_key(position_grid(positions, aabb))
    return np.argsort(keys, kind="stable")


# -- serialization -----------------------------------------------------------

def _pack_bits(values: np.ndarray, bits: int) -> bytes:
    """LSB-first bit packing of unsigned integers."""
    if bits == 0:
        return b""
    v = np.asarray(values, dtype=np.uint64)
    n = v.size
    out = np.zeros((n * bits + 7) // 8, dtype=np.uint8)
    bitpos = np.arange(n, dtype=np.uint64) * np.uint64(bits)
    for b in range(bits):
        pos = bitpos + np.uint64(b)
        byte_idx = (pos >> np.uint64(3)).astype(np.int64)
        np.bitwise_or.at(out, byte_idx,
                         (((v >> np.uint64(b)) & np.uint64(1)) << (pos & np.uint64(7))).astype(np.uint8))
    return out.tobytes()


def _unpack_bits(data: bytes, bits: int, count: int) -> np.ndarray:
    if bits == 0:
        return np.zeros(count, dtype=np.int64)
    raw = np.frombuffer(data, dtype=np.uint8).astype(np.uint64)
    out = np.zeros(count, dtype=np.uint64)
    bitpos = np.arange(count, dtype=np.uint64) * np.uint64(bits)
    for b in range(bits):
        pos = bitpos + np.uint64(b)
        byte_idx = (pos >> np.uint64(3)).astype(np.int64)
        out |= ((raw[byte_idx] >> (pos & np.uint64(7))) & np.uint64(1)) << np.uint64(b)
    return out.astype(np.int64)


def index_bits(k_total: int) -> int:
    return int(k_total - 1).bit_length() if k_total > 1 else 0


_HEADER = struct.Struct("<IIIII BBBB 6f 10f")  # counts | widths | aabb | minmax table


def _state_pair(st: QuantState) -> tuple[float, float]:
    return float(st.running_min), float(st.running_max)


def encode(c: CompressedScene, *, permutation: np.ndarray | None = None,
           level: int = 9) -> bytes:
    """Serialize; Gaussians are permuted to Morton order unless overridden."""
    c.validate()
    n = c.n
    pos32 = c.positions.astype(np.float32)
    if n == 0:
        aabb_lo = aabb_hi = np.zeros(3, dtype=np.float64)
        perm = np.zeros(0, dtype=np.int64)
    else:
        aabb_lo, aabb_hi = pos32.min(axis=0).astype(np.float64), pos32.max(axis=0).astype(np.float64)
        perm = morton_sort(pos32, (aabb_lo, aabb_hi)) if permutation is None else np.asarray(permutation)

    cbits = index_bits(c.color_codebook_q.shape[0])
    sbits = index_bits(c.shape_quat_q.shape[0])

    sections = [
        np.ascontiguousarray(c.positions[perm]).view(np.uint16).astype("<u2").tobytes(),
        c.opacity_q[perm].tobytes(),
        c.eta_q[perm].tobytes(),
        _pack_bits(c.color_index[perm], cbits),
        _pack_bits(c.shape_index[perm], sbits),
        np.ascontiguousarray(c.color_codebook_q).tobytes(),
        np.ascontiguousarray(c.shape_quat_q).tobytes() + np.ascontiguousarray(c.shape_scale_q).tobytes(),
    ]

    minmax = (_state_pair(c.opacity_state) + _state_pair(c.eta_state)
              + _state_pair(c.color_state) + _state_pair(c.quat_state)
              + _state_pair(c.scale_state))
    header = _HEADER.pack(
        n, c.k_color, c.color_codebook_q.shape[0], c.k_shape, c.shape_quat_q.shape[0],
        c.sh_coeffs, 8, cbits, sbits,
        *aabb_lo.astype(np.float32), *aabb_hi.astype(np.float32),
        *minmax,
    )

    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<H", VERSION)
    blob += header
    table = bytearray()
    payload = bytearray()
    for raw in sections:
        comp = zlib.compress(raw, level)
        table += struct.pack("<II", len(comp), zlib.crc32(comp))
        payload += comp
    blob += table
    blob += payload
    return bytes(blob)


def decode(data: bytes) -> CompressedScene:
    """Inverse of :func:`encode`; bit-exact, in container (Morton) order."""
    if len(data) < 6:
        raise TruncatedError("container shorter than magic + version")
    if data[:4] != MAGIC:
        raise BadMagicError(f"bad magic {data[:4]!r}")
    (version,) = struct.unpack_from("<H", data, 4)
    if version != VERSION:
        raise VersionError(f"unsupported container version {version}")
    off = 6
    if len(data) < off + _HEADER.size:
        raise TruncatedError("truncated header")
    fields = _HEADER.unpack_from(data, off)
    off += _HEADER.size
    n, k_color, kt_color, k_shape, kt_shape = fields[:5]
    sh_coeffs, _attr_bits, cbits, sbits = fields[5:9]
    minmax = fields[15:25]

    table = []
    for name in SECTION_NAMES:
        if len(data) < off + 8:
            raise TruncatedError(f"truncated section table at '{name}'")
        size, crc = struct.unpack_from("<II", data, off)
        off += 8
        table.append((name, size, crc))
    raws = {}
    for name, size, crc in table:
        comp = data[off:off + size]
        if len(comp) < size:
            raise TruncatedError(f"truncated section '{name}'")
        off += size
        if zlib.crc32(comp) != crc:
            raise ChecksumError(name)
        raws[name] = zlib.decompress(comp)

    def state(i: int, bits: int = 8) -> QuantState:
        st = QuantState(bits=bits)
        st.running_min, st.running_max = minmax[2 * i], minmax[2 * i + 1]
        st.frozen = True
        return st

    try:
        positions = np.frombuffer(raws["positions"], dtype="<u2").view(np.float16).reshape(n, 3)
        opacity_q = np.frombuffer(raws["opacity"], dtype=np.uint8).copy()
        eta_q = np.frombuffer(raws["eta"], dtype=np.uint8).copy()
        color_index = _unpack_bits(raws["color_indices"], cbits, n)
        shape_index = _unpack_bits(raws["shape_indices"], sbits, n)
        color_cb = np.frombuffer(raws["color_codebook"], dtype=np.uint8).reshape(kt_color, sh_coeffs * 3)
        shape_raw = raws["shape_codebook"]
        quat_q = np.frombuffer(shape_raw[: kt_shape * 4], dtype=np.uint8).reshape(kt_shape, 4)
        scale_q = np.frombuffer(shape_raw[kt_shape * 4:], dtype=np.uint8).reshape(kt_shape, 3)
    except (ValueError, IndexError) as e:
        raise TruncatedError(f"section sizes inconsistent with header: {e}") from None

    c = CompressedScene(
        positions=positions.copy(), opacity_q=opacity_q, eta_q=eta_q,
        color_index=color_index, shape_index=shape_index,
        color_codebook_q=color_cb.copy(), shape_quat_q=quat_q.copy(),
        shape_scale_q=scale_q.copy(),
        opacity_state=state(0), eta_state=state(1), color_state=state(2),
        quat_state=state(3), scale_state=state(4),
        k_color=k_color, k_shape=k_shape, sh_coeffs=sh_coeffs,
    )
    c.validate()
    return c


@dataclass
class SizeReport:
    section_bytes: dict[str, int]
    header_bytes: int
    total_bytes: int
    uncompressed_bytes: int

    @property
    def ratio(self) -> float:
        return self.uncompressed_bytes / self.total_bytes if self.total_bytes else 0.0

    def to_text(self) -> str:
        lines = [f"{'section':<16}{'bytes':>12}"]
        lines.append(f"{'header':<16}{self.header_bytes:>12}")
        for name, size in self.section_bytes.items():
            lines.append(f"{name:<16}{size:>12}")
        lines.append(f"{'total':<16}{self.total_bytes:>12}")
        lines.append(f"uncompressed    {self.uncompressed_bytes:>12}  (ratio {self.ratio:.2f}x)")
        return "\n".join(lines)


def report(data: bytes, original_n: int) -> SizeReport:
    """Per-section sizes and the ratio vs the raw 59-scalar float32 layout."""
    if data[:4] != MAGIC:
        raise BadMagicError(f"bad magic {data[:4]!r}")
    off = 6 + _HEADER.size
    sizes = {}
    for name in SECTION_NAMES:
        size, _ = struct.unpack_from("<II", data, off)
        off += 8
        sizes[name] = size
    header_bytes = 6 + _HEADER.size + 8 * len(SECTION_NAMES)
    return SizeReport(
        section_bytes=sizes,
        header_bytes=header_bytes,
        total_bytes=len(data),
        uncompressed_bytes=original_n * 59 * 4,
    )
