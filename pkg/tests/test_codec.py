import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from c3gs import codec
from c3gs.codec import (BadMagicError, ChecksumError, TruncatedError,
                        VersionError, decode, encode, index_bits, morton_key,
                        morton_sort, position_grid, report)
from c3gs.quantization import dequantize_scene
from c3gs.render import render
from c3gs.synth import SynthSpec, synth_cameras, synth_scene

from test_quantization import compress_scene


def random_compressed(n=50, seed=0, k=8):
    scene = synth_scene(SynthSpec(n=n, shape_prototypes=4, color_prototypes=4,
                                  shape_noise=0.02, color_noise=0.02), seed=seed)
    return compress_scene(scene, k=k, seed=seed)


def assert_scenes_equal(a, b):
    assert a.positions.tobytes() == b.positions.tobytes()
    assert a.opacity_q.tobytes() == b.opacity_q.tobytes()
    assert a.eta_q.tobytes() == b.eta_q.tobytes()
    assert np.array_equal(a.color_index, b.color_index)
    assert np.array_equal(a.shape_index, b.shape_index)
    assert a.color_codebook_q.tobytes() == b.color_codebook_q.tobytes()
    assert a.shape_quat_q.tobytes() == b.shape_quat_q.tobytes()
    assert a.shape_scale_q.tobytes() == b.shape_scale_q.tobytes()
    for name in ("opacity_state", "eta_state", "color_state", "quat_state", "scale_state"):
        sa, sb = getattr(a, name), getattr(b, name)
        assert np.float32(sa.running_min) == np.float32(sb.running_min)
        assert np.float32(sa.running_max) == np.float32(sb.running_max)
    assert (a.k_color, a.k_shape, a.sh_coeffs) == (b.k_color, b.k_shape, b.sh_coeffs)


class TestMorton:
    def test_demo_grid_key(self):
        assert morton_key(np.array([[1, 2, 3]], dtype=np.uint64))[0] == 53

    def test_origin_is_zero(self):
        assert morton_key(np.array([[0, 0, 0]], dtype=np.uint64))[0] == 0

    def test_monotone_per_axis(self):
        rng = np.random.default_rng(0)
        base = rng.integers(0, 2 ** 21 - 2, size=(200, 3)).astype(np.uint64)
        for axis in range(3):
            bumped = base.copy()
            bumped[:, axis] += 1
            assert np.all(morton_key(bumped) > morton_key(base))

    @given(st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=20, deadline=None)
    def test_sort_is_permutation(self, seed):
        rng = np.random.default_rng(seed)
        pos = rng.normal(size=(64, 3))
        perm = morton_sort(pos)
        assert np.array_equal(np.sort(perm), np.arange(64))

    def test_degenerate_axis_collapses(self):
        pos = np.array([[0.0, 5.0, 1.0], [1.0, 5.0, 0.0]])
        grid = position_grid(pos, (pos.min(0), pos.max(0)))
        assert np.all(grid[:, 1] == 0)

    def test_stable_tie_break(self):
        pos = np.zeros((4, 3))
        assert morton_sort(pos).tolist() == [0, 1, 2, 3]

    def test_index_bits(self):
        assert index_bits(4096) == 12
        assert index_bits(1) == 0
        assert index_bits(2) == 1
        assert index_bits(65) == 7


class TestContainer:
    def test_roundtrip_bit_exact(self):
        for seed in range(5):
            c = random_compressed(n=40 + seed, seed=seed)
            blob = encode(c)
            again = decode(blob)
            # decode returns Morton order; re-encode must be byte-identical
            assert encode(again) == blob

    def test_decode_preserves_values(self):
        c = random_compressed(n=30, seed=3)
        perm = morton_sort(c.positions.astype(np.float32))
        got = decode(encode(c))
        assert got.positions.tobytes() == c.positions[perm].tobytes()
        assert np.array_equal(got.color_index, c.color_index[perm])
        assert got.color_codebook_q.tobytes() == c.color_codebook_q.tobytes()

    def test_empty_container(self):
        scene = synth_scene(SynthSpec(n=2, shape_prototypes=1, color_prototypes=1), seed=0)
        c = compress_scene(scene, k=1)
        c = type(c)(
            positions=c.positions[:0], opacity_q=c.opacity_q[:0], eta_q=c.eta_q[:0],
            color_index=c.color_index[:0], shape_index=c.shape_index[:0],
            color_codebook_q=c.color_codebook_q, shape_quat_q=c.shape_quat_q,
            shape_scale_q=c.shape_scale_q, opacity_state=c.opacity_state,
            eta_state=c.eta_state, color_state=c.color_state,
            quat_state=c.quat_state, scale_state=c.scale_state,
            k_color=c.k_color, k_shape=c.k_shape, sh_coeffs=c.sh_coeffs)
        blob = encode(c)
        got = decode(blob)
        assert got.n == 0
        rep = report(blob, 0)
        assert rep.total_bytes == len(blob)

    def test_bad_magic(self):
        with pytest.raises(BadMagicError):
            decode(b"NOPE" + b"\x00" * 100)

    def test_version_mismatch(self):
        blob = bytearray(encode(random_compressed(n=5)))
        blob[4:6] = (99).to_bytes(2, "little")
        with pytest.raises(VersionError):
            decode(bytes(blob))

    def test_checksum_names_section(self):
        c = random_compressed(n=20, seed=1)
        blob = bytearray(encode(c))
        blob[-1] ^= 0xFF  # corrupt the last section payload
        with pytest.raises(ChecksumError, match="shape_codebook"):
            decode(bytes(blob))

    def test_truncated(self):
        blob = encode(random_compressed(n=20, seed=2))
        with pytest.raises(TruncatedError):
            decode(blob[: len(blob) - 10])
        with pytest.raises(TruncatedError):
            decode(blob[:8])

    def test_morton_order_compresses_better(self):
        scene = synth_scene(SynthSpec(n=10000, shape_prototypes=16, color_prototypes=16),
                            seed=4)
        c = compress_scene(scene, k=32)
        with_morton = len(encode(c))
        rng = np.random.default_rng(11)
        shuffled = len(encode(c, permutation=rng.permutation(c.n)))
        assert with_morton <= 0.95 * shuffled

    def test_decoded_scene_renders_identically(self):
        spec = SynthSpec(n=60, shape_prototypes=4, color_prototypes=4)
        scene = synth_scene(spec, seed=6)
        c = compress_scene(scene, k=8)
        cam = synth_cameras(spec, n_views=1, width=32, height=32)[0]
        before = render(dequantize_scene(c), cam, dtype=torch.float64)
        after = render(dequantize_scene(decode(encode(c))), cam, dtype=torch.float64)
        assert before.tobytes() == after.tobytes()


class TestReport:
    def test_ratio_matches_manual_division(self):
        c = random_compressed(n=25, seed=5)
        blob = encode(c)
        rep = report(blob, 25)
        assert rep.uncompressed_bytes == 25 * 59 * 4
        assert rep.ratio == pytest.approx(rep.uncompressed_bytes / len(blob))
        assert sum(rep.section_bytes.values()) + rep.header_bytes == len(blob)

    def test_text_render(self):
        rep = report(encode(random_compressed(n=5)), 5)
        text = rep.to_text()
        assert "positions" in text and "ratio" in text
