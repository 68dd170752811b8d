import numpy as np
import pytest
import torch

from c3gs.clustering import (ClusterConfig, cluster_colors, cluster_shapes,
                             kmeans_objective, weighted_kmeans)
from c3gs.scene import cov6_trace, covariance_from, normalize_covariance
from c3gs.sensitivity import parameter_sensitivity

from conftest import random_scene, make_camera


def lloyd_oracle(vectors, weights, init, iters):
    """Textbook weighted Lloyd's: assign by distance, weighted means."""
    centroids = np.array(init, dtype=np.float64)
    for _ in range(iters):
        assign = np.array([int(np.argmin(((v - centroids) ** 2).sum(axis=1)))
                           for v in vectors])
        for k in range(centroids.shape[0]):
            members = [i for i in range(len(vectors)) if assign[i] == k]
            wsum = sum(weights[i] for i in members)
            if wsum > 0:
                centroids[k] = sum(weights[i] * vectors[i] for i in members) / wsum
    assign = np.array([int(np.argmin(((v - centroids) ** 2).sum(axis=1)))
                       for v in vectors])
    return centroids, assign


class TestWeightedKmeans:
    def test_matches_lloyd_oracle(self):
        rng = np.random.default_rng(0)
        for trial in range(20):
            m = int(rng.integers(8, 64))
            d = int(rng.integers(1, 5))
            k = int(rng.integers(1, 5))
            vectors = rng.normal(size=(m, d))
            weights = rng.uniform(0.1, 2.0, size=m)
            lo, hi = vectors.min(axis=0), vectors.max(axis=0)
            init = lo + rng.random((k, d)) * (hi - lo)
            cfg = ClusterConfig(k=k, steps=7, batch_size=m, decay=0.8,
                                seed=trial, exact_update=True)
            cents, assign = weighted_kmeans(vectors, weights, cfg, init=init)
            oc, oa = lloyd_oracle(vectors, weights, init, iters=7)
            ours = kmeans_objective(vectors, weights, cents, assign)
            theirs = kmeans_objective(vectors, weights, oc, oa)
            assert abs(ours - theirs) <= 1e-9 * max(1.0, abs(theirs))

    def test_k_equals_m_zero_error(self):
        # each point being its own centroid is a fixed point of the update rule
        rng = np.random.default_rng(3)
        vectors = rng.normal(size=(8, 3)) * 5.0
        cfg = ClusterConfig(k=8, steps=10, batch_size=8, seed=1, exact_update=True)
        cents, assign = weighted_kmeans(vectors, np.ones(8), cfg, init=vectors)
        assert np.array_equal(assign, np.arange(8))
        assert kmeans_objective(vectors, np.ones(8), cents, assign) == 0.0

    def test_k_equals_m_converges_from_random_init(self):
        # seed chosen so random init reaches the all-singletons optimum
        rng = np.random.default_rng(3)
        vectors = rng.normal(size=(6, 2)) * 5.0
        for seed in range(32):
            cfg = ClusterConfig(k=6, steps=60, batch_size=6, seed=seed, exact_update=True)
            cents, assign = weighted_kmeans(vectors, np.ones(6), cfg)
            if kmeans_objective(vectors, np.ones(6), cents, assign) < 1e-18:
                return
        raise AssertionError("no seed converged to zero quantization error")

    def test_weight_scale_invariance(self):
        rng = np.random.default_rng(4)
        vectors = rng.normal(size=(40, 5))
        weights = rng.uniform(0.1, 1.0, size=40)
        cfg = ClusterConfig(k=6, steps=12, batch_size=16, seed=7)
        c1, a1 = weighted_kmeans(vectors, weights, cfg)
        c2, a2 = weighted_kmeans(vectors, weights * 2.0, cfg)
        assert np.array_equal(a1, a2)
        assert np.allclose(c1, c2, atol=1e-12)

    def test_deterministic(self):
        rng = np.random.default_rng(5)
        vectors = rng.normal(size=(64, 4))
        cfg = ClusterConfig(k=5, steps=10, batch_size=32, seed=3)
        c1, a1 = weighted_kmeans(vectors, np.ones(64), cfg)
        c2, a2 = weighted_kmeans(vectors, np.ones(64), cfg)
        assert c1.tobytes() == c2.tobytes() and np.array_equal(a1, a2)

    def test_final_assignment_optimal(self):
        rng = np.random.default_rng(6)
        vectors = rng.normal(size=(30, 3))
        cfg = ClusterConfig(k=4, steps=5, batch_size=10, seed=2)
        cents, assign = weighted_kmeans(vectors, rng.uniform(0.0, 1.0, size=30), cfg)
        d2 = ((vectors[:, None, :] - cents[None]) ** 2).sum(axis=2)
        assert np.array_equal(assign, d2.argmin(axis=1))

    def test_all_zero_weights_error(self):
        with pytest.raises(ValueError, match="zero"):
            weighted_kmeans(np.ones((4, 2)), np.zeros(4), ClusterConfig(k=2, steps=1, batch_size=4))

    def test_k_clamped_with_warning(self):
        with pytest.warns(UserWarning, match="clamping"):
            cents, _ = weighted_kmeans(np.eye(3), np.ones(3),
                                       ClusterConfig(k=10, steps=2, batch_size=3, seed=0))
        assert cents.shape[0] == 3

    def test_zero_weight_vectors_assigned_by_distance(self):
        vectors = np.array([[0.0], [0.1], [10.0]])
        weights = np.array([1.0, 0.0, 1.0])
        cfg = ClusterConfig(k=2, steps=20, batch_size=3, seed=1, exact_update=True)
        cents, assign = weighted_kmeans(vectors, weights, cfg)
        assert assign[1] == assign[0]           # nearest centroid despite zero weight
        assert cents[assign[0]][0] == pytest.approx(0.0, abs=1e-12)  # mean excludes it


class TestClusterColors:
    def test_three_distinct_values_exact(self):
        scene = random_scene(30, seed=1, sh_coeffs=4, dtype=np.float32)
        palette = np.array([[0.1], [0.5], [0.9]], dtype=np.float32) * np.ones((1, 4 * 3), np.float32)
        scene = scene.with_(sh=palette[np.arange(30) % 3].reshape(30, 4, 3))
        s = np.full(30, 0.5)
        book, idx = cluster_colors(scene, s, beta_c=1e9,
                                   config=ClusterConfig(k=8, steps=30, batch_size=30, seed=0))
        recon = book.entries[idx]
        assert np.abs(recon - scene.sh.reshape(30, -1)).max() < 1e-9
        assert len(np.unique(idx)) == 3

    def test_verbatim_retention(self):
        scene = random_scene(20, seed=2, sh_coeffs=4, dtype=np.float32)
        s = np.full(20, 0.1)
        s[7] = 5.0
        book, idx = cluster_colors(scene, s, beta_c=1.0,
                                   config=ClusterConfig(k=4, steps=10, batch_size=19, seed=0))
        assert book.k_total == book.clustered_count + 1
        tail = book.entries[book.clustered_count]
        assert tail.astype(np.float32).tobytes() == scene.sh[7].reshape(-1).tobytes()
        assert idx[7] == book.clustered_count

    def test_small_retained_fraction_on_heavy_tailed_scene(self):
        # mimic the observed sensitivity histograms: a faint crowd contributes
        # almost nothing, a handful of splats dominate -> retention below 5%
        # at the default threshold
        from c3gs.cameras import orbit_cameras
        n = 400
        scene = random_scene(n, seed=6, sh_coeffs=1, dtype=np.float32, spread=0.8,
                             scale_range=(0.004, 0.012))
        scene.opacity_logits[:] = -5.2
        for i in range(0, 300, 50):
            scene.opacity_logits[i] = 2.0
            scene.log_scales[i] = np.log(0.25)
        cams = orbit_cameras(8, center=np.zeros(3), radius=3.0, height=1.2,
                             fov_y_deg=45, width=64, image_height=64)
        field = parameter_sensitivity(scene, cams)
        s = field.color_vector()
        book, idx = cluster_colors(scene, s, beta_c=6e-7,
                                   config=ClusterConfig(k=16, steps=20, batch_size=64, seed=0))
        retained = book.k_total - book.clustered_count
        assert 0 < retained / scene.n < 0.05


class TestClusterShapes:
    def make_two_proto_scene(self, n=60, seed=0):
        rng = np.random.default_rng(seed)
        scene = random_scene(n, seed=seed)
        protos_q = np.array([[1.0, 0, 0, 0], [0.70710678, 0.70710678, 0, 0]])
        protos_s = np.array([[0.8, 0.4, 0.2], [0.3, 0.3, 0.9]])
        pick = rng.integers(0, 2, size=n)
        eta = rng.uniform(0.5, 2.0, size=n)
        sdir = protos_s[pick] / np.linalg.norm(protos_s[pick], axis=1, keepdims=True)
        return scene.with_(
            rotations=protos_q[pick],
            log_scales=np.log(eta[:, None] * sdir),
        ), pick, eta

    def test_single_shape_one_centroid_recovers_eta(self):
        rng = np.random.default_rng(11)
        scene = random_scene(50, seed=11)
        sdir = np.array([0.7, 0.5, 0.2])
        sdir /= np.linalg.norm(sdir)
        eta = rng.uniform(0.4, 2.5, size=50)
        scene = scene.with_(
            rotations=np.tile([0.9238795, 0.0, 0.3826834, 0.0], (50, 1)),
            log_scales=np.log(eta[:, None] * sdir),
        )
        book, idx, eta_out = cluster_shapes(scene, np.ones(50), beta_g=1e9,
                                            config=ClusterConfig(k=4, steps=30, batch_size=50, seed=0))
        # one effective centroid: every used entry coincides up to roundoff
        used = book.cov_entries[np.unique(idx)]
        assert np.abs(used - used[0]).max() < 1e-9
        assert np.abs(eta_out - eta).max() / eta.max() < 1e-6

    def test_two_shapes_reconstructed_exactly(self):
        scene, pick, eta = self.make_two_proto_scene()
        from c3gs.scene import normalize_covariance as _norm
        cov = covariance_from(scene.rotations, np.exp(scene.log_scales.astype(np.float64)))
        sigma_hat, _ = _norm(cov)
        book, idx, eta_out = cluster_shapes(
            scene, np.ones(scene.n), beta_g=1e9,
            config=ClusterConfig(k=4, steps=40, batch_size=60, seed=0, exact_update=True))
        assert np.abs(eta_out - eta).max() / eta.max() < 1e-6
        err = np.linalg.norm(book.cov_entries[idx] - sigma_hat, axis=1)
        assert err.max() < 1e-6

    def test_codebook_rows_unit_norm_scale(self):
        scene, _, _ = self.make_two_proto_scene(seed=3)
        book, _, _ = cluster_shapes(scene, np.ones(scene.n), beta_g=1e9,
                                    config=ClusterConfig(k=6, steps=15, batch_size=32, seed=1))
        scales = book.entries[:, 4:]
        assert np.abs(np.linalg.norm(scales, axis=1) - 1.0).max() < 1e-5
        quats = book.entries[:, :4]
        assert np.abs(np.linalg.norm(quats, axis=1) - 1.0).max() < 1e-9

    def test_centroid_unit_trace_after_steps(self):
        scene, _, _ = self.make_two_proto_scene(seed=4)
        book, _, _ = cluster_shapes(scene, np.ones(scene.n), beta_g=1e9,
                                    config=ClusterConfig(k=5, steps=25, batch_size=16, seed=2))
        assert np.abs(cov6_trace(book.cov_entries) - 1.0).max() <= 1e-5

    def test_retained_covariances_bit_identical(self):
        scene, _, _ = self.make_two_proto_scene(seed=5)
        s = np.full(scene.n, 0.1)
        s[11] = 9.0
        book, idx, _ = cluster_shapes(scene, s, beta_g=1.0,
                                      config=ClusterConfig(k=4, steps=10, batch_size=32, seed=0))
        cov = covariance_from(scene.rotations, np.exp(scene.log_scales.astype(np.float64)))
        sigma_hat, _ = normalize_covariance(cov)
        assert book.cov_entries[book.clustered_count].tobytes() == sigma_hat[11].tobytes()
        assert idx[11] == book.clustered_count

    def test_prototype_scene_reconstruction_below_noise(self):
        from c3gs.synth import SynthSpec, synth_scene
        noisy = SynthSpec(n=5000, shape_prototypes=32, color_prototypes=32, shape_noise=0.03)
        clean = SynthSpec(n=5000, shape_prototypes=32, color_prototypes=32, shape_noise=0.0)
        scene = synth_scene(noisy, seed=5)
        ref = synth_scene(clean, seed=5)

        def sigma_hats(s):
            cov = covariance_from(s.rotations, np.exp(s.log_scales.astype(np.float64)))
            return normalize_covariance(cov)[0]

        sigma_hat = sigma_hats(scene)
        noise_level = np.linalg.norm(sigma_hat - sigma_hats(ref), axis=1)
        book, idx, _ = cluster_shapes(scene, np.ones(5000), beta_g=1e9,
                                      config=ClusterConfig(k=64, steps=200, batch_size=5000, seed=1))
        recon_err = np.linalg.norm(book.cov_entries[idx] - sigma_hat, axis=1)
        assert recon_err.mean() < noise_level.mean()
