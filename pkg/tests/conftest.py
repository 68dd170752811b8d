import numpy as np
import pytest

from c3gs.cameras import look_at
from c3gs.scene import GaussianScene


def random_scene(n, seed=0, sh_coeffs=16, dtype=np.float64, spread=0.4,
                 scale_range=(0.05, 0.25)) -> GaussianScene:
    """Generic well-conditioned random scene; float64 by default so finite
    differences are not quantized by the storage dtype."""
    rng = np.random.default_rng(seed)
    q = rng.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    sh = np.zeros((n, sh_coeffs, 3), dtype)
    sh[:, 0, :] = rng.uniform(0.2, 1.5, size=(n, 3))
    if sh_coeffs > 1:
        sh[:, 1:, :] = rng.normal(size=(n, sh_coeffs - 1, 3)) * 0.1
    return GaussianScene(
        positions=rng.uniform(-spread, spread, size=(n, 3)).astype(dtype),
        rotations=q.astype(dtype),
        log_scales=np.log(rng.uniform(*scale_range, size=(n, 3))).astype(dtype),
        opacity_logits=rng.uniform(-0.5, 2.0, size=n).astype(dtype),
        sh=sh,
    )


def make_camera(width=32, height=32, fov=45.0, eye=(0.0, -3.0, 0.6)):
    return look_at(np.array(eye), np.zeros(3), np.array([0.0, 0.0, 1.0]),
                   fov, width, height)


@pytest.fixture
def cam32():
    return make_camera(32, 32)


@pytest.fixture
def cam8():
    return make_camera(8, 8, eye=(0.0, -3.0, 0.0))
