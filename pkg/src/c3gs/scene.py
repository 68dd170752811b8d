"""Gaussian-splat scene model and covariance algebra.

A scene is a flat set of anisotropic 3D Gaussians.  Each Gaussian carries a
position, a unit rotation quaternion (scalar-first), per-axis log scales, an
opacity logit and a block of spherical-harmonics color coefficients.

Covariances are handled in two forms: full symmetric 3x3 matrices and packed
6-vectors of the unique entries, ordered (xx, xy, xz, yy, yz, zz).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import torch

# Unique-entry packing order for symmetric 3x3 matrices.
COV6_ROWS = np.array([0, 0, 0, 1, 1, 2])
COV6_COLS = np.array([0, 1, 2, 1, 2, 2])

# Eigenvalue floor applied before sqrt so rank-deficient covariances never
# produce NaN scales.
EIG_FLOOR = 1e-12


class DegenerateCovarianceError(ValueError):
    """Raised when a covariance has non-positive trace."""


class ZeroQuaternionError(ValueError):
    """Raised when a quaternion has (near-)zero norm and cannot be renormalized."""


@dataclass
class GaussianScene:
    """Arrays describing N Gaussians; all float32, row i is Gaussian i."""

    positions: np.ndarray       # (N, 3) world units
    rotations: np.ndarray       # (N, 4) unit quaternions, scalar first (w, x, y, z)
    log_scales: np.ndarray      # (N, 3) s = exp(log_scale) per axis
    opacity_logits: np.ndarray  # (N,)   alpha = sigmoid(logit)
    sh: np.ndarray              # (N, B, 3) SH coefficients, B in {1, 4, 9, 16}

    def __post_init__(self):
        n = self.positions.shape[0]
        assert self.positions.shape == (n, 3)
        assert self.rotations.shape == (n, 4)
        assert self.log_scales.shape == (n, 3)
        assert self.opacity_logits.shape == (n,)
        assert self.sh.ndim == 3 and self.sh.shape[0] == n and self.sh.shape[2] == 3
        assert self.sh.shape[1] in (1, 4, 9, 16)

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def sh_coeffs(self) -> int:
        return self.sh.shape[1]

    @property
    def sh_degree(self) -> int:
        return int(round(self.sh.shape[1] ** 0.5)) - 1

    def take(self, indices: np.ndarray) -> "GaussianScene":
        """New scene keeping the given rows, in the given order."""
        return GaussianScene(
            positions=self.positions[indices].copy(),
            rotations=self.rotations[indices].copy(),
            log_scales=self.log_scales[indices].copy(),
            opacity_logits=self.opacity_logits[indices].copy(),
            sh=self.sh[indices].copy(),
        )

    def copy(self) -> "GaussianScene":
        return self.take(np.arange(self.n))

    def with_(self, **fields) -> "GaussianScene":
        return replace(self, **fields)

    @staticmethod
    def empty(sh_coeffs: int = 16) -> "GaussianScene":
        f32 = np.float32
        return GaussianScene(
            positions=np.zeros((0, 3), f32),
            rotations=np.zeros((0, 4), f32),
            log_scales=np.zeros((0, 3), f32),
            opacity_logits=np.zeros((0,), f32),
            sh=np.zeros((0, sh_coeffs, 3), f32),
        )


def normalize_quaternions(q: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    """Renormalize quaternion rows whose norm is off unit by more than tol.

    Rows already within tol of unit norm are passed through bit-identically,
    which keeps save/load round-trips exact.  Zero-norm rows are an error.
    """
    q = np.asarray(q)
    norms = np.linalg.norm(q.astype(np.float64), axis=-1)
    bad = norms < 1e-12
    if np.any(bad):
        idx = int(np.argmax(bad))
        raise ZeroQuaternionError(
            f"quaternion at index {idx} has zero norm and cannot be renormalized"
        )
    out = q.copy()
    off = np.abs(norms - 1.0) > tol
    if np.any(off):
        out[off] = (q[off].astype(np.float64) / norms[off, None]).astype(q.dtype)
    return out


def quat_to_rotmat(q: torch.Tensor) -> torch.Tensor:
    """Unit quaternion(s) (..., 4) scalar-first -> rotation matrix (..., 3, 3)."""
    w, x, y, z = q.unbind(-1)
    two = 2.0
    row0 = torch.stack([1 - two * (y * y + z * z), two * (x * y - w * z), two * (x * z + w * y)], dim=-1)
    row1 = torch.stack([two * (x * y + w * z), 1 - two * (x * x + z * z), two * (y * z - w * x)], dim=-1)
    row2 = torch.stack([two * (x * z - w * y), two * (y * z + w * x), 1 - two * (x * x + y * y)], dim=-1)
    return torch.stack([row0, row1, row2], dim=-2)


def covariance_from_t(q: torch.Tensor, s: torch.Tensor) -> torch.Tensor:
    """Sigma = R S S R^T packed as unique entries (..., 6). Differentiable."""
    r = quat_to_rotmat(q)
    m = r * s.unsqueeze(-2)  # R @ diag(s)
    sigma = m @ m.transpose(-1, -2)
    return sigma[..., COV6_ROWS, COV6_COLS]


def covariance_from(q: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Numpy front end of :func:`covariance_from_t`; computes in float64."""
    qt = torch.as_tensor(np.asarray(q, dtype=np.float64))
    st = torch.as_tensor(np.asarray(s, dtype=np.float64))
    return covariance_from_t(qt, st).numpy()


def cov6_to_mat(c: np.ndarray) -> np.ndarray:
    """Packed unique entries (..., 6) -> full symmetric matrix (..., 3, 3)."""
    c = np.asarray(c)
    m = np.empty(c.shape[:-1] + (3, 3), dtype=c.dtype)
    m[..., COV6_ROWS, COV6_COLS] = c
    m[..., COV6_COLS, COV6_ROWS] = c
    return m


def mat_to_cov6(m: np.ndarray) -> np.ndarray:
    return np.asarray(m)[..., COV6_ROWS, COV6_COLS]


def cov6_trace(c: np.ndarray) -> np.ndarray:
    c = np.asarray(c)
    return c[..., 0] + c[..., 3] + c[..., 5]


def normalize_covariance(cov6: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split Sigma into (unit-trace Sigma_hat, eta) with eta = sqrt(Tr(Sigma)).

    Tr(Sigma) equals ||s||_2^2, so eta is the scalar magnitude of the scale
    vector and Sigma_hat = Sigma / eta^2 has unit trace.
    """
    c = np.asarray(cov6, dtype=np.float64)
    tr = cov6_trace(c)
    if np.any(tr <= 0):
        idx = int(np.argmax(tr <= 0))
        raise DegenerateCovarianceError(f"covariance has non-positive trace {tr.flat[idx]}")
    eta = np.sqrt(tr)
    return c / tr[..., None], eta


def rotmat_to_quat(r: np.ndarray) -> np.ndarray:
    """Rotation matrices (..., 3, 3) -> scalar-first unit quaternions (..., 4).

    Uses the largest-pivot construction for numerical robustness; the sign is
    canonicalized to w >= 0 (first nonzero component positive when w == 0).
    """
    r = np.asarray(r, dtype=np.float64)
    batch = r.shape[:-2]
    r = r.reshape((-1, 3, 3))
    m00, m01, m02 = r[:, 0, 0], r[:, 0, 1], r[:, 0, 2]
    m10, m11, m12 = r[:, 1, 0], r[:, 1, 1], r[:, 1, 2]
    m20, m21, m22 = r[:, 2, 0], r[:, 2, 1], r[:, 2, 2]
    tr = m00 + m11 + m22

    cand = np.empty((r.shape[0], 4, 4))
    cand[:, 0] = np.stack([1 + tr, m21 - m12, m02 - m20, m10 - m01], axis=-1)
    cand[:, 1] = np.stack([m21 - m12, 1 + m00 - m11 - m22, m01 + m10, m02 + m20], axis=-1)
    cand[:, 2] = np.stack([m02 - m20, m01 + m10, 1 - m00 + m11 - m22, m12 + m21], axis=-1)
    cand[:, 3] = np.stack([m10 - m01, m02 + m20, m12 + m21, 1 - m00 - m11 + m22], axis=-1)
    # Leading term of candidate k squares to the pivot magnitude; pick the largest.
    pivots = np.stack([1 + tr, 1 + 2 * m00 - tr, 1 + 2 * m11 - tr, 1 + 2 * m22 - tr], axis=-1)
    pick = np.argmax(pivots, axis=-1)
    q = cand[np.arange(r.shape[0]), pick]
    q /= np.linalg.norm(q, axis=-1, keepdims=True)

    flip = q[:, 0] < 0
    exact_zero = q[:, 0] == 0
    if np.any(exact_zero):
        lead = q[exact_zero]
        first_nonzero = np.argmax(np.abs(lead) > 0, axis=-1)
        flip[exact_zero] = lead[np.arange(lead.shape[0]), first_nonzero] < 0
    q[flip] *= -1.0
    return q.reshape(batch + (4,))


def eigendecompose_covariance(cov6: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Factor symmetric PSD covariance(s) into (quaternion, scale).

    Eigenvalues are sorted descending and the eigenvector basis is forced to
    determinant +1 by flipping its last column, so the result is a proper
    rotation.  covariance_from(q, s) reconstructs the input up to roundoff.
    """
    c = np.asarray(cov6, dtype=np.float64)
    batch = c.shape[:-1]
    m = cov6_to_mat(c.reshape((-1, 6)))
    evals, evecs = np.linalg.eigh(m)
    evals = np.ascontiguousarray(evals[:, ::-1])
    evecs = np.ascontiguousarray(evecs[:, :, ::-1])
    neg = np.linalg.det(evecs) < 0
    evecs[neg, :, 2] *= -1.0
    scale = np.sqrt(np.maximum(evals, EIG_FLOOR))
    return rotmat_to_quat(evecs).reshape(batch + (4,)), scale.reshape(batch + (3,))
