"""Real spherical-harmonics color evaluation (degree <= 3, 3DGS basis).

Colors are encoded as ``0.5 + sum_lm c_lm * Y_lm(dir)`` per channel.  The
renderer clamps negative channels to zero; sensitivity passes disable the
clamp so coefficients shadowed by the clamp still receive gradients.
"""

from __future__ import annotations

import numpy as np
import torch

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
         -1.0925484305920792, 0.5462742152960396)
SH_C3 = (-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
         0.3731763325901154, -0.4570457994644658, 1.445305721320277,
         -0.5900435899266435)

VALID_COEFF_COUNTS = (1, 4, 9, 16)


def sh_basis(dirs: torch.Tensor, coeffs: int) -> torch.Tensor:
    """Basis values Y_lm at unit directions: (..., 3) -> (..., coeffs)."""
    if coeffs not in VALID_COEFF_COUNTS:
        raise ValueError(f"coefficient count must be one of {VALID_COEFF_COUNTS}, got {coeffs}")
    x, y, z = dirs.unbind(-1)
    cols = [torch.full_like(x, SH_C0)]
    if coeffs > 1:
        cols += [-SH_C1 * y, SH_C1 * z, -SH_C1 * x]
    if coeffs > 4:
        xx, yy, zz = x * x, y * y, z * z
        xy, yz, xz = x * y, y * z, x * z
        cols += [
            SH_C2[0] * xy,
            SH_C2[1] * yz,
            SH_C2[2] * (2.0 * zz - xx - yy),
            SH_C2[3] * xz,
            SH_C2[4] * (xx - yy),
        ]
    if coeffs > 9:
        cols += [
            SH_C3[0] * y * (3.0 * xx - yy),
            SH_C3[1] * xy * z,
            SH_C3[2] * y * (4.0 * zz - xx - yy),
            SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy),
            SH_C3[4] * x * (4.0 * zz - xx - yy),
            SH_C3[5] * z * (xx - yy),
            SH_C3[6] * x * (xx - 3.0 * yy),
        ]
    return torch.stack(cols, dim=-1)


def sh_eval_t(sh: torch.Tensor, dirs: torch.Tensor, clamp: bool) -> torch.Tensor:
    """Evaluate (..., B, 3) coefficients at (..., 3) unit dirs -> (..., 3) rgb."""
    basis = sh_basis(dirs, sh.shape[-2])
    rgb = 0.5 + (basis.unsqueeze(-1) * sh).sum(dim=-2)
    if clamp:
        rgb = torch.clamp_min(rgb, 0.0)
    return rgb


def sh_eval(coeffs: np.ndarray, direction: np.ndarray, clamp: bool = True) -> np.ndarray:
    """Numpy front end: (B, 3) coefficients at one unit direction -> rgb."""
    c = torch.as_tensor(np.asarray(coeffs, dtype=np.float64))
    d = torch.as_tensor(np.asarray(direction, dtype=np.float64))
    return sh_eval_t(c, d, clamp).numpy()
