"""Image helpers: PSNR, sRGB transfer and 8-bit PNG export/import.

Internal images are float arrays of shape (H, W, 3) in linear RGB; values are
clamped and converted to sRGB only at the PNG boundary.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image as PILImage


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB with peak 1.0; +inf for identical inputs."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image dimensions differ: {a.shape} vs {b.shape}")
    mse = np.mean((a - b) ** 2)
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(1.0 / mse))


def linear_to_srgb(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 0.0, 1.0)
    return np.where(x <= 0.0031308, 12.92 * x, 1.055 * np.power(x, 1 / 2.4) - 0.055)


def srgb_to_linear(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 0.0, 1.0)
    return np.where(x <= 0.04045, x / 12.92, np.power((x + 0.055) / 1.055, 2.4))


def save_png(img: np.ndarray, path: str | Path) -> None:
    u8 = np.round(linear_to_srgb(np.asarray(img, dtype=np.float64)) * 255.0).astype(np.uint8)
    PILImage.fromarray(u8, mode="RGB").save(str(path))


def load_png(path: str | Path) -> np.ndarray:
    u8 = np.asarray(PILImage.open(str(path)).convert("RGB"))
    return srgb_to_linear(u8.astype(np.float64) / 255.0).astype(np.float32)
