"""Pinhole camera type, look-at construction and JSON (de)serialization.

Camera files are JSON: a single object, a list of objects, or
``{"cameras": [...]}``.  Each object holds ``world_to_camera`` as 16 reals in
row-major order plus ``fx, fy, cx, cy, width, height``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class Camera:
    world_to_camera: np.ndarray  # (4, 4), rows [R|t; 0 1]
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        w = np.asarray(self.world_to_camera, dtype=np.float64)
        if w.shape != (4, 4):
            raise ValueError("world_to_camera must be 4x4")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        r = w[:3, :3]
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-6):
            raise ValueError("rotation block of world_to_camera is not orthonormal")
        object.__setattr__(self, "world_to_camera", w)

    @property
    def pixels(self) -> int:
        return self.width * self.height

    def center(self) -> np.ndarray:
        """Camera origin in world coordinates: -R^T t."""
        w = self.world_to_camera
        return -w[:3, :3].T @ w[:3, 3]

    def to_dict(self) -> dict:
        return {
            "world_to_camera": [float(v) for v in self.world_to_camera.reshape(-1)],
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "width": self.width, "height": self.height,
        }

    @staticmethod
    def from_dict(d: dict) -> "Camera":
        return Camera(
            world_to_camera=np.asarray(d["world_to_camera"], dtype=np.float64).reshape(4, 4),
            fx=float(d["fx"]), fy=float(d["fy"]),
            cx=float(d["cx"]), cy=float(d["cy"]),
            width=int(d["width"]), height=int(d["height"]),
        )


def look_at(eye: np.ndarray, target: np.ndarray, up: np.ndarray,
            fov_y_deg: float, width: int, height: int) -> Camera:
    """Camera at ``eye`` looking at ``target``; +z is the viewing direction."""
    eye = np.asarray(eye, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - eye
    fwd = fwd / np.linalg.norm(fwd)
    right = np.cross(fwd, np.asarray(up, dtype=np.float64))
    right = right / np.linalg.norm(right)
    down = np.cross(fwd, right)
    r = np.stack([right, down, fwd], axis=0)
    w = np.eye(4)
    w[:3, :3] = r
    w[:3, 3] = -r @ eye
    fy = 0.5 * height / np.tan(np.deg2rad(fov_y_deg) / 2)
    return Camera(world_to_camera=w, fx=fy, fy=fy,
                  cx=width / 2.0, cy=height / 2.0, width=width, height=height)


def orbit_cameras(n: int, center: np.ndarray, radius: float, height: float,
                  fov_y_deg: float = 50.0, width: int = 64, image_height: int = 64) -> list[Camera]:
    """Ring of n cameras around ``center`` at the given radius and elevation."""
    center = np.asarray(center, dtype=np.float64)
    cams = []
    for i in range(n):
        ang = 2 * np.pi * i / n
        eye = center + np.array([radius * np.cos(ang), radius * np.sin(ang), height])
        cams.append(look_at(eye, center, up=np.array([0.0, 0.0, 1.0]),
                            fov_y_deg=fov_y_deg, width=width, height=image_height))
    return cams


def load_cameras(path: str | Path) -> list[Camera]:
    data = json.loads(Path(path).read_text())
    if isinstance(data, dict) and "cameras" in data:
        data = data["cameras"]
    if isinstance(data, dict):
        data = [data]
    return [Camera.from_dict(d) for d in data]


def save_cameras(cams: list[Camera], path: str | Path) -> None:
    Path(path).write_text(json.dumps({"cameras": [c.to_dict() for c in cams]}, indent=1))
