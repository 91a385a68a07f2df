"""Pinhole camera math, rigid transforms, and workspace normalization.

All functions are pure and operate on plain numpy arrays (float64), so they
are safe to call from any number of concurrent callers. The camera model is
an undistorted pinhole: 3D points live in the camera frame (z forward, in
meters), pixels in image coordinates (origin top-left).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateProjection, DomainError

_ORTHO_TOL = 1e-6


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics; focal lengths and principal point in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise DomainError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 < self.cx < self.width):
            raise DomainError(f"cx={self.cx} outside (0, {self.width})")
        if not (0 < self.cy < self.height):
            raise DomainError(f"cy={self.cy} outside (0, {self.height})")

    @property
    def resolution(self) -> np.ndarray:
        return np.array([self.width, self.height], dtype=np.float64)

    def to_dict(self) -> dict:
        return {
            "fx": float(self.fx),
            "fy": float(self.fy),
            "cx": float(self.cx),
            "cy": float(self.cy),
            "width": int(self.width),
            "height": int(self.height),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        return cls(
            fx=float(d["fx"]),
            fy=float(d["fy"]),
            cx=float(d["cx"]),
            cy=float(d["cy"]),
            width=int(d["width"]),
            height=int(d["height"]),
        )


def default_4k_intrinsics() -> CameraIntrinsics:
    """Default 4K camera (3840x2160), override per dataset config."""
    return CameraIntrinsics(fx=1800.0, fy=1800.0, cx=1920.0, cy=1080.0, width=3840, height=2160)


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Rotation (3x3 orthonormal) plus translation (meters)."""

    rotation: np.ndarray
    translation: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, RigidTransform):
            return NotImplemented
        return np.array_equal(self.rotation, other.rotation) and np.array_equal(
            self.translation, other.translation
        )

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        tr = np.asarray(self.translation, dtype=np.float64).reshape(3)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", tr)
        if not np.allclose(rot.T @ rot, np.eye(3), atol=_ORTHO_TOL):
            raise DomainError("rotation is not orthonormal")
        if abs(np.linalg.det(rot) - 1.0) > _ORTHO_TOL:
            raise DomainError(f"rotation determinant {np.linalg.det(rot):.8f} != 1")

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(rotation=np.eye(3), translation=np.zeros(3))

    def apply(self, point: np.ndarray) -> np.ndarray:
        p = np.asarray(point, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self after other: (self ∘ other)(p) = self(other(p))."""
        return RigidTransform(
            rotation=self.rotation @ other.rotation,
            translation=self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        return RigidTransform(rotation=self.rotation.T, translation=-self.rotation.T @ self.translation)

    def to_dict(self) -> dict:
        return {
            "rotation": [float(v) for v in self.rotation.reshape(-1)],  # row-major
            "translation": [float(v) for v in self.translation],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RigidTransform":
        return cls(
            rotation=np.asarray(d["rotation"], dtype=np.float64).reshape(3, 3),
            translation=np.asarray(d["translation"], dtype=np.float64),
        )


@dataclass(frozen=True)
class NormalizedCoord:
    """Scalar coordinate in normalized grid units, restricted to [-1, 1]."""

    value: float

    def __post_init__(self):
        if not (-1.0 <= self.value <= 1.0):
            raise DomainError(f"normalized coordinate {self.value} outside [-1, 1]")

    def __float__(self) -> float:
        return float(self.value)


def project(point3d: np.ndarray, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Project a camera-frame 3D point (meters) to pixels; depth is discarded."""
    p = np.asarray(point3d, dtype=np.float64)
    z = p[..., 2]
    if np.any(z <= 0):
        raise DegenerateProjection(f"projection requires z > 0, got z={z}")
    return np.stack(
        [intrinsics.fx * p[..., 0] / z + intrinsics.cx, intrinsics.fy * p[..., 1] / z + intrinsics.cy],
        axis=-1,
    )


def unproject(pixel2d: np.ndarray, depth: float, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Back-project pixels to a camera-frame 3D point at the given depth."""
    if np.any(np.asarray(depth) <= 0):
        raise DegenerateProjection(f"back-projection requires depth > 0, got {depth}")
    px = np.asarray(pixel2d, dtype=np.float64)
    x = (px[..., 0] - intrinsics.cx) * depth / intrinsics.fx
    y = (px[..., 1] - intrinsics.cy) * depth / intrinsics.fy
    return np.stack([x, y, np.broadcast_to(np.float64(depth), x.shape)], axis=-1)


def apply_transform(tf: RigidTransform, point3d: np.ndarray) -> np.ndarray:
    """Rotate then translate a point: R @ p + t."""
    return tf.apply(point3d)


@dataclass(frozen=True, eq=False)
class WorkspaceBox:
    """Axis-aligned box mapping metric space affinely onto [-1, 1]^3."""

    lo: np.ndarray
    hi: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, WorkspaceBox):
            return NotImplemented
        return np.array_equal(self.lo, other.lo) and np.array_equal(self.hi, other.hi)

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=np.float64).reshape(3)
        hi = np.asarray(self.hi, dtype=np.float64).reshape(3)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if not np.all(hi > lo):
            raise DomainError(f"workspace box needs hi > lo per axis, got lo={lo}, hi={hi}")

    def normalize(self, point_m: np.ndarray) -> np.ndarray:
        p = np.asarray(point_m, dtype=np.float64)
        return 2.0 * (p - self.lo) / (self.hi - self.lo) - 1.0

    def denormalize(self, point_norm: np.ndarray) -> np.ndarray:
        p = np.asarray(point_norm, dtype=np.float64)
        return self.lo + (p + 1.0) * 0.5 * (self.hi - self.lo)

    def contains(self, point_m: np.ndarray) -> bool:
        p = np.asarray(point_m, dtype=np.float64)
        return bool(np.all(p >= self.lo) and np.all(p <= self.hi))

    def to_dict(self) -> dict:
        return {"lo": [float(v) for v in self.lo], "hi": [float(v) for v in self.hi]}

    @classmethod
    def from_dict(cls, d: dict) -> "WorkspaceBox":
        return cls(lo=np.asarray(d["lo"], dtype=np.float64), hi=np.asarray(d["hi"], dtype=np.float64))


def default_workspace() -> WorkspaceBox:
    """Desk-scale normalization box: x, y in [-1, 1] m, z in [0, 2] m."""
    return WorkspaceBox(lo=np.array([-1.0, -1.0, 0.0]), hi=np.array([1.0, 1.0, 2.0]))


def rotation_about_axis(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix about a (not necessarily unit) axis."""
    a = np.asarray(axis, dtype=np.float64)
    norm = np.linalg.norm(a)
    if norm == 0:
        return np.eye(3)
    a = a / norm
    k = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    return np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)
