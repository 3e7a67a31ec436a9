"""Pinhole back-projection, mask centroids and 3D distances, RoI box arithmetic.

Conventions used throughout the package:

- pixel coordinates are continuous, with pixel centers at integer
  coordinates; ``x`` runs along columns, ``y`` along rows
- depth is stored in millimeters (uint16, 0 = hole) and converted to
  meters exactly once, at back-projection
- all 3D points are in the depth-camera frame, in meters
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import PipelineError

MM_PER_M = 1000.0


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics of the depth camera, all in pixel units."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise PipelineError(
                f"focal lengths must be positive, got fx={self.fx} fy={self.fy}"
            )

    def validate_for_image(self, width: int, height: int) -> None:
        """Reject a principal point lying outside a width x height image."""
        if not (0 <= self.cx < width and 0 <= self.cy < height):
            raise PipelineError(
                f"principal point ({self.cx}, {self.cy}) outside {width}x{height} image"
            )


@dataclass(frozen=True)
class Point3D:
    x: float
    y: float
    z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=np.float64)


@dataclass(frozen=True)
class RoiBox:
    """Axis-aligned box: x = left, y = top, in pixels."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box sides must be positive, got w={self.w} h={self.h}")

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2, self.y + self.h / 2)

    @property
    def area(self) -> float:
        return self.w * self.h


def backproject(x: float, y: float, d: float, intrinsics: CameraIntrinsics) -> Point3D:
    """Map pixel (x, y) at depth d (meters) to its 3D camera-frame point."""
    if d <= 0:
        raise ValueError(f"depth must be positive, got {d}")
    return Point3D(
        (x - intrinsics.cx) * d / intrinsics.fx,
        (y - intrinsics.cy) * d / intrinsics.fy,
        d,
    )


def project(p: Point3D, intrinsics: CameraIntrinsics) -> tuple[float, float, float]:
    """Inverse of :func:`backproject`: 3D point -> (x, y, depth in meters)."""
    if p.z <= 0:
        raise ValueError(f"point must be in front of the camera, got Z={p.z}")
    return (
        p.x * intrinsics.fx / p.z + intrinsics.cx,
        p.y * intrinsics.fy / p.z + intrinsics.cy,
        p.z,
    )


def backproject_pixels(
    pixels: np.ndarray, depth_m: np.ndarray, intrinsics: CameraIntrinsics
) -> np.ndarray:
    """Vectorized back-projection of (row, col) pixels with per-pixel depth.

    Parameters
    ----------
    pixels : (N, 2) array of (row, col)
    depth_m : (N,) depths in meters, all > 0

    Returns
    -------
    (N, 3) float64 array of (X, Y, Z).
    """
    pixels = np.asarray(pixels)
    d = np.asarray(depth_m, dtype=np.float64)
    if np.any(d <= 0):
        raise ValueError("all depths must be positive")
    out = np.empty((len(pixels), 3), dtype=np.float64)
    out[:, 0] = (pixels[:, 1] - intrinsics.cx) * d / intrinsics.fx
    out[:, 1] = (pixels[:, 0] - intrinsics.cy) * d / intrinsics.fy
    out[:, 2] = d
    return out


def point_distance(a: Point3D, b: Point3D) -> float:
    return float(np.sqrt((a.x - b.x) ** 2 + (a.y - b.y) ** 2 + (a.z - b.z) ** 2))


def _mask_pixels(mask) -> np.ndarray:
    """Accept an instance mask object or a bare (N, 2) pixel array."""
    pixels = getattr(mask, "pixels", mask)
    pixels = np.asarray(pixels)
    if pixels.ndim != 2 or pixels.shape[1] != 2 or len(pixels) == 0:
        raise ValueError("mask must be a nonempty (N, 2) array of (row, col) pixels")
    return pixels


def _depth_values(depth) -> np.ndarray:
    """Accept a DepthFrame or a bare (H, W) millimeter array."""
    return np.asarray(getattr(depth, "values", depth))


def mask_centroid_3d(mask, depth, intrinsics: CameraIntrinsics) -> Point3D:
    """Arithmetic mean of the back-projections of every mask pixel.

    ``depth`` is in millimeters; hole pixels (0) inside the mask are an error.
    """
    pixels = _mask_pixels(mask)
    values = _depth_values(depth)
    d_mm = values[pixels[:, 0], pixels[:, 1]]
    if np.any(d_mm == 0):
        raise PipelineError("mask covers depth holes; in-paint the frame first")
    points = backproject_pixels(pixels, d_mm.astype(np.float64) / MM_PER_M, intrinsics)
    c = points.mean(axis=0)
    return Point3D(float(c[0]), float(c[1]), float(c[2]))


def distance_3d(a, b, depth, intrinsics: CameraIntrinsics) -> float:
    """Euclidean distance between the 3D centroids of two masks (meters)."""
    return point_distance(
        mask_centroid_3d(a, depth, intrinsics),
        mask_centroid_3d(b, depth, intrinsics),
    )


def expand_roi(roi: RoiBox, alpha) -> RoiBox:
    """Grow a box symmetrically about its center by expansion factor alpha.

    Width and height scale by (1 + 2*alpha); the center is preserved.
    No clipping to image bounds (see :func:`clip_roi`).
    """
    if alpha < 0:
        raise ValueError(f"expansion factor must be >= 0, got {alpha}")
    return RoiBox(
        roi.x - alpha * roi.w,
        roi.y - alpha * roi.h,
        (1 + 2 * alpha) * roi.w,
        (1 + 2 * alpha) * roi.h,
    )


def clip_roi(roi: RoiBox, width: int, height: int) -> RoiBox:
    """Intersect a box with the image rectangle [0, width) x [0, height)."""
    x0 = max(roi.x, 0)
    y0 = max(roi.y, 0)
    x1 = min(roi.x + roi.w, width)
    y1 = min(roi.y + roi.h, height)
    if x1 <= x0 or y1 <= y0:
        raise ValueError(f"box {roi} does not intersect {width}x{height} image")
    return RoiBox(x0, y0, x1 - x0, y1 - y0)


def mask_to_bbox(mask) -> RoiBox:
    """Tightest axis-aligned box containing all mask pixels."""
    pixels = _mask_pixels(mask)
    rows = pixels[:, 0]
    cols = pixels[:, 1]
    r0, r1 = int(rows.min()), int(rows.max())
    c0, c1 = int(cols.min()), int(cols.max())
    return RoiBox(c0, r0, c1 - c0 + 1, r1 - r0 + 1)


@dataclass(eq=False)
class ControlRegion:
    """A human-labeled cabin element (e.g. steering wheel) as a 3D point cloud."""

    name: str
    points: np.ndarray  # (M, 3) meters

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[1] != 3 or len(self.points) == 0:
            raise PipelineError(f"control region {self.name!r} has no 3D points")


def distance_to_region(instance, region: ControlRegion, depth, intrinsics) -> float:
    """Minimum distance from an instance's 3D centroid to any region point."""
    c = mask_centroid_3d(instance, depth, intrinsics).as_array()
    return float(np.linalg.norm(region.points - c, axis=1).min())


def load_regions(path, intrinsics: CameraIntrinsics) -> list[ControlRegion]:
    """Load control regions from a regions.json file.

    Schema: ``{"regions": [{"name", "mask", "depth"}, ...]}`` where ``mask``
    is an 8-bit PNG (nonzero = region) and ``depth`` a 16-bit millimeter PNG
    from the calibration frame, both relative to the json file.
    """
    from PIL import Image

    path = Path(path)
    if not path.is_file():
        raise PipelineError(f"regions file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise PipelineError(f"regions file {path} is not valid JSON: {exc}") from exc
    entries = doc.get("regions")
    if not isinstance(entries, list) or not entries:
        raise PipelineError(f"regions file {path} lists no regions")

    regions = []
    for entry in entries:
        try:
            name = entry["name"]
            mask_path = path.parent / entry["mask"]
            depth_path = path.parent / entry["depth"]
        except (TypeError, KeyError) as exc:
            raise PipelineError(f"region entry missing key: {exc}") from exc
        if not mask_path.is_file() or not depth_path.is_file():
            raise PipelineError(f"region {name!r}: mask or depth file missing")
        mask = np.asarray(Image.open(mask_path)) != 0
        if mask.ndim == 3:
            mask = mask.any(axis=2)
        depth_mm = np.asarray(Image.open(depth_path)).astype(np.uint16)
        if mask.shape != depth_mm.shape:
            raise PipelineError(f"region {name!r}: mask and depth sizes differ")
        pixels = np.argwhere(mask & (depth_mm > 0))
        if len(pixels) == 0:
            raise PipelineError(f"region {name!r} has no labeled pixels with valid depth")
        d_m = depth_mm[pixels[:, 0], pixels[:, 1]].astype(np.float64) / MM_PER_M
        regions.append(ControlRegion(name, backproject_pixels(pixels, d_m, intrinsics)))
    return regions
