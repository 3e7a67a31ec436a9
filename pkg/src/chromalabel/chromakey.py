"""Per-frame hand-instance masks from green-keyed registered RGB-D.

The extraction pipeline, in order: key foreground pixels whose green
channel exceeds their luminance by a threshold, label connected
components, split each component at an Otsu depth threshold (instances
merged in 2D can be disjoint in 3D), then greedily re-merge fragments
whose 3D centroids are close (a partially occluded hand falls apart in
2D) while discarding specks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import PipelineError
from .geometry import (
    CameraIntrinsics,
    Point3D,
    RoiBox,
    backproject_pixels,
    mask_centroid_3d,
    mask_to_bbox,
)
from .ingest import DepthFrame, RegisteredFramePair, RgbFrame

LUMA_R, LUMA_G, LUMA_B = 0.3, 0.59, 0.11

SPLIT_MODES = ("always", "bimodal-gated")
# in bimodal-gated mode, split only if the best threshold explains at
# least this fraction of the total depth variance
BIMODAL_VARIANCE_FRACTION = 0.5
OTSU_BINS = 256


@dataclass(frozen=True)
class ChromaParams:
    key_threshold: float = 40.0  # luminance units on the [0, 255] scale
    min_area: int = 20  # pixels; instances this small are discarded
    merge_distance: float = 0.07  # meters between fragment centroids
    connectivity: int = 8  # 4 or 8
    split_mode: str = "always"

    def __post_init__(self):
        if self.key_threshold <= 0:
            raise PipelineError(f"key_threshold must be positive, got {self.key_threshold}")
        if self.min_area < 0:
            raise PipelineError(f"min_area must be >= 0, got {self.min_area}")
        if self.merge_distance <= 0:
            raise PipelineError(f"merge_distance must be positive, got {self.merge_distance}")
        if self.connectivity not in (4, 8):
            raise PipelineError(f"connectivity must be 4 or 8, got {self.connectivity}")
        if self.split_mode not in SPLIT_MODES:
            raise PipelineError(f"split_mode must be one of {SPLIT_MODES}, got {self.split_mode!r}")


@dataclass(eq=False)
class InstanceMask:
    """One hand instance: its pixels, 3D centroid, and tight bbox."""

    pixels: np.ndarray  # (N, 2) int (row, col), sorted row-major
    area: int
    centroid_3d: Point3D
    bbox: RoiBox


@dataclass(eq=False)
class FrameInstances:
    frame_index: int
    instances: list[InstanceMask] = field(default_factory=list)


def build_instance(pixels: np.ndarray, depth, intrinsics: CameraIntrinsics) -> InstanceMask:
    """Assemble an InstanceMask (centroid + bbox) from a raw pixel set."""
    pixels = np.asarray(pixels)
    if len(pixels) == 0:
        raise ValueError("instance pixel set is empty")
    order = np.lexsort((pixels[:, 1], pixels[:, 0]))
    pixels = pixels[order]
    return InstanceMask(
        pixels=pixels,
        area=len(pixels),
        centroid_3d=mask_centroid_3d(pixels, depth, intrinsics),
        bbox=mask_to_bbox(pixels),
    )


def relative_luminance(r, g, b):
    """Luminance proxy Y = 0.3 r + 0.59 g + 0.11 b; gray is a fixed point."""
    return LUMA_R * np.asarray(r, dtype=np.float64) \
        + LUMA_G * np.asarray(g, dtype=np.float64) \
        + LUMA_B * np.asarray(b, dtype=np.float64)


def chroma_mask(rgb: RgbFrame, key_threshold: float) -> np.ndarray:
    """Boolean foreground mask: pixels with g - Y >= key_threshold."""
    values = rgb.values
    y = relative_luminance(values[:, :, 0], values[:, :, 1], values[:, :, 2])
    return values[:, :, 1] - y >= key_threshold


def connected_components(mask: np.ndarray, connectivity: int = 8) -> list[np.ndarray]:
    """Partition set pixels into maximal components; each is a sorted (N, 2) array."""
    if connectivity == 8:
        structure = np.ones((3, 3), dtype=int)
    elif connectivity == 4:
        structure = None  # scipy default: 4-connected cross
    else:
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    labeled, count = ndimage.label(mask, structure=structure)
    if count == 0:
        return []
    indices = ndimage.value_indices(labeled, ignore_value=0)
    # raster-order scan keeps each component's pixels sorted row-major
    return [np.column_stack(indices[label]) for label in sorted(indices)]


def _otsu_scan(samples: np.ndarray):
    """Best uniform-bin boundary by between-class variance.

    Returns (threshold, between_class_variance, total_variance); the
    smallest maximizing boundary wins ties. Constant input degenerates to
    (min, 0, 0).
    """
    lo = float(samples.min())
    hi = float(samples.max())
    total_var = float(samples.var())
    if lo == hi:
        return lo, 0.0, 0.0
    width = (hi - lo) / OTSU_BINS
    idx = np.minimum(((samples - lo) / width).astype(np.int64), OTSU_BINS - 1)
    counts = np.bincount(idx, minlength=OTSU_BINS).astype(np.float64)
    sums = np.bincount(idx, weights=samples, minlength=OTSU_BINS)

    n = float(len(samples))
    total = sums.sum()
    c0 = np.cumsum(counts)[:-1]  # candidate k separates bins < k from bins >= k
    s0 = np.cumsum(sums)[:-1]
    c1 = n - c0
    s1 = total - s0
    score = np.full(OTSU_BINS - 1, -np.inf)
    valid = (c0 > 0) & (c1 > 0)
    mu0 = np.divide(s0, c0, out=np.zeros_like(s0), where=valid)
    mu1 = np.divide(s1, c1, out=np.zeros_like(s1), where=valid)
    score[valid] = ((c0 / n) * (c1 / n) * (mu0 - mu1) ** 2)[valid]
    k = int(np.argmax(score))  # first occurrence = smallest threshold
    return lo + (k + 1) * width, float(score[k]), total_var


def otsu_threshold(samples) -> float:
    """Depth threshold maximizing between-class variance over 256 uniform bins."""
    samples = np.asarray(samples, dtype=np.float64).ravel()
    if samples.size == 0:
        raise ValueError("otsu_threshold needs at least one sample")
    return float(_otsu_scan(samples)[0])


def depth_split(pixels: np.ndarray, depth) -> tuple[np.ndarray, np.ndarray]:
    """Split mask pixels at the Otsu threshold of their depths.

    Returns (pixels with depth >= threshold, pixels with depth < threshold);
    one side is empty for depth-constant masks and callers then keep the
    mask whole.
    """
    pixels = np.asarray(pixels)
    if len(pixels) == 0:
        raise ValueError("cannot split an empty mask")
    values = np.asarray(getattr(depth, "values", depth))
    d = values[pixels[:, 0], pixels[:, 1]].astype(np.float64)
    thresh = otsu_threshold(d)
    above = d >= thresh
    return pixels[above], pixels[~above]


def _split_component(pixels: np.ndarray, depth_values: np.ndarray, params: ChromaParams):
    """Apply the configured split policy to one component."""
    d = depth_values[pixels[:, 0], pixels[:, 1]].astype(np.float64)
    thresh, between_var, total_var = _otsu_scan(d)
    if params.split_mode == "bimodal-gated":
        if total_var == 0 or between_var / total_var < BIMODAL_VARIANCE_FRACTION:
            return [pixels]
    above = d >= thresh
    if above.all() or not above.any():
        return [pixels]
    return [pixels[above], pixels[~above]]


def merge_instances(masks, depth, intrinsics: CameraIntrinsics,
                    params: ChromaParams = ChromaParams(), frame_index: int = 1) -> FrameInstances:
    """Greedy largest-first agglomeration of mask fragments.

    Repeatedly take the largest remaining mask; discard it if its area is
    <= min_area, otherwise absorb every remaining mask whose 3D centroid
    lies within merge_distance of the growing mask (whose centroid is
    re-derived after each union), then emit it. Emission order is thus
    decreasing seed area, ties broken by smaller top-left pixel.
    """
    values = np.asarray(getattr(depth, "values", depth))

    entries = []
    for pixels in masks:
        pixels = np.asarray(pixels)
        if len(pixels) == 0:
            continue
        d_m = values[pixels[:, 0], pixels[:, 1]].astype(np.float64) / 1000.0
        if np.any(d_m <= 0):
            raise PipelineError("mask covers depth holes; in-paint the frame first")
        points = backproject_pixels(pixels, d_m, intrinsics)
        min_row = int(pixels[:, 0].min())
        min_col = int(pixels[pixels[:, 0] == min_row, 1].min())
        entries.append({
            "pixels": pixels,
            "sum3d": points.sum(axis=0),
            "topleft": (min_row, min_col),
        })
    order = sorted(range(len(entries)),
                   key=lambda i: (-len(entries[i]["pixels"]), entries[i]["topleft"]))

    consumed = [False] * len(entries)
    instances = []
    for pos, i in enumerate(order):
        if consumed[i]:
            continue
        consumed[i] = True
        seed = entries[i]
        if len(seed["pixels"]) <= params.min_area:
            continue
        parts = [seed["pixels"]]
        acc_sum = seed["sum3d"].copy()
        acc_n = len(seed["pixels"])
        for j in order[pos + 1:]:
            if consumed[j]:
                continue
            other = entries[j]
            other_c = other["sum3d"] / len(other["pixels"])
            dist = np.linalg.norm(acc_sum / acc_n - other_c)
            if dist <= params.merge_distance:
                consumed[j] = True
                parts.append(other["pixels"])
                acc_sum += other["sum3d"]
                acc_n += len(other["pixels"])
        instances.append(build_instance(np.concatenate(parts), values, intrinsics))
    return FrameInstances(frame_index=frame_index, instances=instances)


def extract_instances(pair: RegisteredFramePair, intrinsics: CameraIntrinsics,
                      params: ChromaParams = ChromaParams()) -> FrameInstances:
    """Run the full per-frame extraction: key, label, depth-split, merge.

    The depth frame must be hole-free (in-paint first); back-projection is
    undefined at depth 0.
    """
    if pair.depth.hole_count:
        raise PipelineError(
            f"frame {pair.index} has {pair.depth.hole_count} depth holes; in-paint first"
        )
    key = chroma_mask(pair.rgb, params.key_threshold)
    components = connected_components(key, params.connectivity)
    parts = []
    for component in components:
        parts.extend(_split_component(component, pair.depth.values, params))
    return merge_instances(parts, pair.depth, intrinsics, params, frame_index=pair.index)
