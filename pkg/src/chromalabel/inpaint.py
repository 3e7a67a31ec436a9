"""RGB-guided multi-scale hole filling for registered depth frames.

Holes (depth 0) are filled with a cross-bilateral filter: each fill is a
weighted average of observed neighbors, weighted by a spatial Gaussian
times a Gaussian over Euclidean RGB distance to the guide image. The
filter runs coarse-to-fine over a small image pyramid so holes larger
than the kernel still get filled; coarser fills only seed hole pixels
that no observed neighbor reaches. Observed pixels are never modified.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PipelineError
from .ingest import DepthFrame, RgbFrame


@dataclass(frozen=True)
class InpaintParams:
    num_scales: int = 3
    spatial_sigma: float = 3.0  # pixels, at every scale
    range_sigma: float = 20.0  # Euclidean RGB distance units
    kernel_radius: int = 5  # pixels

    def __post_init__(self):
        if self.num_scales < 1:
            raise PipelineError(f"num_scales must be >= 1, got {self.num_scales}")
        if self.spatial_sigma <= 0 or self.range_sigma <= 0:
            raise PipelineError("sigmas must be positive")
        if self.kernel_radius < 1:
            raise PipelineError(f"kernel_radius must be >= 1, got {self.kernel_radius}")


def _downsample(depth: np.ndarray, rgb: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Halve resolution; depth averages valid pixels only (0 stays hole)."""
    h, w = depth.shape
    hp, wp = (h + 1) // 2 * 2, (w + 1) // 2 * 2
    d = np.zeros((hp, wp), dtype=np.float64)
    d[:h, :w] = depth
    g = np.zeros((hp, wp, 3), dtype=np.float64)
    g[:h, :w] = rgb
    g[h:, :w] = rgb[h - 1 :, :]
    g[:h, w:] = g[:h, w - 1 : w]
    g[h:, w:] = g[h - 1 : h, w - 1 : w]

    blocks = d.reshape(hp // 2, 2, wp // 2, 2)
    valid = blocks > 0
    counts = valid.sum(axis=(1, 3))
    sums = (blocks * valid).sum(axis=(1, 3))
    coarse_d = np.zeros_like(sums)
    np.divide(sums, counts, out=coarse_d, where=counts > 0)

    coarse_g = g.reshape(hp // 2, 2, wp // 2, 2, 3).mean(axis=(1, 3))
    return coarse_d, np.rint(coarse_g).astype(np.uint8)


def _upsample(coarse: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    fine = np.repeat(np.repeat(coarse, 2, axis=0), 2, axis=1)
    return fine[: shape[0], : shape[1]]


def _range_lut(range_sigma: float) -> np.ndarray:
    # indexed by squared RGB distance; max is 3 * 255^2
    d2 = np.arange(3 * 255 * 255 + 1, dtype=np.float64)
    return np.exp(-d2 / (2.0 * range_sigma * range_sigma))


def _weighted_sums(values, valid, guide, params, lut):
    """Accumulate cross-bilateral numerator/denominator plus plain
    valid-neighbor sums (fallback when all bilateral weights underflow)."""
    h, w = values.shape
    g = guide.astype(np.int32)
    vvals = np.where(valid, values, 0.0)
    vmask = valid.astype(np.float64)
    num = np.zeros((h, w))
    den = np.zeros((h, w))
    box_num = np.zeros((h, w))
    box_den = np.zeros((h, w))
    r = params.kernel_radius
    inv_2ss = 1.0 / (2.0 * params.spatial_sigma * params.spatial_sigma)
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            if dy == 0 and dx == 0:
                continue
            ws = np.exp(-(dy * dy + dx * dx) * inv_2ss)
            dst_y = slice(max(0, -dy), h - max(0, dy))
            dst_x = slice(max(0, -dx), w - max(0, dx))
            src_y = slice(max(0, dy), h - max(0, -dy))
            src_x = slice(max(0, dx), w - max(0, -dx))
            diff = g[dst_y, dst_x] - g[src_y, src_x]
            d2 = (diff * diff).sum(axis=2)
            wgt = (ws * lut[d2]) * vmask[src_y, src_x]
            num[dst_y, dst_x] += wgt * vvals[src_y, src_x]
            den[dst_y, dst_x] += wgt
            box_num[dst_y, dst_x] += vvals[src_y, src_x]
            box_den[dst_y, dst_x] += vmask[src_y, src_x]
    return num, den, box_num, box_den


def _fill_holes(num, den, box_num, box_den, holes):
    """Bilateral average where defined, plain average where weights vanished."""
    fills = np.full(num.shape, np.nan)
    usable = holes & (den > 0)
    np.divide(num, den, out=fills, where=usable)
    fallback = holes & (den == 0) & (box_den > 0)
    if fallback.any():
        np.divide(box_num, box_den, out=fills, where=fallback)
    return fills, usable | fallback


def _fill_level(depth, guide, params, lut, seed=None) -> np.ndarray:
    """Return a hole-free copy of ``depth``; observed pixels untouched.

    Without a seed (coarsest scale) filling iterates, growing inward from
    observed pixels, until no holes remain. With a seed (upsampled coarser
    fill) a single pass runs and unreachable holes take the seed value.
    """
    values = depth.copy()
    valid = values > 0
    while True:
        holes = ~valid
        if not holes.any():
            return values
        sums = _weighted_sums(values, valid, guide, params, lut)
        fills, filled = _fill_holes(*sums, holes)
        if seed is not None:
            unreachable = holes & ~filled
            fills[unreachable] = seed[unreachable]
            filled = holes
        values[filled] = fills[filled]
        valid |= filled
        if seed is not None:
            return values


def inpaint(depth: DepthFrame, rgb: RgbFrame, params: InpaintParams = InpaintParams()) -> DepthFrame:
    """Fill every depth hole, guided by the registered RGB image.

    Observed pixels are preserved bit-exactly; fills are convex
    combinations of observed depths, so the output range stays within
    [min, max] of the observed values. A frame with no holes is returned
    unchanged; a frame with no observed pixels at all is an error.
    """
    if (depth.height, depth.width) != (rgb.height, rgb.width):
        raise PipelineError("depth and rgb frames are not registered (size mismatch)")
    original = depth.values
    valid = original > 0
    if not valid.any():
        raise PipelineError("frame is all holes; no depth to in-paint from")
    if valid.all():
        return DepthFrame(original.copy())

    levels = [(original.astype(np.float64), rgb.values)]
    for _ in range(params.num_scales - 1):
        d, g = levels[-1]
        if min(d.shape) < 2:
            break
        levels.append(_downsample(d, g))

    lut = _range_lut(params.range_sigma)
    filled = _fill_level(levels[-1][0], levels[-1][1], params, lut)
    for d, g in reversed(levels[:-1]):
        seed = _upsample(filled, d.shape)
        filled = _fill_level(d, g, params, lut, seed=seed)

    out = np.rint(filled).astype(np.uint16)
    out[valid] = original[valid]
    return DepthFrame(out)
