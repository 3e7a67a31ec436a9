"""Deterministic synthetic registered RGB-D scenes with exact ground truth.

Scenes are flat colored blobs (green for hands) over a background plane,
composited by a z-buffer, with per-pixel color noise on the blobs and
optional depth noise and hole noise. Sequences move blobs along explicit
per-frame tracks with visibility flags, which exercises the occlusion
behavior of label propagation. Everything is reproducible from the spec
plus its seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .chromakey import FrameInstances, build_instance
from .errors import PipelineError
from .geometry import CameraIntrinsics, Point3D, project
from .ingest import DepthFrame, RegisteredFramePair, RgbFrame
from .propagate import OBJECT_LABELS, SequenceLabels

DEFAULT_WIDTH = 512
DEFAULT_HEIGHT = 424
DEFAULT_INTRINSICS = CameraIntrinsics(fx=365.0, fy=365.0, cx=256.0, cy=212.0)

HAND_GREEN = (30, 200, 60)
OCCLUDER_GRAY = (120, 120, 120)
# grays and muted reds; all far from keying as green
BACKGROUND_PALETTE = (
    (90, 90, 90), (120, 120, 120), (60, 60, 60),
    (150, 60, 50), (120, 40, 40),
)


@dataclass(frozen=True)
class BlobSpec:
    center: tuple[int, int]  # (row, col)
    radii: tuple[int, int]  # (row radius, col radius)
    depth_mm: float
    shape: str = "ellipse"  # "ellipse" | "rect"
    color: tuple[int, int, int] = HAND_GREEN

    def __post_init__(self):
        if self.shape not in ("ellipse", "rect"):
            raise PipelineError(f"unknown blob shape {self.shape!r}")
        if self.depth_mm <= 0:
            raise PipelineError("blob depth must be positive")


@dataclass(frozen=True)
class OccluderSpec:
    top: int
    left: int
    height: int
    width: int
    depth_mm: float
    color: tuple[int, int, int] = OCCLUDER_GRAY


@dataclass
class SceneSpec:
    blobs: list[BlobSpec]
    occluders: list[OccluderSpec] = field(default_factory=list)
    width: int = DEFAULT_WIDTH
    height: int = DEFAULT_HEIGHT
    background_color: tuple[int, int, int] | None = None  # None: pick from palette
    background_depth_mm: float = 2000.0
    color_noise: int = 10  # +- per channel on blob pixels
    depth_noise_mm: float = 3.0
    hole_fraction: float = 0.0
    seed: int = 0


@dataclass(eq=False)
class RenderedScene:
    pair: RegisteredFramePair
    truth: FrameInstances
    blob_pixels: list[np.ndarray]  # visible pixels per blob, possibly empty


def _blob_mask(blob: BlobSpec, width: int, height: int) -> np.ndarray:
    cy, cx = blob.center
    ry, rx = blob.radii
    if cy - ry < 0 or cy + ry >= height or cx - rx < 0 or cx + rx >= width:
        raise PipelineError(f"blob at {blob.center} with radii {blob.radii} leaves the frame")
    rows = np.arange(cy - ry, cy + ry + 1)
    cols = np.arange(cx - rx, cx + rx + 1)
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    if blob.shape == "ellipse":
        inside = ((rr - cy) / ry) ** 2 + ((cc - cx) / rx) ** 2 <= 1.0
    else:
        inside = np.ones_like(rr, dtype=bool)
    mask = np.zeros((height, width), dtype=bool)
    mask[rr[inside], cc[inside]] = True
    return mask


def render_scene(spec: SceneSpec, intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS,
                 frame_index: int = 1) -> RenderedScene:
    """Rasterize a scene; ground truth is the per-blob set of visible pixels.

    Overlapping elements resolve to the one nearer the camera; at exactly
    equal depth the earlier element in the spec keeps the pixel.
    """
    h, w = spec.height, spec.width
    rng = np.random.default_rng(spec.seed)
    background = spec.background_color
    if background is None:
        background = BACKGROUND_PALETTE[int(rng.integers(len(BACKGROUND_PALETTE)))]

    zbuf = np.full((h, w), float(spec.background_depth_mm))
    owner = np.full((h, w), -1, dtype=np.int32)
    elements = [(_blob_mask(b, w, h), b.depth_mm, b.color, True) for b in spec.blobs]
    for occ in spec.occluders:
        mask = np.zeros((h, w), dtype=bool)
        mask[occ.top:occ.top + occ.height, occ.left:occ.left + occ.width] = True
        elements.append((mask, occ.depth_mm, occ.color, False))

    for idx, (mask, depth_mm, _, _) in enumerate(elements):
        claim = mask & (depth_mm < zbuf)
        zbuf[claim] = depth_mm
        owner[claim] = idx

    rgb = np.empty((h, w, 3), dtype=np.uint8)
    rgb[:] = np.array(background, dtype=np.uint8)
    for idx, (_, _, color, is_blob) in enumerate(elements):
        owned = owner == idx
        count = int(owned.sum())
        if count == 0:
            continue
        pix = np.tile(np.array(color, dtype=np.int32), (count, 1))
        if is_blob and spec.color_noise > 0:
            pix += rng.integers(-spec.color_noise, spec.color_noise + 1, size=pix.shape)
        rgb[owned] = np.clip(pix, 0, 255).astype(np.uint8)

    if spec.depth_noise_mm > 0:
        zbuf = zbuf + rng.normal(0.0, spec.depth_noise_mm, size=zbuf.shape)
    depth_clean = np.clip(np.rint(zbuf), 1, np.iinfo(np.uint16).max).astype(np.uint16)

    depth = depth_clean.copy()
    if spec.hole_fraction > 0:
        holes = rng.random(size=depth.shape) < spec.hole_fraction
        depth[holes] = 0

    blob_pixels = []
    instances = []
    for idx in range(len(spec.blobs)):
        pixels = np.argwhere(owner == idx)
        blob_pixels.append(pixels)
        if len(pixels):
            # centroids come from the pre-hole depth so truth stays defined
            instances.append(build_instance(pixels, depth_clean, intrinsics))

    pair = RegisteredFramePair(rgb=RgbFrame(rgb), depth=DepthFrame(depth), index=frame_index)
    return RenderedScene(pair=pair, truth=FrameInstances(frame_index, instances),
                         blob_pixels=blob_pixels)


@dataclass(frozen=True)
class TrackSpec:
    """One blob's per-frame placement, visibility, and held-object label."""

    radii: tuple[int, int]
    centers: tuple[tuple[int, int], ...]  # (row, col) per frame
    depths_mm: tuple[float, ...]
    visible: tuple[bool, ...]
    shape: str = "ellipse"
    color: tuple[int, int, int] = HAND_GREEN
    object_label: int = 0


@dataclass
class TrajectorySpec:
    num_frames: int
    tracks: list[TrackSpec]
    width: int = DEFAULT_WIDTH
    height: int = DEFAULT_HEIGHT
    background_color: tuple[int, int, int] | None = None
    background_depth_mm: float = 2000.0
    color_noise: int = 10
    depth_noise_mm: float = 3.0
    hole_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.num_frames < 1:
            raise PipelineError("trajectory needs at least one frame")
        holders = [t for t in self.tracks if t.object_label != 0]
        if len(holders) > 1:
            raise PipelineError("at most one track may hold an object")
        if holders and holders[0].object_label not in OBJECT_LABELS:
            raise PipelineError(f"object label must be one of {OBJECT_LABELS}")
        for t in self.tracks:
            for name, seq in (("centers", t.centers), ("depths_mm", t.depths_mm),
                              ("visible", t.visible)):
                if len(seq) != self.num_frames:
                    raise PipelineError(f"track {name} length != num_frames")


def render_sequence(traj: TrajectorySpec,
                    intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS
                    ) -> tuple[list[RenderedScene], SequenceLabels]:
    """Render every frame plus the true per-frame label vectors.

    A frame's label vector is aligned with its truth instances (visible
    tracks in track order); the holding track's entry carries its label
    whenever it is visible.
    """
    holder_label = next((t.object_label for t in traj.tracks if t.object_label), 0)
    scenes = []
    label_frames = []
    for i in range(traj.num_frames):
        visible_tracks = [t for t in traj.tracks if t.visible[i]]
        blobs = [
            BlobSpec(center=t.centers[i], radii=t.radii, depth_mm=t.depths_mm[i],
                     shape=t.shape, color=t.color)
            for t in visible_tracks
        ]
        spec = SceneSpec(
            blobs=blobs,
            width=traj.width, height=traj.height,
            background_color=traj.background_color,
            background_depth_mm=traj.background_depth_mm,
            color_noise=traj.color_noise,
            depth_noise_mm=traj.depth_noise_mm,
            hole_fraction=traj.hole_fraction,
            seed=int(np.random.default_rng([traj.seed, i]).integers(2 ** 31)),
        )
        scene = render_scene(spec, intrinsics, frame_index=i + 1)
        scenes.append(scene)
        vec = []
        for t, pixels in zip(visible_tracks, scene.blob_pixels):
            if len(pixels):
                vec.append(t.object_label)
        label_frames.append(vec)
    return scenes, SequenceLabels(label=holder_label, frames=label_frames)


def _project_px(point, intrinsics) -> tuple[int, int]:
    x, y, _ = project(point, intrinsics)
    return int(round(y)), int(round(x))


def random_separated_scene(seed: int, n_blobs: int = 3, n_specks: int = 0,
                           min_distance_m: float = 0.16,
                           width: int = DEFAULT_WIDTH, height: int = DEFAULT_HEIGHT,
                           intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS) -> SceneSpec:
    """Scene whose hand blobs are mutually well separated in 3D and 2D.

    Blobs keep ``min_distance_m`` between 3D centers and a clear 2D gap,
    so extraction must recover exactly one instance per blob. Optional
    15-pixel specks are placed far from everything and must be discarded.
    """
    rng = np.random.default_rng(seed)
    placed = []  # (Point3D, (row, col), (ry, rx))

    def try_place(radii, attempts=200):
        for _ in range(attempts):
            z = rng.uniform(0.6, 1.5)
            x = rng.uniform(-0.35, 0.35)
            y = rng.uniform(-0.25, 0.25)
            p = Point3D(x, y, z)
            row, col = _project_px(p, intrinsics)
            ry, rx = radii
            if not (ry + 2 <= row < height - ry - 2 and rx + 2 <= col < width - rx - 2):
                continue
            ok = True
            for q, (qr, qc), (qry, qrx) in placed:
                if np.linalg.norm(p.as_array() - q.as_array()) < min_distance_m:
                    ok = False
                    break
                # 2D gap so connected components never bridge blobs
                if abs(row - qr) <= ry + qry + 4 and abs(col - qc) <= rx + qrx + 4:
                    ok = False
                    break
            if ok:
                placed.append((p, (row, col), radii))
                return p, (row, col)
        raise PipelineError(f"could not place blob after {attempts} attempts (seed {seed})")

    blobs = []
    for _ in range(n_blobs):
        radii = (int(rng.integers(16, 26)), int(rng.integers(16, 26)))
        p, center = try_place(radii)
        blobs.append(BlobSpec(center=center, radii=radii, depth_mm=p.z * 1000.0))
    for _ in range(n_specks):
        p, center = try_place((1, 2))  # 3x5 rect = 15 px
        blobs.append(BlobSpec(center=center, radii=(1, 2), depth_mm=p.z * 1000.0,
                              shape="rect"))
    return SceneSpec(blobs=blobs, seed=seed, width=width, height=height)


@dataclass
class TrackingFixture:
    """A two-hand sequence plus where label propagation must go silent."""

    traj: TrajectorySpec
    gap_frames: tuple[int, ...]  # 1-based; holder hidden
    jump_frames: tuple[int, ...]  # 1-based; holder teleported out of gate range

    def expect_labeled(self, frame_index: int) -> bool:
        return frame_index not in self.gap_frames and frame_index not in self.jump_frames


def random_tracking_trajectory(seed: int, num_frames: int = 30,
                               step_m: float = 0.025,
                               gap: tuple[int, int] | None = None,
                               jump_frames: tuple[int, ...] = (),
                               jump_offset_m: float = 0.35,
                               width: int = DEFAULT_WIDTH, height: int = DEFAULT_HEIGHT,
                               intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS,
                               object_label: int = 1) -> TrackingFixture:
    """Holder hand walking <= ``step_m`` per frame plus a far free hand.

    ``gap=(start, length)`` hides the holder for those frames (1-based
    start); it reappears where it left. ``jump_frames`` teleport the
    holder sideways by ``jump_offset_m`` for exactly those frames. The
    free hand stays beyond the propagation gate from the holder at all
    times.
    """
    rng = np.random.default_rng(seed)
    gap_frames = tuple(range(gap[0], gap[0] + gap[1])) if gap else ()

    def walk(bounds_x, bounds_y, bounds_z):
        pos = np.array([rng.uniform(*bounds_x), rng.uniform(*bounds_y),
                        rng.uniform(*bounds_z)])
        points = []
        for i in range(num_frames):
            points.append(pos.copy())
            if (i + 2) in gap_frames:  # freeze going into a gap
                continue
            step = rng.normal(size=3)
            step *= rng.uniform(0.2, 1.0) * step_m / np.linalg.norm(step)
            nxt = pos + step
            nxt[0] = np.clip(nxt[0], *bounds_x)
            nxt[1] = np.clip(nxt[1], *bounds_y)
            nxt[2] = np.clip(nxt[2], *bounds_z)
            if np.linalg.norm(nxt - pos) <= step_m:
                pos = nxt
        return points

    holder_path = walk((-0.30, 0.00), (-0.20, -0.06), (0.70, 0.95))
    free_path = walk((0.22, 0.42), (0.08, 0.22), (0.70, 0.95))

    def to_track(path, radii, label, visible, jumped):
        centers = []
        depths = []
        for i, p in enumerate(path):
            q = p.copy()
            if (i + 1) in jumped:
                q[0] += jump_offset_m
            point = Point3D(q[0], q[1], q[2])
            centers.append(_project_px(point, intrinsics))
            depths.append(q[2] * 1000.0)
        return TrackSpec(radii=radii, centers=tuple(centers), depths_mm=tuple(depths),
                         visible=tuple(visible), object_label=label)

    scale = intrinsics.fx / DEFAULT_INTRINSICS.fx
    r_lo, r_hi = max(8, int(14 * scale)), max(10, int(20 * scale))
    holder_radii = (int(rng.integers(r_lo, r_hi)), int(rng.integers(r_lo, r_hi)))
    free_radii = (int(rng.integers(r_lo, r_hi)), int(rng.integers(r_lo, r_hi)))
    holder_visible = [(i + 1) not in gap_frames for i in range(num_frames)]

    traj = TrajectorySpec(
        num_frames=num_frames,
        tracks=[
            to_track(holder_path, holder_radii, object_label, holder_visible, set(jump_frames)),
            to_track(free_path, free_radii, 0, [True] * num_frames, set()),
        ],
        width=width, height=height,
        seed=seed,
    )
    return TrackingFixture(traj=traj, gap_frames=gap_frames, jump_frames=tuple(jump_frames))
