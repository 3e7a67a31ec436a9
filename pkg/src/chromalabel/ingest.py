"""Load, validate, and write registered RGB-D sequences.

On-disk layout of a sequence directory::

    manifest.json                 {"id", "num_frames", "frame_pattern"}
    intrinsics.json               {"fx", "fy", "cx", "cy"}   (pixel units)
    frames/frame_000001.rgb.png   8-bit RGB
    frames/frame_000001.depth.png 16-bit grayscale, millimeters, 0 = hole

Frame indices are 1-based and contiguous. RGB and depth of a pair are
pixel-registered, so their dimensions must match; mismatches are rejected
at load time, never later.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np
from PIL import Image

from .errors import PipelineError
from .geometry import CameraIntrinsics

DEPTH_MODES = ("I;16", "I")  # PIL modes accepted for 16-bit depth PNGs


@dataclass(eq=False)
class DepthFrame:
    """Per-pixel depth in millimeters; 0 encodes a hole (no sensor return)."""

    values: np.ndarray  # (H, W) uint16

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 2:
            raise PipelineError(f"depth frame must be 2-D, got shape {self.values.shape}")
        if self.values.dtype != np.uint16:
            raise PipelineError(f"depth frame must be uint16, got {self.values.dtype}")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def hole_count(self) -> int:
        return int((self.values == 0).sum())


@dataclass(eq=False)
class RgbFrame:
    """8-bit RGB image registered to a depth frame."""

    values: np.ndarray  # (H, W, 3) uint8

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 3 or self.values.shape[2] != 3:
            raise PipelineError(f"rgb frame must be (H, W, 3), got shape {self.values.shape}")
        if self.values.dtype != np.uint8:
            raise PipelineError(f"rgb frame must be uint8, got {self.values.dtype}")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(eq=False)
class RegisteredFramePair:
    """One registered RGB + depth frame; dimensions must agree pixel-for-pixel."""

    rgb: RgbFrame
    depth: DepthFrame
    index: int

    def __post_init__(self):
        if (self.rgb.height, self.rgb.width) != (self.depth.height, self.depth.width):
            raise PipelineError(
                f"frame {self.index}: rgb is {self.rgb.height}x{self.rgb.width} "
                f"but depth is {self.depth.height}x{self.depth.width}"
            )
        if self.index < 1:
            raise PipelineError(f"frame index must be >= 1, got {self.index}")


@dataclass(frozen=True)
class SequenceManifest:
    sequence_id: str
    num_frames: int
    frame_pattern: str = "frames/frame_%06d"

    def __post_init__(self):
        if self.num_frames < 1:
            raise PipelineError(f"num_frames must be >= 1, got {self.num_frames}")
        try:
            self.frame_pattern % 1
        except (TypeError, ValueError) as exc:
            raise PipelineError(
                f"frame_pattern {self.frame_pattern!r} is not a printf-style pattern"
            ) from exc

    def rgb_name(self, index: int) -> str:
        return f"{self.frame_pattern % index}.rgb.png"

    def depth_name(self, index: int) -> str:
        return f"{self.frame_pattern % index}.depth.png"

    def to_json_bytes(self) -> bytes:
        """Canonical serialization; load -> re-serialize is byte identity."""
        doc = {
            "id": self.sequence_id,
            "num_frames": self.num_frames,
            "frame_pattern": self.frame_pattern,
        }
        return (json.dumps(doc, sort_keys=True, indent=2) + "\n").encode()


def _read_json(path: Path) -> dict:
    if not path.is_file():
        raise PipelineError(f"missing file: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise PipelineError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise PipelineError(f"{path}: expected a JSON object")
    return doc


def load_intrinsics(path, width: int | None = None, height: int | None = None) -> CameraIntrinsics:
    """Load fx/fy/cx/cy from an intrinsics.json file.

    When an image size is given, the principal point is checked against it.
    """
    doc = _read_json(Path(path))
    try:
        intr = CameraIntrinsics(
            fx=float(doc["fx"]), fy=float(doc["fy"]),
            cx=float(doc["cx"]), cy=float(doc["cy"]),
        )
    except KeyError as exc:
        raise PipelineError(f"{path}: missing intrinsics key {exc}") from exc
    if width is not None and height is not None:
        intr.validate_for_image(width, height)
    return intr


def save_intrinsics(path, intrinsics: CameraIntrinsics) -> None:
    doc = {
        "fx": intrinsics.fx, "fy": intrinsics.fy,
        "cx": intrinsics.cx, "cy": intrinsics.cy,
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _png_size(path: Path, expect_depth: bool) -> tuple[int, int]:
    """Read (width, height) from a PNG header without decoding pixels."""
    with Image.open(path) as img:
        if expect_depth and img.mode not in DEPTH_MODES:
            raise PipelineError(f"{path}: expected 16-bit grayscale PNG, got mode {img.mode}")
        if not expect_depth and img.mode != "RGB":
            raise PipelineError(f"{path}: expected RGB PNG, got mode {img.mode}")
        return img.size


def read_rgb_png(path) -> RgbFrame:
    with Image.open(path) as img:
        if img.mode != "RGB":
            raise PipelineError(f"{path}: expected RGB PNG, got mode {img.mode}")
        return RgbFrame(np.asarray(img))


def read_depth_png(path) -> DepthFrame:
    with Image.open(path) as img:
        if img.mode not in DEPTH_MODES:
            raise PipelineError(f"{path}: expected 16-bit grayscale PNG, got mode {img.mode}")
        arr = np.asarray(img)
    if arr.dtype != np.uint16:
        if arr.min() < 0 or arr.max() > np.iinfo(np.uint16).max:
            raise PipelineError(f"{path}: depth values outside 16-bit range")
        arr = arr.astype(np.uint16)
    return DepthFrame(arr)


def write_rgb_png(path, rgb: RgbFrame | np.ndarray) -> None:
    values = np.asarray(getattr(rgb, "values", rgb), dtype=np.uint8)
    Image.fromarray(values).save(path, format="PNG")


def write_depth_png(path, depth: DepthFrame | np.ndarray) -> None:
    values = np.asarray(getattr(depth, "values", depth), dtype=np.uint16)
    Image.fromarray(values).save(path, format="PNG")


class RgbdSequence:
    """A validated sequence directory with lazily loadable frame pairs."""

    def __init__(self, directory: Path, manifest: SequenceManifest,
                 intrinsics: CameraIntrinsics, width: int, height: int):
        self.directory = directory
        self.manifest = manifest
        self.intrinsics = intrinsics
        self.width = width
        self.height = height

    def __len__(self) -> int:
        return self.manifest.num_frames

    def frame(self, index: int) -> RegisteredFramePair:
        """Load frame pair ``index`` (1-based)."""
        if not 1 <= index <= len(self):
            raise PipelineError(f"frame index {index} outside [1, {len(self)}]")
        rgb = read_rgb_png(self.directory / self.manifest.rgb_name(index))
        depth = read_depth_png(self.directory / self.manifest.depth_name(index))
        return RegisteredFramePair(rgb=rgb, depth=depth, index=index)

    def frames(self) -> Iterator[RegisteredFramePair]:
        for i in range(1, len(self) + 1):
            yield self.frame(i)


def load_sequence(directory) -> RgbdSequence:
    """Open a sequence directory, validating manifest, files, and geometry.

    Every listed frame file must exist, each pair's dimensions must match,
    all frames must share one size, and the principal point must lie inside
    the frame. Pixel data itself is loaded lazily via ``frame(i)``.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise PipelineError(f"sequence directory not found: {directory}")
    mdoc = _read_json(directory / "manifest.json")
    try:
        manifest = SequenceManifest(
            sequence_id=str(mdoc["id"]),
            num_frames=int(mdoc["num_frames"]),
            frame_pattern=str(mdoc["frame_pattern"]),
        )
    except KeyError as exc:
        raise PipelineError(f"manifest.json: missing key {exc}") from exc

    size = None
    for i in range(1, manifest.num_frames + 1):
        rgb_path = directory / manifest.rgb_name(i)
        depth_path = directory / manifest.depth_name(i)
        for p in (rgb_path, depth_path):
            if not p.is_file():
                raise PipelineError(f"frame {i} of {manifest.num_frames} missing: {p}")
        rgb_size = _png_size(rgb_path, expect_depth=False)
        depth_size = _png_size(depth_path, expect_depth=True)
        if rgb_size != depth_size:
            raise PipelineError(
                f"frame {i}: rgb {rgb_size[0]}x{rgb_size[1]} and depth "
                f"{depth_size[0]}x{depth_size[1]} are not registered"
            )
        if size is None:
            size = rgb_size
        elif rgb_size != size:
            raise PipelineError(f"frame {i}: size {rgb_size} differs from sequence size {size}")

    width, height = size
    intrinsics = load_intrinsics(directory / "intrinsics.json", width=width, height=height)
    return RgbdSequence(directory, manifest, intrinsics, width=width, height=height)


def write_sequence(directory, sequence_id: str, intrinsics: CameraIntrinsics,
                   frames, frame_pattern: str = "frames/frame_%06d") -> RgbdSequence:
    """Write frame pairs plus manifest/intrinsics as a loadable sequence."""
    directory = Path(directory)
    (directory / "frames").mkdir(parents=True, exist_ok=True)
    count = 0
    for pair in frames:
        count += 1
        manifest_stub = SequenceManifest(sequence_id, 1, frame_pattern)
        write_rgb_png(directory / manifest_stub.rgb_name(pair.index), pair.rgb)
        write_depth_png(directory / manifest_stub.depth_name(pair.index), pair.depth)
    if count == 0:
        raise PipelineError("refusing to write a sequence with no frames")
    manifest = SequenceManifest(sequence_id, count, frame_pattern)
    (directory / "manifest.json").write_bytes(manifest.to_json_bytes())
    save_intrinsics(directory / "intrinsics.json", intrinsics)
    return load_sequence(directory)
