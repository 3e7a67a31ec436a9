"""Propagate a handheld-object label through a sequence of hand instances.

A human seeds the first frame (which instance holds which object); every
later frame assigns the label to the instance nearest in 3D to the last
known holder, but only within a distance gate so that a temporarily
occluded hand yields unlabeled frames instead of wrong ones.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Sequence

from .chromakey import FrameInstances, InstanceMask
from .errors import PipelineError
from .geometry import point_distance

DEFAULT_GATE = 0.15  # meters


class ObjectClass(IntEnum):
    NO_OBJECT = 0
    SMARTPHONE = 1
    TABLET = 2
    DRINK = 3
    BOOK = 4


OBJECT_CLASS_NAMES = {
    ObjectClass.NO_OBJECT: "no object",
    ObjectClass.SMARTPHONE: "smartphone",
    ObjectClass.TABLET: "tablet",
    ObjectClass.DRINK: "drink",
    ObjectClass.BOOK: "book",
}

OBJECT_LABELS = tuple(c.value for c in ObjectClass if c != ObjectClass.NO_OBJECT)


@dataclass(frozen=True)
class SeedSelection:
    """The human input: frame-1 instance ``m1`` (1-based) holds ``label``."""

    label: int
    m1: int

    def __post_init__(self):
        if self.label not in OBJECT_LABELS:
            raise PipelineError(f"object label must be one of {OBJECT_LABELS}, got {self.label}")
        if self.m1 < 1:
            raise PipelineError(f"seed instance index must be >= 1, got {self.m1}")


@dataclass
class SequenceLabels:
    """Per-frame object-class vector, one entry per instance, 0 = no object."""

    label: int
    frames: list[list[int]]

    def labeled_frame_count(self) -> int:
        return sum(1 for vec in self.frames if any(vec))


def nearest_instance(instances: FrameInstances, last: InstanceMask) -> tuple[int, float]:
    """Index (1-based) and 3D-centroid distance of the instance closest to ``last``.

    Ties go to the lowest index.
    """
    if not instances.instances:
        raise ValueError(f"frame {instances.frame_index} has no instances")
    target = last.centroid_3d
    best_index = 0
    best_dist = None
    for j, inst in enumerate(instances.instances, start=1):
        d = point_distance(inst.centroid_3d, target)
        if best_dist is None or d < best_dist:
            best_index, best_dist = j, d
    return best_index, best_dist


def propagate_labels(sequence: Sequence[FrameInstances], seed: SeedSelection,
                     gate: float = DEFAULT_GATE) -> SequenceLabels:
    """Carry the seed label frame-to-frame by nearest 3D centroid.

    Frame 1 takes the label on the seeded instance. Each later frame
    labels its nearest instance to the last holder iff that distance is
    <= ``gate``; otherwise (occlusion, empty frame, or a jump) the frame
    is all zeros and the last holder is kept for re-acquisition.
    """
    if gate <= 0:
        raise PipelineError(f"gate must be positive, got {gate}")
    if not sequence:
        raise PipelineError("cannot propagate labels over an empty sequence")
    first = sequence[0]
    if not first.instances:
        raise PipelineError(f"frame {first.frame_index} has no instances to seed from")
    if seed.m1 > len(first.instances):
        raise PipelineError(
            f"seed instance {seed.m1} out of range: frame {first.frame_index} "
            f"has {len(first.instances)} instances"
        )

    frames = []
    vec = [0] * len(first.instances)
    vec[seed.m1 - 1] = seed.label
    frames.append(vec)
    last = first.instances[seed.m1 - 1]

    for frame in sequence[1:]:
        vec = [0] * len(frame.instances)
        if frame.instances:
            j, dist = nearest_instance(frame, last)
            if dist <= gate:
                vec[j - 1] = seed.label
                last = frame.instances[j - 1]
        frames.append(vec)
    return SequenceLabels(label=seed.label, frames=frames)
