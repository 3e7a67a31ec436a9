"""Chroma-key RGB-D hand-instance annotation pipeline.

Load registered RGB-D sequences, fill depth holes, extract per-frame
hand-instance masks by green keying with depth-aware splitting and
merging, propagate handheld-object labels through a sequence, localize
instances in 3D, and score prediction sets with COCO-style mask AP.
"""

from .chromakey import (
    ChromaParams,
    FrameInstances,
    InstanceMask,
    build_instance,
    chroma_mask,
    connected_components,
    depth_split,
    extract_instances,
    merge_instances,
    otsu_threshold,
    relative_luminance,
)
from .errors import PipelineError
from .evaluation import (
    ApReport,
    GtInstance,
    PredInstance,
    average_precision,
    coco_ap,
    mask_iou,
    match_instances,
)
from .geometry import (
    CameraIntrinsics,
    ControlRegion,
    Point3D,
    RoiBox,
    backproject,
    backproject_pixels,
    clip_roi,
    distance_3d,
    distance_to_region,
    expand_roi,
    load_regions,
    mask_centroid_3d,
    mask_to_bbox,
    point_distance,
    project,
)
from .ingest import (
    DepthFrame,
    RegisteredFramePair,
    RgbdSequence,
    RgbFrame,
    SequenceManifest,
    load_intrinsics,
    load_sequence,
    save_intrinsics,
    write_sequence,
)
from .inpaint import InpaintParams, inpaint
from .propagate import (
    ObjectClass,
    OBJECT_CLASS_NAMES,
    SeedSelection,
    SequenceLabels,
    nearest_instance,
    propagate_labels,
)
from .synth import (
    BlobSpec,
    OccluderSpec,
    RenderedScene,
    SceneSpec,
    TrackingFixture,
    TrackSpec,
    TrajectorySpec,
    random_separated_scene,
    random_tracking_trajectory,
    render_scene,
    render_sequence,
)

__version__ = "0.1.0"
