"""Command-line driver wiring the pipeline end to end.

Subcommands: ingest-check, inpaint, label, seed-overlay, propagate,
export, eval, distances, backproject, synth. Every subcommand exits 0 on
success and nonzero with a single-line ``error: ...`` message on stderr
otherwise; outputs are byte-deterministic for identical inputs.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from . import annotations as ann_io
from . import config as config_io
from .chromakey import extract_instances
from .errors import PipelineError
from .evaluation import coco_ap
from .geometry import (
    Point3D,
    RoiBox,
    backproject,
    clip_roi,
    expand_roi,
    load_regions,
    mask_centroid_3d,
)
from .ingest import (
    RegisteredFramePair,
    load_intrinsics,
    load_sequence,
    read_depth_png,
    read_rgb_png,
    write_sequence,
)
from .inpaint import inpaint
from .propagate import SeedSelection, propagate_labels
from .synth import DEFAULT_INTRINSICS, random_tracking_trajectory, render_sequence

OVERLAY_TINTS = (
    (255, 80, 80), (80, 160, 255), (255, 210, 60),
    (200, 100, 255), (80, 255, 200), (255, 140, 40),
)


def _say(args, message: str) -> None:
    if args.verbose:
        print(message, file=sys.stderr)


def _cfg(args) -> dict | None:
    return config_io.load_config(args.config) if args.config else None


def _label_frame_job(job):
    rgb_path, depth_path, index, intrinsics, params, ipar, do_inpaint = job
    pair = RegisteredFramePair(
        rgb=read_rgb_png(rgb_path), depth=read_depth_png(depth_path), index=index
    )
    if do_inpaint and pair.depth.hole_count:
        pair = RegisteredFramePair(
            rgb=pair.rgb, depth=inpaint(pair.depth, pair.rgb, ipar), index=index
        )
    return extract_instances(pair, intrinsics, params)


def _inpaint_frame_job(job):
    rgb_path, depth_path, index, ipar = job
    pair = RegisteredFramePair(
        rgb=read_rgb_png(rgb_path), depth=read_depth_png(depth_path), index=index
    )
    return RegisteredFramePair(
        rgb=pair.rgb, depth=inpaint(pair.depth, pair.rgb, ipar), index=index
    )


def _run_jobs(fn, jobs, workers: int):
    if workers <= 1:
        return [fn(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def cmd_ingest_check(args):
    seq = load_sequence(args.sequence)
    holes = 0
    for pair in seq.frames():
        holes += pair.depth.hole_count
    print(f"ok: id={seq.manifest.sequence_id} frames={len(seq)} "
          f"size={seq.width}x{seq.height} depth_holes={holes}")


def cmd_inpaint(args):
    seq = load_sequence(args.sequence)
    ipar = config_io.inpaint_params(_cfg(args))
    jobs = [(seq.directory / seq.manifest.rgb_name(i),
             seq.directory / seq.manifest.depth_name(i), i, ipar)
            for i in range(1, len(seq) + 1)]
    pairs = _run_jobs(_inpaint_frame_job, jobs, args.jobs)
    write_sequence(args.out, seq.manifest.sequence_id, seq.intrinsics, pairs,
                   frame_pattern=seq.manifest.frame_pattern)
    print(f"in-painted {len(seq)} frames -> {args.out}")


def cmd_label(args):
    seq = load_sequence(args.sequence)
    cfg = _cfg(args)
    params = config_io.chroma_params(
        cfg,
        key_threshold=args.key_threshold,
        min_area=args.min_area,
        merge_distance=args.merge_distance,
        split_mode=args.split_mode,
    )
    ipar = config_io.inpaint_params(cfg)
    jobs = [(seq.directory / seq.manifest.rgb_name(i),
             seq.directory / seq.manifest.depth_name(i),
             i, seq.intrinsics, params, ipar, args.inpaint)
            for i in range(1, len(seq) + 1)]
    per_frame = list(_run_jobs(_label_frame_job, jobs, args.jobs))
    images = [ann_io.image_record(i, seq.manifest.rgb_name(i), seq.width, seq.height)
              for i in range(1, len(seq) + 1)]
    doc = ann_io.build_annotation_file(images, per_frame)
    ann_io.write_annotations(args.out, doc)
    total = sum(len(f.instances) for f in per_frame)
    print(f"labeled {len(seq)} frames, {total} instances -> {args.out}")


def cmd_seed_overlay(args):
    seq = load_sequence(args.sequence)
    doc = ann_io.load_annotations(args.annotations)
    if not isinstance(doc, dict):
        raise PipelineError("seed-overlay needs a full annotation document")
    frames = ann_io.frame_instances_from(doc)
    first = frames[0]
    if not first.instances:
        raise PipelineError(f"frame {first.frame_index} has no instances to seed from")
    rgb = seq.frame(first.frame_index).rgb.values.copy()
    for k, inst in enumerate(first.instances, start=1):
        tint = np.array(OVERLAY_TINTS[(k - 1) % len(OVERLAY_TINTS)], dtype=np.float64)
        rows, cols = inst.pixels[:, 0], inst.pixels[:, 1]
        rgb[rows, cols] = ((rgb[rows, cols] * 0.4) + tint * 0.6).astype(np.uint8)
    image = Image.fromarray(rgb)
    draw = ImageDraw.Draw(image)
    font = ImageFont.load_default()
    for k, inst in enumerate(first.instances, start=1):
        x, y = int(inst.bbox.x), int(inst.bbox.y)
        draw.text((x + 2, max(0, y - 12)), str(k), fill=(255, 255, 255), font=font)
    image.save(args.out, format="PNG")
    print(f"overlay with {len(first.instances)} numbered instances -> {args.out}")


def cmd_propagate(args):
    doc = ann_io.load_annotations(args.annotations)
    if not isinstance(doc, dict):
        raise PipelineError("propagate needs a full annotation document")
    frames = ann_io.frame_instances_from(doc)
    seed = SeedSelection(label=args.object_label, m1=args.seed_instance)
    gate = config_io.propagate_gate(_cfg(args), args.gate)
    labels = propagate_labels(frames, seed, gate=gate)
    out_doc = ann_io.relabel_annotations(doc, frames, labels)
    ann_io.write_annotations(args.out, out_doc)
    print(f"propagated label {seed.label} over {labels.labeled_frame_count()}"
          f"/{len(frames)} frames -> {args.out}")


def cmd_export(args):
    doc = ann_io.load_annotations(args.annotations)
    if not isinstance(doc, dict):
        raise PipelineError("export needs a full annotation document")
    alpha = config_io.eval_settings(_cfg(args), roi_alpha=args.roi_alpha)["roi_alpha"]
    sizes = {img["id"]: (img["width"], img["height"]) for img in doc["images"]}
    out_doc = json.loads(json.dumps(doc))
    for ann in out_doc["annotations"]:
        x, y, w, h = ann["bbox"]
        width, height = sizes[ann["image_id"]]
        grown = clip_roi(expand_roi(RoiBox(x, y, w, h), alpha), width, height)
        ann["bbox_roi_plus"] = [grown.x, grown.y, grown.w, grown.h]
    ann_io.write_annotations(args.out, out_doc)
    print(f"exported {len(out_doc['annotations'])} annotations "
          f"(roi alpha {alpha:g}) -> {args.out}")


def _format_ap(value) -> str:
    return "-" if value is None else f"{value:.2f}"


def cmd_eval(args):
    gt_doc = ann_io.load_annotations(args.gt)
    if not isinstance(gt_doc, dict):
        raise PipelineError("ground truth must be a full annotation document")
    pred_source = ann_io.load_annotations(args.pred)
    settings = config_io.eval_settings(_cfg(args), mode=args.mode,
                                       max_detections=args.max_detections)
    gts = ann_io.gt_instances_from(gt_doc)
    preds = ann_io.pred_instances_from(pred_source)
    report = coco_ap(preds, gts, mode=settings["mode"],
                     max_detections=settings["max_detections"])
    print(f"{'metric':<8}{'value':>8}")
    for name, value in report.as_dict().items():
        print(f"{name:<8}{_format_ap(value):>8}")
    payload = {"mode": settings["mode"], **report.as_dict()}
    print(json.dumps(payload, sort_keys=True))
    if args.json_out:
        Path(args.json_out).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def cmd_distances(args):
    seq = load_sequence(args.sequence)
    regions = load_regions(args.regions, seq.intrinsics)
    doc = ann_io.load_annotations(args.annotations)
    if not isinstance(doc, dict):
        raise PipelineError("distances needs a full annotation document")
    grouped = ann_io.anns_by_image(doc)
    rows = []
    for img in sorted(doc["images"], key=lambda i: i["id"]):
        depth = None
        for k, ann in enumerate(grouped[img["id"]], start=1):
            if "centroid_3d" in ann:
                c = np.array(ann["centroid_3d"], dtype=np.float64)
            else:
                if depth is None:
                    depth = seq.frame(img["id"]).depth
                pixels = ann_io.decode_rle(ann["segmentation"])
                c = mask_centroid_3d(pixels, depth, seq.intrinsics).as_array()
            for region in regions:
                dist = float(np.linalg.norm(region.points - c, axis=1).min())
                rows.append((img["id"], k, region.name, dist))
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", "instance", "region", "distance_m"])
        for frame, instance, name, dist in rows:
            writer.writerow([frame, instance, name, f"{dist:.6f}"])
    print(f"wrote {len(rows)} distance rows -> {args.out}")


def cmd_backproject(args):
    intrinsics = load_intrinsics(args.intrinsics)
    x, y = args.pixel
    p = backproject(x, y, args.depth, intrinsics)
    print(f"{p.x:.9g} {p.y:.9g} {p.z:.9g}")


def cmd_synth(args):
    gap = tuple(args.gap) if args.gap else None
    fixture = random_tracking_trajectory(
        seed=args.seed, num_frames=args.frames, gap=gap,
        object_label=args.object_label,
    )
    fixture.traj.hole_fraction = args.hole_fraction
    scenes, truth_labels = render_sequence(fixture.traj)
    out = Path(args.out)
    write_sequence(out, f"synth-{args.seed}", DEFAULT_INTRINSICS,
                   (s.pair for s in scenes))
    seq = load_sequence(out)
    images = [ann_io.image_record(i, seq.manifest.rgb_name(i), seq.width, seq.height)
              for i in range(1, len(seq) + 1)]
    doc = ann_io.build_annotation_file(images, [s.truth for s in scenes], truth_labels)
    ann_io.write_annotations(out / "truth.json", doc)
    print(f"synthesized {args.frames} frames (seed {args.seed}) -> {out}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chromalabel",
        description="Chroma-key RGB-D hand-instance annotation pipeline",
    )
    parser.add_argument("--config", help="TOML or JSON config file")
    parser.add_argument("--jobs", type=int, default=1, help="worker processes for frame-parallel steps")
    parser.add_argument("--verbose", action="store_true", help="progress chatter on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest-check", help="validate a sequence directory")
    p.add_argument("sequence")
    p.set_defaults(func=cmd_ingest_check)

    p = sub.add_parser("inpaint", help="fill depth holes for a whole sequence")
    p.add_argument("sequence")
    p.add_argument("--out", required=True, help="output sequence directory")
    p.set_defaults(func=cmd_inpaint)

    p = sub.add_parser("label", help="extract per-frame hand instances")
    p.add_argument("sequence")
    p.add_argument("--out", required=True, help="output annotation JSON")
    p.add_argument("--inpaint", action="store_true", help="fill depth holes on the fly")
    p.add_argument("--key-threshold", type=float, dest="key_threshold")
    p.add_argument("--min-area", type=int, dest="min_area")
    p.add_argument("--merge-distance", type=float, dest="merge_distance")
    p.add_argument("--split-mode", dest="split_mode", choices=["always", "bimodal-gated"])
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("seed-overlay", help="render frame 1 with numbered instances")
    p.add_argument("sequence")
    p.add_argument("annotations")
    p.add_argument("--out", required=True, help="output PNG")
    p.set_defaults(func=cmd_seed_overlay)

    p = sub.add_parser("propagate", help="carry a handheld-object label through the sequence")
    p.add_argument("annotations")
    p.add_argument("--seed-instance", type=int, required=True, dest="seed_instance",
                   help="1-based instance index in frame 1")
    p.add_argument("--object-label", type=int, required=True, dest="object_label",
                   help="object class id (1-4)")
    p.add_argument("--gate", type=float, help="max re-association distance in meters")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_propagate)

    p = sub.add_parser("export", help="normalize annotations and add expanded RoIs")
    p.add_argument("annotations")
    p.add_argument("--out", required=True)
    p.add_argument("--roi-alpha", type=float, dest="roi_alpha",
                   help="RoI expansion factor for classification crops")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("eval", help="COCO-style mask AP of predictions vs ground truth")
    p.add_argument("gt")
    p.add_argument("pred")
    p.add_argument("--mode", choices=["agnostic", "sensitive"])
    p.add_argument("--max-detections", type=int, dest="max_detections")
    p.add_argument("--json-out", dest="json_out", help="also write the report as JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("distances", help="per-instance distances to control regions")
    p.add_argument("annotations")
    p.add_argument("sequence")
    p.add_argument("regions", help="regions.json")
    p.add_argument("--out", required=True, help="output CSV")
    p.set_defaults(func=cmd_distances)

    p = sub.add_parser("backproject", help="map one pixel+depth to a 3D point")
    p.add_argument("--intrinsics", required=True, help="intrinsics.json")
    p.add_argument("--pixel", type=float, nargs=2, metavar=("X", "Y"), required=True)
    p.add_argument("--depth", type=float, required=True, help="meters")
    p.set_defaults(func=cmd_backproject)

    p = sub.add_parser("synth", help="write a synthetic sequence plus ground truth")
    p.add_argument("--out", required=True)
    p.add_argument("--frames", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--object-label", type=int, default=1, dest="object_label")
    p.add_argument("--hole-fraction", type=float, default=0.0, dest="hole_fraction")
    p.add_argument("--gap", type=int, nargs=2, metavar=("START", "LENGTH"),
                   help="hide the holding hand for LENGTH frames from START (1-based)")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (PipelineError, ValueError, OSError) as exc:
        message = " ".join(str(exc).split())
        print(f"error: {message}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
