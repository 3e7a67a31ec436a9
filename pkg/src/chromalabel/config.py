"""Pipeline configuration from TOML or JSON files.

Recognized blocks and keys (all optional, shown with defaults)::

    [chromakey]                      [inpaint]
    key_threshold = 40.0             num_scales = 3
    min_area = 20                    spatial_sigma = 3.0
    merge_distance = 0.07            range_sigma = 20.0
    connectivity = 8                 kernel_radius = 5
    split_mode = "always"
                                     [eval]
    [propagate]                      mode = "agnostic"
    gate = 0.15                      max_detections = 50
                                     roi_alpha = 0.5

Command-line flags override file values.
"""

from __future__ import annotations

import json
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .chromakey import ChromaParams
from .errors import PipelineError
from .evaluation import DEFAULT_MAX_DETECTIONS
from .inpaint import InpaintParams
from .propagate import DEFAULT_GATE

DEFAULT_ROI_ALPHA = 0.5

KNOWN_BLOCKS = {
    "chromakey": {"key_threshold", "min_area", "merge_distance", "connectivity", "split_mode"},
    "inpaint": {"num_scales", "spatial_sigma", "range_sigma", "kernel_radius"},
    "propagate": {"gate"},
    "eval": {"mode", "max_detections", "roi_alpha"},
}


def load_config(path) -> dict:
    """Parse a TOML or JSON config file, auto-detected by suffix then content."""
    path = Path(path)
    if not path.is_file():
        raise PipelineError(f"config file not found: {path}")
    raw = path.read_bytes()
    suffix = path.suffix.lower()
    parsers = []
    if suffix == ".toml":
        parsers = [("TOML", lambda: tomllib.loads(raw.decode()))]
    elif suffix == ".json":
        parsers = [("JSON", lambda: json.loads(raw.decode()))]
    else:
        parsers = [("JSON", lambda: json.loads(raw.decode())),
                   ("TOML", lambda: tomllib.loads(raw.decode()))]
    errors = []
    doc = None
    for name, parse in parsers:
        try:
            doc = parse()
            break
        except Exception as exc:  # tomllib/json raise different types
            errors.append(f"{name}: {exc}")
    if doc is None:
        raise PipelineError(f"could not parse config {path} ({'; '.join(errors)})")
    if not isinstance(doc, dict):
        raise PipelineError(f"config {path} must be a table/object at top level")
    for block, keys in doc.items():
        if block not in KNOWN_BLOCKS:
            raise PipelineError(f"unknown config block {block!r}")
        if not isinstance(keys, dict):
            raise PipelineError(f"config block {block!r} must be a table/object")
        unknown = set(keys) - KNOWN_BLOCKS[block]
        if unknown:
            raise PipelineError(f"unknown keys in [{block}]: {sorted(unknown)}")
    return doc


def _merged(cfg: dict | None, block: str, overrides: dict) -> dict:
    values = dict((cfg or {}).get(block, {}))
    values.update({k: v for k, v in overrides.items() if v is not None})
    return values


def chroma_params(cfg: dict | None = None, **overrides) -> ChromaParams:
    values = _merged(cfg, "chromakey", overrides)
    params = ChromaParams(**values)
    return params


def inpaint_params(cfg: dict | None = None, **overrides) -> InpaintParams:
    return InpaintParams(**_merged(cfg, "inpaint", overrides))


def propagate_gate(cfg: dict | None = None, gate: float | None = None) -> float:
    return float(_merged(cfg, "propagate", {"gate": gate}).get("gate", DEFAULT_GATE))


def eval_settings(cfg: dict | None = None, mode: str | None = None,
                  max_detections: int | None = None,
                  roi_alpha: float | None = None) -> dict:
    values = _merged(cfg, "eval", {
        "mode": mode, "max_detections": max_detections, "roi_alpha": roi_alpha,
    })
    return {
        "mode": values.get("mode", "agnostic"),
        "max_detections": int(values.get("max_detections", DEFAULT_MAX_DETECTIONS)),
        "roi_alpha": float(values.get("roi_alpha", DEFAULT_ROI_ALPHA)),
    }
