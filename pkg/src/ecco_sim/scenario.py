"""Scenario configuration: JSON schema, defaults and loading."""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import jsonschema

from .accuracy_model import CameraState, DriftEvent, ModelParams
from .gpu_allocator import POLICIES, AllocatorConfig
from .grouping import GroupingConfig
from .netsim import Topology
from .transmission import DEFAULT_FRAME_RATES, DEFAULT_RESOLUTIONS


class ScenarioError(ValueError):
    """Malformed scenario; ``path`` points at the offending field."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_vec = {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1},
        "minItems": 1}
_point = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}

SCHEMA: dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "required": ["cameras"],
    "properties": {
        "name": {"type": "string"},
        "seed": {"type": "integer"},
        "policy": {"enum": list(POLICIES)},
        "window_s": _pos,
        "num_windows": {"type": "integer", "minimum": 1},
        "drift_threshold": {"type": "number", "minimum": 0, "maximum": 1},
        "equal_bandwidth": {"type": ["boolean", "null"]},
        "fixed_sampling": {
            "oneOf": [{"type": "null"}, {
                "type": "object", "additionalProperties": False,
                "required": ["fps", "resolution"],
                "properties": {"fps": _pos, "resolution": _pos}}]},
        "model": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "k": {"type": "number", "minimum": 0},
                "lambda": _pos,
                "acc_floor": {"type": "number", "minimum": 0, "maximum": 1},
                "acc_ceil": {"type": "number", "minimum": 0, "maximum": 1},
                "cluster_threshold": {"type": "number", "minimum": 0, "maximum": 1},
            }},
        "allocator": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "obj_alpha": {"type": "number", "minimum": 0},
                "size_exponent_beta": {"type": "number", "maximum": 1},
                "micro_windows": {"type": "integer", "minimum": 1},
                "gpus": {"type": "integer", "minimum": 1},
                "fairness_bonus": {"type": "boolean"},
            }},
        "grouping": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "enabled": {"type": ["boolean", "null"]},
                "epsilon_s": _pos,
                "delta_m": _pos,
                "drop_threshold": _pos,
            }},
        "transmission": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "alpha_unit_bps": _pos,
                "bpp_ref": _pos,
                "ref_bitrate_bps": _pos,
                "frame_rates": {"type": "array", "items": _pos, "minItems": 1},
                "resolutions": {"type": "array", "items": _pos, "minItems": 1},
            }},
        "topology": {
            "type": "object", "additionalProperties": False,
            "required": ["shared_capacity_bps"],
            "properties": {
                "shared_capacity_bps": _pos,
                "rtt_s": _pos,
                "buffer_bdp": {"type": "number", "minimum": 0},
                "capacity_jitter": {"type": "number", "minimum": 0, "maximum": 0.9},
            }},
        "cameras": {
            "type": "array", "minItems": 1,
            "items": {
                "type": "object", "additionalProperties": False,
                "required": ["id", "location", "scene", "local_acc"],
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "location": _point,
                    "scene": _vec,
                    "local_acc": {"type": "number", "minimum": 0, "maximum": 1},
                    "uplink_cap_bps": _pos,
                    "pixel_throughput": _pos,
                    "kind": {"enum": ["neutral", "static", "mobile"]},
                }}},
        "drift_events": {
            "type": "array",
            "items": {
                "type": "object", "additionalProperties": False,
                "required": ["camera", "time_s", "new_scene"],
                "properties": {
                    "camera": {"type": "string"},
                    "time_s": {"type": "number", "minimum": 0},
                    "new_scene": _vec,
                    "acc_drop": {"type": "number", "minimum": 0, "maximum": 1},
                }}},
    },
}


@dataclass(frozen=True)
class TransmissionConfig:
    alpha_unit: float = 5e5  # bits/s per RTT
    bpp_ref: float = 0.1
    ref_bitrate: float = 1e6
    frame_rates: tuple[float, ...] = DEFAULT_FRAME_RATES
    resolutions: tuple[float, ...] = DEFAULT_RESOLUTIONS


@dataclass(frozen=True)
class ScenarioConfig:
    cameras: tuple[CameraState, ...]
    drift_events: tuple[DriftEvent, ...] = ()
    model: ModelParams = field(default_factory=ModelParams)
    allocator: AllocatorConfig = field(default_factory=AllocatorConfig)
    grouping: GroupingConfig = field(default_factory=GroupingConfig)
    transmission: TransmissionConfig = field(default_factory=TransmissionConfig)
    topology: Topology = field(default_factory=lambda: Topology(shared_capacity=1e7))
    window_s: float = 60.0
    num_windows: int = 10
    policy: str = "ecco"
    grouping_enabled: bool | None = None
    equal_bandwidth: bool | None = None
    fixed_sampling: tuple[float, float] | None = None
    drift_threshold: float = 0.25
    capacity_jitter: float = 0.0
    seed: int = 0
    name: str = "scenario"

    # policy presets: ECCO groups cameras and steers bandwidth; the
    # baselines retrain each camera alone at 5 fps / 960 with equal sharing
    @property
    def use_grouping(self) -> bool:
        if self.grouping_enabled is not None:
            return self.grouping_enabled
        return self.policy == "ecco"

    @property
    def use_equal_bandwidth(self) -> bool:
        if self.equal_bandwidth is not None:
            return self.equal_bandwidth
        return self.policy != "ecco"

    @property
    def sampling_override(self) -> tuple[float, float] | None:
        if self.fixed_sampling is not None:
            return self.fixed_sampling
        return None if self.policy == "ecco" else (5.0, 960.0)

    def camera(self, camera_id: str) -> CameraState:
        for c in self.cameras:
            if c.id == camera_id:
                return c
        raise KeyError(camera_id)

    def with_(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)


def _path(err: jsonschema.ValidationError) -> str:
    return "$" + "".join(f"[{p}]" if isinstance(p, int) else f".{p}"
                         for p in err.absolute_path)


def parse_scenario(data: dict[str, Any]) -> ScenarioConfig:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        raise ScenarioError(errors[0].message, _path(errors[0]))
    data = copy.deepcopy(data)

    m = data.get("model", {})
    try:
        model = ModelParams(
            learning_rate=m.get("k", 0.05),
            similarity_scale=m.get("lambda", 0.5),
            acc_floor=m.get("acc_floor", 0.1),
            acc_ceil=m.get("acc_ceil", 0.6),
            cluster_threshold=m.get("cluster_threshold", 0.9))
    except ValueError as exc:
        raise ScenarioError(str(exc), "$.model") from None

    window_s = float(data.get("window_s", 60.0))
    a = data.get("allocator", {})
    W = a.get("micro_windows", 10)
    alloc = AllocatorConfig(
        obj_alpha=a.get("obj_alpha", 1.0),
        size_exponent_beta=a.get("size_exponent_beta", 0.5),
        micro_windows_W=W,
        micro_window_duration=window_s / W,
        gpu_count_G=a.get("gpus", 1),
        fairness_bonus=a.get("fairness_bonus", True))

    g = data.get("grouping", {})
    grouping = GroupingConfig(epsilon=g.get("epsilon_s", 120.0),
                              delta=g.get("delta_m", 500.0),
                              drop_threshold_p=g.get("drop_threshold", 0.2))

    t = data.get("transmission", {})
    trans = TransmissionConfig(
        alpha_unit=t.get("alpha_unit_bps", 5e5),
        bpp_ref=t.get("bpp_ref", 0.1),
        ref_bitrate=t.get("ref_bitrate_bps", 1e6),
        frame_rates=tuple(float(x) for x in t.get("frame_rates", DEFAULT_FRAME_RATES)),
        resolutions=tuple(float(x) for x in t.get("resolutions", DEFAULT_RESOLUTIONS)))

    dim = len(data["cameras"][0]["scene"])
    cameras = []
    seen = set()
    for i, c in enumerate(data["cameras"]):
        if c["id"] in seen:
            raise ScenarioError(f"duplicate camera id {c['id']!r}", f"$.cameras[{i}].id")
        seen.add(c["id"])
        if len(c["scene"]) != dim:
            raise ScenarioError(f"scene dimension {len(c['scene'])} != {dim}",
                                f"$.cameras[{i}].scene")
        cameras.append(CameraState(
            id=c["id"], location=tuple(float(x) for x in c["location"]),
            scene=tuple(float(x) for x in c["scene"]),
            local_model_acc=float(c["local_acc"]),
            local_uplink_cap=float(c.get("uplink_cap_bps", math.inf)),
            gpu_pixel_throughput=float(c.get("pixel_throughput", 3.0e7)),
            kind=c.get("kind", "neutral")))

    events = []
    for i, e in enumerate(data.get("drift_events", [])):
        if e["camera"] not in seen:
            raise ScenarioError(f"unknown camera {e['camera']!r}",
                                f"$.drift_events[{i}].camera")
        if len(e["new_scene"]) != dim:
            raise ScenarioError(f"scene dimension {len(e['new_scene'])} != {dim}",
                                f"$.drift_events[{i}].new_scene")
        events.append(DriftEvent(e["camera"], float(e["time_s"]),
                                 tuple(float(x) for x in e["new_scene"]),
                                 float(e.get("acc_drop", 0.0))))
    events.sort(key=lambda e: (e.time, e.camera_id))

    topo = data.get("topology", {"shared_capacity_bps": 1e7})
    topology = Topology(
        shared_capacity=float(topo["shared_capacity_bps"]),
        local_caps={c.id: c.local_uplink_cap for c in cameras
                    if math.isfinite(c.local_uplink_cap)},
        rtt=float(topo.get("rtt_s", 0.05)),
        buffer_bdp=float(topo.get("buffer_bdp", 1.0)))

    fixed = data.get("fixed_sampling")
    grp_enabled = g.get("enabled")
    return ScenarioConfig(
        cameras=tuple(cameras), drift_events=tuple(events), model=model,
        allocator=alloc, grouping=grouping, transmission=trans, topology=topology,
        window_s=window_s, num_windows=data.get("num_windows", 10),
        policy=data.get("policy", "ecco"),
        grouping_enabled=grp_enabled,
        equal_bandwidth=data.get("equal_bandwidth"),
        fixed_sampling=(float(fixed["fps"]), float(fixed["resolution"])) if fixed else None,
        drift_threshold=data.get("drift_threshold", 0.25),
        capacity_jitter=float(topo.get("capacity_jitter", 0.0)),
        seed=data.get("seed", 0),
        name=data.get("name", "scenario"))


def load_scenario(path) -> ScenarioConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON: {exc}", str(path)) from None
    return parse_scenario(data)


def scenario_to_dict(cfg: ScenarioConfig) -> dict[str, Any]:
    """Inverse of ``parse_scenario`` (round-trips every field it reads)."""
    out: dict[str, Any] = {
        "name": cfg.name,
        "seed": cfg.seed,
        "policy": cfg.policy,
        "window_s": cfg.window_s,
        "num_windows": cfg.num_windows,
        "drift_threshold": cfg.drift_threshold,
        "equal_bandwidth": cfg.equal_bandwidth,
        "fixed_sampling": None if cfg.fixed_sampling is None else {
            "fps": cfg.fixed_sampling[0], "resolution": cfg.fixed_sampling[1]},
        "model": {"k": cfg.model.learning_rate, "lambda": cfg.model.similarity_scale,
                  "acc_floor": cfg.model.acc_floor, "acc_ceil": cfg.model.acc_ceil,
                  "cluster_threshold": cfg.model.cluster_threshold},
        "allocator": {"obj_alpha": cfg.allocator.obj_alpha,
                      "size_exponent_beta": cfg.allocator.size_exponent_beta,
                      "micro_windows": cfg.allocator.micro_windows_W,
                      "gpus": cfg.allocator.gpu_count_G,
                      "fairness_bonus": cfg.allocator.fairness_bonus},
        "grouping": {"enabled": cfg.grouping_enabled, "epsilon_s": cfg.grouping.epsilon,
                     "delta_m": cfg.grouping.delta,
                     "drop_threshold": cfg.grouping.drop_threshold_p},
        "transmission": {"alpha_unit_bps": cfg.transmission.alpha_unit,
                         "bpp_ref": cfg.transmission.bpp_ref,
                         "ref_bitrate_bps": cfg.transmission.ref_bitrate,
                         "frame_rates": list(cfg.transmission.frame_rates),
                         "resolutions": list(cfg.transmission.resolutions)},
        "topology": {"shared_capacity_bps": cfg.topology.shared_capacity,
                     "rtt_s": cfg.topology.rtt, "buffer_bdp": cfg.topology.buffer_bdp,
                     "capacity_jitter": cfg.capacity_jitter},
        "cameras": [],
        "drift_events": [{"camera": e.camera_id, "time_s": e.time,
                          "new_scene": list(e.new_scene), "acc_drop": e.acc_drop}
                         for e in cfg.drift_events],
    }
    for c in cfg.cameras:
        cam = {"id": c.id, "location": list(c.location), "scene": list(c.scene),
               "local_acc": c.local_model_acc,
               "pixel_throughput": c.gpu_pixel_throughput, "kind": c.kind}
        if math.isfinite(c.local_uplink_cap):
            cam["uplink_cap_bps"] = c.local_uplink_cap
        out["cameras"].append(cam)
    return out
