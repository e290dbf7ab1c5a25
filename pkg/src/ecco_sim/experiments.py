"""Scenario builders and small experiments that reproduce qualitative trends."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .accuracy_model import (AccuracyModel, CameraState, ModelParams,
                             TrainingBatchStats, sampling_utility)
from .netsim import FlowParams, Topology, simulate_window
from .scenario import ScenarioConfig, parse_scenario
from .transmission import (GAIMD_BETA, SamplingConfig, adapt_compression,
                           build_profile_table, config_grid, make_probe,
                           set_aimd_params)


def _camera(cid: str, loc, scene, acc: float, **extra) -> dict[str, Any]:
    cam = {"id": cid, "location": [float(loc[0]), float(loc[1])],
           "scene": [float(x) for x in scene], "local_acc": acc}
    cam.update(extra)
    return cam


def correlated_scenario(n_cameras: int, n_regions: int = 2, *, gpus: int = 1,
                        shared_bps: float = 2e7, k: float = 0.01,
                        num_windows: int = 8, micro_windows: int = 10,
                        policy: str = "ecco", grouping: bool | None = None,
                        scene_spread: float = 0.0, seed: int = 0,
                        region_gap_m: float = 5000.0) -> dict[str, Any]:
    """Cameras clustered in regions; every camera in a region drifts together.

    ``scene_spread`` perturbs each camera's post-drift scene away from its
    region's scene (0 keeps them identical).
    """
    rng = np.random.default_rng(seed)
    base = [np.clip(rng.uniform(0.1, 0.9, 2), 0, 1) for _ in range(n_regions)]
    drifted = [np.clip(rng.uniform(0.1, 0.9, 2), 0, 1) for _ in range(n_regions)]
    cameras, events = [], []
    for i in range(n_cameras):
        r = i % n_regions
        loc = (r * region_gap_m + 40.0 * (i // n_regions), 0.0)
        scene = np.clip(drifted[r] + rng.normal(0, scene_spread, 2), 0, 1) \
            if scene_spread > 0 else drifted[r]
        cid = f"cam{i:02d}"
        cameras.append(_camera(cid, loc, base[r], 0.45))
        events.append({"camera": cid, "time_s": 0.0, "new_scene": [float(x) for x in scene],
                       "acc_drop": 0.3})
    out = {
        "name": f"correlated-{n_cameras}",
        "seed": seed,
        "policy": policy,
        "num_windows": num_windows,
        "model": {"k": k},
        "allocator": {"gpus": gpus, "micro_windows": micro_windows},
        "topology": {"shared_capacity_bps": shared_bps},
        "cameras": cameras,
        "drift_events": events,
    }
    if grouping is not None:
        out["grouping"] = {"enabled": grouping}
    return out


def dissimilar_scenario(n_cameras: int = 4, *, gpus: int = 1, seed: int = 0,
                        num_windows: int = 8, k: float = 0.01,
                        grouping: bool | None = None) -> dict[str, Any]:
    """Co-located cameras whose post-drift scenes are far apart."""
    corners = [(0.0, 0.0), (1.0, 1.0), (0.0, 1.0), (1.0, 0.0), (0.5, 0.5)]
    cameras, events = [], []
    for i in range(n_cameras):
        cid = f"cam{i:02d}"
        cameras.append(_camera(cid, (30.0 * i, 0.0), (0.5, 0.5), 0.45))
        events.append({"camera": cid, "time_s": 0.0,
                       "new_scene": list(corners[i % len(corners)]), "acc_drop": 0.3})
    out = {"name": "dissimilar", "seed": seed, "num_windows": num_windows,
           "model": {"k": k}, "allocator": {"gpus": gpus},
           "topology": {"shared_capacity_bps": 2e7},
           "cameras": cameras, "drift_events": events}
    if grouping is not None:
        out["grouping"] = {"enabled": grouping}
    return out


def divergence_scenario(diverge_window: int = 6, num_windows: int = 10,
                        k: float = 0.01) -> dict[str, Any]:
    """Three vehicles share a drift; the third diverges in ``diverge_window``."""
    shared, apart = [0.6, 0.4], [0.3, 0.4]
    cameras = [_camera(f"cam{i}", (60.0 * i, 0.0), (0.2, 0.2), 0.45, kind="mobile")
               for i in range(1, 4)]
    events = [{"camera": f"cam{i}", "time_s": 0.0, "new_scene": shared, "acc_drop": 0.3}
              for i in range(1, 4)]
    events.append({"camera": "cam3", "time_s": (diverge_window - 1) * 60.0,
                   "new_scene": apart, "acc_drop": 0.0})
    return {"name": "divergence", "num_windows": num_windows, "model": {"k": k},
            "topology": {"shared_capacity_bps": 2e7},
            "cameras": cameras, "drift_events": events}


def build(data: dict[str, Any]) -> ScenarioConfig:
    return parse_scenario(data)


@dataclass
class SplitResult:
    accuracy: dict[str, list[float]]
    rates: dict[str, float]

    @property
    def final(self) -> dict[str, float]:
        return {c: v[-1] for c, v in self.accuracy.items()}

    @property
    def mean_final(self) -> float:
        return sum(self.final.values()) / len(self.final)


def bandwidth_split_experiment(proportional: bool, gpu_split: Sequence[float] = (0.3, 0.7),
                               shared_bps: float = 3e6, windows: int = 5,
                               micro_windows: int = 10, window_s: float = 60.0,
                               start_acc: Sequence[float] = (0.28, 0.16),
                               kinds: Sequence[str] = ("static", "mobile"),
                               params: ModelParams | None = None,
                               pixel_throughput: float = 3e7,
                               alpha_unit: float = 5e5,
                               bpp_ref: float = 0.15) -> SplitResult:
    """Two single-camera jobs with a fixed GPU split; bandwidth split by GAIMD.

    ``proportional`` sets each camera's additive increase from its GPU share;
    otherwise both cameras compete with identical parameters.
    """
    params = params or ModelParams(learning_rate=0.01)
    model = AccuracyModel(params)
    d = window_s / micro_windows
    cams = [CameraState(f"cam{chr(65 + i)}", (0.0, 100.0 * i), (0.2 + 0.5 * i, 0.5),
                        start_acc[i], gpu_pixel_throughput=pixel_throughput,
                        kind=kinds[i]) for i in range(len(gpu_split))]
    slots = _split_micro_windows(gpu_split, micro_windows)
    probe = make_probe(model, window_s, 1, shared_bps / len(gpu_split), bpp_ref)
    levels = [m * d for m in range(1, micro_windows + 1)]
    grid = config_grid()

    configs, flows, utility = {}, [], {}
    for cam, share in zip(cams, gpu_split):
        table = build_profile_table(cam, levels, grid, probe, window_s)
        row, _ = table.lookup(share * window_s)
        configs[cam.id] = row.config
        utility[cam.id] = sampling_utility(cam.kind, row.config.frame_rate,
                                           row.config.resolution, params)
        if proportional:
            flows.append(set_aimd_params(share, 1, alpha_unit, cam.id))
        else:
            flows.append(FlowParams(cam.id, alpha_unit, GAIMD_BETA))
    net = simulate_window(flows, Topology(shared_bps), window_s)

    models = {cam.id: model.seed_model(cam.scene, cam.local_model_acc) for cam in cams}
    history = {cam.id: [] for cam in cams}
    for _ in range(windows):
        for cam, share, n_slots in zip(cams, gpu_split, slots):
            cfg: SamplingConfig = configs[cam.id]
            comp = adapt_compression(net.mean_rates[cam.id], cfg, bpp_ref)
            batch = TrainingBatchStats(cfg.frame_rate, cfg.resolution, comp.quality_factor,
                                       {cam.id: 1.0}, share, utility[cam.id])
            for _ in range(n_slots):
                models[cam.id] = model.train_step(models[cam.id], batch, d, [cam])
            history[cam.id].append(model.eval(models[cam.id], cam))
    return SplitResult(history, dict(net.mean_rates))


def _split_micro_windows(shares: Sequence[float], W: int) -> list[int]:
    raw = [s * W for s in shares]
    slots = [math.floor(x) for x in raw]
    for i in sorted(range(len(raw)), key=lambda i: slots[i] - raw[i])[:W - sum(slots)]:
        slots[i] += 1
    return slots


def three_group_flows(gpu_ratio: Sequence[float] = (3, 5, 2),
                      group_sizes: Sequence[int] = (2, 1, 1),
                      shared_bps: float = 9e6, cap_group: int = 0,
                      cap_bps: float = 1e6, alpha_unit: float = 5e5):
    """Per-camera GAIMD flows for groups with fixed GPU shares.

    Cameras in group ``cap_group`` sit behind ``cap_bps`` access links.
    Returns (flows, topology, group -> flow ids).
    """
    total = sum(gpu_ratio)
    flows, caps, members = [], {}, {}
    for g, (share, n) in enumerate(zip(gpu_ratio, group_sizes)):
        name = chr(65 + g)
        members[name] = []
        for i in range(n):
            fid = f"{name}{i + 1}"
            flows.append(set_aimd_params(share / total, n, alpha_unit, fid))
            members[name].append(fid)
            if g == cap_group:
                caps[fid] = cap_bps
    return flows, Topology(shared_bps, caps), members
