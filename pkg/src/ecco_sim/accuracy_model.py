"""Parametric stand-in for DNN retraining.

A retraining job's knowledge is a map from scene cluster to a proficiency in
[0, 1].  Per-camera accuracy is the proficiency on the camera's cluster,
discounted by how far the camera's scene sits from the model's training mix.
Training effort raises proficiency along a saturating exponential.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

SceneVector = tuple[float, ...]

DEFAULT_ASPECT = 16 / 9


class InvalidInputError(ValueError):
    pass


@dataclass(frozen=True)
class ModelParams:
    learning_rate: float = 0.05  # k, per effective GPU-second
    similarity_scale: float = 0.5  # lambda
    acc_floor: float = 0.1
    acc_ceil: float = 0.6
    cluster_threshold: float = 0.9
    aspect_ratio: float = DEFAULT_ASPECT
    resolution_ref: float = 960.0
    frame_rate_ref: float = 15.0

    def __post_init__(self):
        if not 0 <= self.acc_floor < self.acc_ceil <= 1:
            raise InvalidInputError("need 0 <= acc_floor < acc_ceil <= 1")
        if self.similarity_scale <= 0:
            raise InvalidInputError("similarity_scale must be positive")
        if self.learning_rate < 0:
            raise InvalidInputError("learning_rate must be non-negative")


@dataclass(frozen=True)
class CameraState:
    id: str
    location: tuple[float, float]
    scene: SceneVector
    local_model_acc: float
    local_uplink_cap: float = math.inf  # bits/s
    gpu_pixel_throughput: float = 3.0e7  # pixels/s per GPU
    kind: str = "neutral"  # neutral | static | mobile

    def __post_init__(self):
        if not 0 <= self.local_model_acc <= 1:
            raise InvalidInputError(f"camera {self.id}: local_model_acc outside [0, 1]")
        if self.local_uplink_cap <= 0 or self.gpu_pixel_throughput <= 0:
            raise InvalidInputError(f"camera {self.id}: caps must be positive")


@dataclass(frozen=True)
class ModelState:
    proficiency: Mapping[int, float] = field(default_factory=dict)
    centroid: SceneVector = ()


@dataclass(frozen=True)
class DriftEvent:
    camera_id: str
    time: float
    new_scene: SceneVector
    acc_drop: float

    def __post_init__(self):
        if self.time < 0:
            raise InvalidInputError("drift time must be >= 0")
        if not 0 <= self.acc_drop <= 1:
            raise InvalidInputError("acc_drop must be in [0, 1]")


@dataclass(frozen=True)
class TrainingBatchStats:
    """Aggregated training data delivered to one job.

    ``train_fraction`` is the share of wall-clock time the job holds the
    GPUs; data streamed over the whole window is buffered and consumed
    during that share, so the supplied rate seen by the trainer is
    ``delivered pixel rate / train_fraction``.  ``sampling_utility``
    scales effort by how well the sampling configuration suits the
    camera type (1 for neutral cameras).
    """

    delivered_frame_rate: float
    resolution: float
    quality_factor: float
    source_mix: Mapping[str, float]
    train_fraction: float = 1.0
    sampling_utility: float = 1.0

    def __post_init__(self):
        if self.delivered_frame_rate < 0:
            raise InvalidInputError("delivered_frame_rate must be >= 0")
        if not 0 <= self.quality_factor <= 1:
            raise InvalidInputError("quality_factor must be in [0, 1]")
        if self.source_mix and abs(sum(self.source_mix.values()) - 1) > 1e-9:
            raise InvalidInputError("source_mix fractions must sum to 1")
        if not 0 < self.train_fraction <= 1:
            raise InvalidInputError("train_fraction must be in (0, 1]")


def pixels(resolution: float, aspect: float = DEFAULT_ASPECT) -> float:
    """Pixel count of a frame with the given vertical resolution."""
    return resolution * resolution * aspect


def similarity(a: Sequence[float], b: Sequence[float], scale: float) -> float:
    if len(a) != len(b):
        raise InvalidInputError(f"scene dimension mismatch: {len(a)} vs {len(b)}")
    if scale <= 0:
        raise InvalidInputError("similarity scale must be positive")
    dist = math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)))
    return math.exp(-dist / scale)


def sampling_utility(kind: str, frame_rate: float, resolution: float,
                     params: ModelParams) -> float:
    # static cameras need resolution for small distant objects,
    # mobile ones need frame rate to keep up with scene change; the square
    # keeps the preferred knob non-decreasing in budget on a discrete grid
    if kind == "static":
        return min(1.0, resolution / params.resolution_ref) ** 2
    if kind == "mobile":
        return min(1.0, frame_rate / params.frame_rate_ref) ** 2
    if kind == "neutral":
        return 1.0
    raise InvalidInputError(f"unknown camera kind {kind!r}")


class SceneClusters:
    """Registry of scene clusters, shared by every model in a scenario.

    A scene belongs to the most similar existing cluster when that
    similarity reaches the threshold; otherwise it founds a new cluster.
    Ids are handed out in registration order.
    """

    def __init__(self, params: ModelParams):
        self.params = params
        self.centroids: list[SceneVector] = []

    def lookup(self, scene: Sequence[float]) -> int | None:
        best, best_sim = None, -1.0
        for cid, centroid in enumerate(self.centroids):
            s = similarity(scene, centroid, self.params.similarity_scale)
            if s > best_sim:
                best, best_sim = cid, s
        if best is not None and best_sim >= self.params.cluster_threshold:
            return best
        return None

    def assign(self, scene: Sequence[float]) -> int:
        cid = self.lookup(scene)
        if cid is None:
            self.centroids.append(tuple(float(x) for x in scene))
            cid = len(self.centroids) - 1
        return cid

    def __len__(self):
        return len(self.centroids)


class AccuracyModel:
    def __init__(self, params: ModelParams | None = None,
                 clusters: SceneClusters | None = None):
        self.params = params or ModelParams()
        self.clusters = clusters or SceneClusters(self.params)

    def similarity(self, a: Sequence[float], b: Sequence[float]) -> float:
        return similarity(a, b, self.params.similarity_scale)

    def evaluate_scene(self, model: ModelState, scene: Sequence[float]) -> float:
        p = self.params
        cid = self.clusters.lookup(scene)
        prof = model.proficiency.get(cid, 0.0) if cid is not None else 0.0
        if prof == 0.0 or not model.centroid:
            return p.acc_floor
        sim = self.similarity(scene, model.centroid)
        return p.acc_floor + (p.acc_ceil - p.acc_floor) * prof * sim

    def eval(self, model: ModelState, camera: CameraState) -> float:
        return self.evaluate_scene(model, camera.scene)

    def effective_effort(self, batch: TrainingBatchStats, gpu_time: float,
                         cameras: Sequence[CameraState]) -> float:
        if gpu_time < 0:
            raise InvalidInputError("gpu_time must be >= 0")
        if gpu_time == 0 or not cameras:
            return 0.0
        required = sum(c.gpu_pixel_throughput for c in cameras) / len(cameras)
        supplied = (batch.delivered_frame_rate
                    * pixels(batch.resolution, self.params.aspect_ratio)
                    / batch.train_fraction)
        sufficiency = min(1.0, supplied / required)
        return gpu_time * sufficiency * batch.quality_factor * batch.sampling_utility

    def train_step(self, model: ModelState, batch: TrainingBatchStats,
                   gpu_time: float, cameras: Sequence[CameraState]) -> ModelState:
        effort = self.effective_effort(batch, gpu_time, cameras)
        if effort == 0.0:
            return model

        by_id = {c.id: c for c in cameras}
        mix = {cid: frac for cid, frac in batch.source_mix.items()
               if cid in by_id and frac > 0}
        if not mix:
            mix = {c.id: 1.0 / len(cameras) for c in cameras}
        total = sum(mix.values())

        weights: dict[int, float] = {}
        for cam_id in sorted(mix):
            cid = self.clusters.assign(by_id[cam_id].scene)
            weights[cid] = weights.get(cid, 0.0) + mix[cam_id] / total

        k = self.params.learning_rate
        prof = dict(model.proficiency)
        for cid in sorted(weights):
            old = prof.get(cid, 0.0)
            new = 1.0 - (1.0 - old) * math.exp(-k * effort * weights[cid])
            prof[cid] = min(1.0, max(0.0, new))

        dim = len(by_id[next(iter(sorted(mix)))].scene)
        centroid = tuple(
            sum(mix[c] * by_id[c].scene[i] for c in sorted(mix)) / total
            for i in range(dim))
        return ModelState(proficiency=prof, centroid=centroid)

    def apply_drift(self, camera: CameraState, event: DriftEvent) -> CameraState:
        if event.camera_id != camera.id:
            raise InvalidInputError(
                f"drift event for {event.camera_id} applied to {camera.id}")
        acc = max(self.params.acc_floor, camera.local_model_acc - event.acc_drop)
        return replace(camera, scene=tuple(event.new_scene), local_model_acc=acc)

    def seed_model(self, scene: Sequence[float], acc: float) -> ModelState:
        """Model whose accuracy on ``scene`` reproduces ``acc``."""
        p = self.params
        prof = (acc - p.acc_floor) / (p.acc_ceil - p.acc_floor)
        prof = min(1.0, max(0.0, prof))
        cid = self.clusters.assign(scene)
        return ModelState(proficiency={cid: prof}, centroid=tuple(scene))
