"""Camera-side transmission control.

Offline, each camera profiles which (frame rate, resolution) pair gives the
best retraining accuracy at every reachable GPU budget.  Online it looks up
its group's budget, splits the frame rate across the group, derives GAIMD
parameters from its GPU share, and lets compression absorb whatever
bandwidth the network actually delivers.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .accuracy_model import (AccuracyModel, CameraState, ModelState,
                             TrainingBatchStats, pixels, sampling_utility)
from .netsim import FlowParams

log = logging.getLogger(__name__)

DEFAULT_RESOLUTIONS = (360, 480, 720, 960)
DEFAULT_FRAME_RATES = (1, 2, 5, 10, 15)
GAIMD_BETA = 0.5


@dataclass(frozen=True, order=True)
class SamplingConfig:
    frame_rate: float
    resolution: float

    def __post_init__(self):
        if self.frame_rate <= 0:
            raise ValueError("frame rate must be positive")

    def pixel_rate(self, aspect: float = 16 / 9) -> float:
        return self.frame_rate * pixels(self.resolution, aspect)


@dataclass(frozen=True)
class ProfileRow:
    budget: float  # GPU-seconds per window
    config: SamplingConfig
    accuracy: float
    feasible: bool = True


@dataclass
class ProfileTable:
    camera_id: str
    rows: list[ProfileRow] = field(default_factory=list)

    @property
    def levels(self) -> list[float]:
        return [r.budget for r in self.rows]

    def lookup(self, budget: float) -> tuple[ProfileRow, bool]:
        """Row at the nearest level not above ``budget``; flag if clamped."""
        if not self.rows:
            raise ValueError(f"empty profile table for {self.camera_id}")
        rows = sorted(self.rows, key=lambda r: r.budget)
        chosen = None
        for row in rows:
            if row.budget <= budget + 1e-9:
                chosen = row
        if chosen is None:
            return rows[0], True
        return chosen, False

    def write(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["camera_id", "budget_gpu_s", "fps", "resolution", "feasible"])
            for r in sorted(self.rows, key=lambda r: r.budget):
                w.writerow([self.camera_id, repr(r.budget), repr(r.config.frame_rate),
                            repr(r.config.resolution), int(r.feasible)])

    @classmethod
    def read(cls, path) -> "ProfileTable":
        rows, cam = [], None
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                cam = rec["camera_id"]
                rows.append(ProfileRow(
                    float(rec["budget_gpu_s"]),
                    SamplingConfig(float(rec["fps"]), float(rec["resolution"])),
                    float("nan"), bool(int(rec.get("feasible", 1)))))
        if cam is None:
            raise ValueError(f"{path}: no profile rows")
        return cls(cam, rows)


@dataclass(frozen=True)
class CompressionState:
    target_rate: float
    bits_per_pixel: float
    quality_factor: float


def config_grid(frame_rates: Iterable[float] = DEFAULT_FRAME_RATES,
                resolutions: Iterable[float] = DEFAULT_RESOLUTIONS
                ) -> list[SamplingConfig]:
    return [SamplingConfig(float(f), float(q)) for q in resolutions for f in frame_rates]


def budget_pixel_rate(budget: float, camera: CameraState, window_s: float) -> float:
    """Pixels/s a group can consume on average with ``budget`` GPU-s per window."""
    return budget * camera.gpu_pixel_throughput / window_s


def adapt_compression(achieved_rate: float, cfg: SamplingConfig,
                      bpp_ref: float = 0.1, aspect: float = 16 / 9
                      ) -> CompressionState:
    if achieved_rate < 0:
        raise ValueError("achieved rate must be >= 0")
    if achieved_rate == 0:
        return CompressionState(0.0, 0.0, 0.0)
    bpp = achieved_rate / cfg.pixel_rate(aspect)
    return CompressionState(achieved_rate, bpp, min(1.0, bpp / bpp_ref))


def set_aimd_params(p_j: float, n_j: int, alpha_unit: float = 5e5,
                    flow_id: str = "") -> FlowParams:
    if p_j <= 0 or p_j > 1 + 1e-12:
        raise ValueError(f"GPU share weight must be in (0, 1], got {p_j}")
    if n_j < 1:
        raise ValueError("group size must be >= 1")
    return FlowParams(flow_id, p_j / n_j * alpha_unit, GAIMD_BETA)


def select_config(table: ProfileTable, c_j: float, n_j: int) -> SamplingConfig:
    if n_j < 1:
        raise ValueError("group size must be >= 1")
    row, clamped = table.lookup(c_j)
    if clamped:
        log.warning("camera %s: budget %.3f GPU-s below smallest profiled level %.3f",
                    table.camera_id, c_j, row.budget)
    return SamplingConfig(row.config.frame_rate / n_j, row.config.resolution)


Probe = Callable[[CameraState, float, SamplingConfig], float]


def make_probe(model: AccuracyModel, window_s: float, gpus: int = 1,
               ref_bitrate: float = 1e6, bpp_ref: float = 0.1) -> Probe:
    """Short simulated retraining of a fresh model at a fixed bitrate."""

    def probe(camera: CameraState, budget: float, cfg: SamplingConfig) -> float:
        comp = adapt_compression(ref_bitrate, cfg, bpp_ref, model.params.aspect_ratio)
        batch = TrainingBatchStats(
            delivered_frame_rate=cfg.frame_rate,
            resolution=cfg.resolution,
            quality_factor=comp.quality_factor,
            source_mix={camera.id: 1.0},
            train_fraction=min(1.0, budget / (gpus * window_s)),
            sampling_utility=sampling_utility(camera.kind, cfg.frame_rate,
                                              cfg.resolution, model.params))
        fresh = ModelState({}, tuple(camera.scene))
        trained = model.train_step(fresh, batch, budget, [camera])
        return model.eval(trained, camera)

    return probe


def _rank_key(acc: float, cfg: SamplingConfig, prefer: str):
    acc = round(acc, 12)
    if prefer == "frame_rate":
        return (acc, cfg.frame_rate, cfg.resolution)
    return (acc, cfg.resolution, cfg.frame_rate)


def build_profile_table(camera: CameraState, budget_levels: Sequence[float],
                        grid: Sequence[SamplingConfig], probe: Probe,
                        window_s: float, prefer: str | None = None,
                        aspect: float = 16 / 9) -> ProfileTable:
    if not grid:
        raise ValueError("empty configuration grid")
    if prefer is None:
        prefer = "frame_rate" if camera.kind == "mobile" else "resolution"
    table = ProfileTable(camera.id)
    smallest = min(grid, key=lambda c: (c.pixel_rate(aspect), c.resolution, c.frame_rate))
    for budget in sorted(budget_levels):
        limit = budget_pixel_rate(budget, camera, window_s)
        feasible = [c for c in grid if c.pixel_rate(aspect) <= limit * (1 + 1e-12)]
        if not feasible:
            log.warning("camera %s: no configuration fits %.3f GPU-s", camera.id, budget)
            table.rows.append(ProfileRow(budget, smallest,
                                         probe(camera, budget, smallest), False))
            continue
        scored = [(probe(camera, budget, c), c) for c in feasible]
        acc, best = max(scored, key=lambda ac: _rank_key(ac[0], ac[1], prefer))
        table.rows.append(ProfileRow(budget, best, acc))
    return table
