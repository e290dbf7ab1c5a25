"""Micro-window GPU time-sharing across retraining jobs.

A retraining window of ``W`` micro-windows is handed out one micro-window
at a time; the holder uses all GPUs.  After a round-robin initial pass,
each further micro-window goes to the job with the largest objective gain,
where the gain blends a size-weighted accuracy term with a fairness bonus
for the currently worst job.  Baseline policies (uniform round-robin and
size-biased total-accuracy greedy) share the same machinery.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Protocol, Sequence

from .accuracy_model import ModelState

log = logging.getLogger(__name__)


class InfeasibleScheduleError(RuntimeError):
    pass


class TrainingEnv(Protocol):
    def evaluate(self, job_id: int) -> float: ...

    def train(self, job_id: int) -> None: ...


@dataclass
class RetrainJob:
    id: int
    members: list = field(default_factory=list)  # RetrainRequest
    model: ModelState = field(default_factory=ModelState)
    acc_per_member: dict[str, float] = field(default_factory=dict)
    acc_history: list[dict[str, float]] = field(default_factory=list)
    last_batch: Any = None

    @property
    def n(self) -> int:
        return len(self.members)

    def camera_ids(self) -> list[str]:
        return sorted(r.camera_id for r in self.members)


@dataclass(frozen=True)
class AllocatorConfig:
    obj_alpha: float = 1.0
    size_exponent_beta: float = 0.5
    micro_windows_W: int = 10
    micro_window_duration: float = 6.0
    gpu_count_G: int = 1
    fairness_bonus: bool = True

    def __post_init__(self):
        if self.obj_alpha < 0:
            raise ValueError("obj_alpha must be >= 0")
        if self.size_exponent_beta > 1:
            raise ValueError("size_exponent_beta must be <= 1")
        if self.micro_windows_W < 1 or self.gpu_count_G < 1:
            raise ValueError("W and G must be positive")
        if self.micro_window_duration <= 0:
            raise ValueError("micro_window_duration must be positive")

    @property
    def window_length(self) -> float:
        return self.micro_windows_W * self.micro_window_duration

    @property
    def gpu_time_per_window(self) -> float:
        return self.gpu_count_G * self.window_length

    @property
    def gpu_time_per_micro_window(self) -> float:
        return self.gpu_count_G * self.micro_window_duration


@dataclass(frozen=True)
class GpuAllocation:
    job_id: int
    c_j: float  # GPU-seconds
    p_j: float


@dataclass(frozen=True)
class MicroWindowRecord:
    index: int
    job_id: int
    acc_before: float
    acc_after: float


@dataclass
class WindowSchedule:
    entries: list[tuple[int, int]] = field(default_factory=list)
    records: list[MicroWindowRecord] = field(default_factory=list)
    allocations: list[GpuAllocation] = field(default_factory=list)
    initial_obj_gain: dict[int, float] = field(default_factory=dict)

    @property
    def order(self) -> list[int]:
        return [job for _, job in self.entries]

    @property
    def totals(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for _, job in self.entries:
            out[job] = out.get(job, 0) + 1
        return out


def _argmax(values: Mapping[int, float]) -> int:
    # lowest id wins ties
    return min(values, key=lambda j: (-values[j], j))


def _argmin(values: Mapping[int, float]) -> int:
    return min(values, key=lambda j: (values[j], j))


def objective_value(jobs: Iterable[tuple[int, float]], cfg: AllocatorConfig) -> float:
    jobs = list(jobs)
    if not jobs:
        raise ValueError("objective needs at least one job")
    for n, acc in jobs:
        if n < 1 or not 0 <= acc <= 1:
            raise ValueError(f"bad job (n={n}, A={acc})")
    b = cfg.size_exponent_beta
    weights = [n ** b for n, _ in jobs]
    avg = sum(w * a for w, (_, a) in zip(weights, jobs)) / sum(weights)
    return cfg.obj_alpha * avg + min(a for _, a in jobs)


def cal_objective_gain(sizes: Mapping[int, int], acc: Mapping[int, float],
                       acc_gain: Mapping[int, float],
                       cfg: AllocatorConfig) -> dict[int, float]:
    b = cfg.size_exponent_beta
    norm = sum(n ** b for n in sizes.values())
    gain = {j: cfg.obj_alpha * sizes[j] ** b / norm * acc_gain[j] for j in sizes}
    if cfg.fairness_bonus:
        worst = _argmin({j: acc[j] for j in sizes})
        gain[worst] += acc_gain[worst]
    return gain


def total_accuracy_gain(sizes: Mapping[int, int],
                        acc_gain: Mapping[int, float]) -> dict[int, float]:
    return {j: sizes[j] * acc_gain[j] for j in sizes}


def estimate_shares(obj_gain: Mapping[int, float],
                    cfg: AllocatorConfig) -> list[GpuAllocation]:
    if not obj_gain:
        return []
    clamped = {j: max(0.0, g) for j, g in obj_gain.items()}
    total = sum(clamped.values())
    if total <= 0:
        log.warning("all objective gains are zero; falling back to uniform shares")
        shares = {j: 1.0 / len(clamped) for j in clamped}
    else:
        shares = {j: g / total for j, g in clamped.items()}
    budget = cfg.gpu_time_per_window
    return [GpuAllocation(j, shares[j] * budget, shares[j]) for j in sorted(shares)]


POLICIES = ("ecco", "naive", "total_acc_greedy")


class WindowAllocator:
    """Stateful run of one retraining window.

    ``initial_pass`` trains every job once (job-id order) and fixes the GPU
    share estimate; ``finish`` spends the remaining micro-windows.  The
    split lets a caller configure data transmission between the two.
    """

    def __init__(self, jobs: Sequence[Any], cfg: AllocatorConfig,
                 env: TrainingEnv, policy: str = "ecco"):
        if policy not in POLICIES:
            raise ValueError(f"unknown policy {policy!r}")
        self.sizes = {j.id: j.n for j in sorted(jobs, key=lambda j: j.id)}
        if cfg.micro_windows_W < len(self.sizes):
            raise InfeasibleScheduleError(
                f"W={cfg.micro_windows_W} micro-windows cannot cover "
                f"{len(self.sizes)} jobs")
        self.cfg = cfg
        self.env = env
        self.policy = policy
        self.budget = cfg.micro_windows_W
        self.acc: dict[int, float] = {}
        self.acc_gain: dict[int, float] = {}
        self.obj_gain: dict[int, float] = {}
        self.schedule = WindowSchedule()
        self._rr = 0

    def _micro_retrain(self, job_id: int) -> None:
        before = self.env.evaluate(job_id)
        self.env.train(job_id)
        after = self.env.evaluate(job_id)
        index = self.cfg.micro_windows_W - self.budget
        self.budget -= 1
        self.acc[job_id] = after
        self.acc_gain[job_id] = after - before
        self.schedule.entries.append((index, job_id))
        self.schedule.records.append(MicroWindowRecord(index, job_id, before, after))

    def _update_gain(self) -> None:
        if len(self.acc) < len(self.sizes):
            return
        if self.policy == "total_acc_greedy":
            self.obj_gain = total_accuracy_gain(self.sizes, self.acc_gain)
        else:
            self.obj_gain = cal_objective_gain(self.sizes, self.acc,
                                               self.acc_gain, self.cfg)

    def initial_pass(self) -> list[GpuAllocation]:
        for job_id in self.sizes:
            self._micro_retrain(job_id)
            self._update_gain()
        if self.policy == "naive":
            shares = estimate_shares({j: 1.0 for j in self.sizes}, self.cfg)
        else:
            shares = estimate_shares(self.obj_gain, self.cfg)
        self.schedule.initial_obj_gain = dict(self.obj_gain)
        self.schedule.allocations = shares
        return shares

    def next_job(self) -> int:
        if self.policy == "naive":
            ids = list(self.sizes)
            job = ids[self._rr % len(ids)]
            self._rr += 1
            return job
        return _argmax(self.obj_gain)

    def finish(self) -> WindowSchedule:
        while self.budget > 0:
            self._micro_retrain(self.next_job())
            self._update_gain()
        return self.schedule


def allocate_window(jobs: Sequence[Any], cfg: AllocatorConfig,
                    env: TrainingEnv) -> WindowSchedule:
    alloc = WindowAllocator(jobs, cfg, env, "ecco")
    alloc.initial_pass()
    return alloc.finish()


def baseline_allocate(policy: str, jobs: Sequence[Any], cfg: AllocatorConfig,
                      env: TrainingEnv) -> WindowSchedule:
    if policy not in ("naive", "total_acc_greedy"):
        raise ValueError(f"unknown baseline policy {policy!r}")
    alloc = WindowAllocator(jobs, cfg, env, policy)
    alloc.initial_pass()
    return alloc.finish()
