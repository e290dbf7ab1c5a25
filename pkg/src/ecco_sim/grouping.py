"""Camera grouping: metadata pre-filter, accuracy check, periodic regrouping."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .accuracy_model import SceneVector
from .gpu_allocator import RetrainJob

log = logging.getLogger(__name__)


@dataclass
class RetrainRequest:
    camera_id: str
    t: float
    loc: tuple[float, float]
    subsamples: SceneVector
    acc: float
    acc_history: list[float] = field(default_factory=list)

    def __post_init__(self):
        if not 0 <= self.acc <= 1:
            raise ValueError(f"request acc {self.acc} outside [0, 1]")
        if self.t < 0:
            raise ValueError("request time must be >= 0")


@dataclass(frozen=True)
class GroupingConfig:
    epsilon: float = 120.0  # seconds
    delta: float = 500.0  # meters
    drop_threshold_p: float = 0.2

    def __post_init__(self):
        if min(self.epsilon, self.delta, self.drop_threshold_p) <= 0:
            raise ValueError("grouping parameters must be strictly positive")


@dataclass(frozen=True)
class GroupingEvent:
    kind: str  # join | new_job | removal | termination
    camera_id: str | None
    job_id: int
    time: float


def correlation_filter(job: RetrainJob, req: RetrainRequest,
                       cfg: GroupingConfig) -> bool:
    for r in job.members:
        if abs(r.t - req.t) > cfg.epsilon:
            return False
        if math.dist(r.loc, req.loc) > cfg.delta:
            return False
    return True


class CameraGrouper:
    """Owns the job table and applies join/new-job/regroup decisions.

    ``evaluate(job, scene)`` scores a job's model on a request's sampled
    scene; ``new_job(job_id, req)`` builds a job seeded from the request;
    ``refresh(req, now)`` updates a removed request's metadata before it
    is reprocessed.
    """

    def __init__(self, cfg: GroupingConfig,
                 evaluate: Callable[[RetrainJob, SceneVector], float],
                 new_job: Callable[[int, RetrainRequest], RetrainJob],
                 refresh: Callable[[RetrainRequest, float], None] | None = None):
        self.cfg = cfg
        self.evaluate = evaluate
        self.new_job = new_job
        self.refresh = refresh
        self.jobs: dict[int, RetrainJob] = {}
        self.events: list[GroupingEvent] = []
        self._next_id = 0

    def job_of(self, camera_id: str) -> RetrainJob | None:
        for job in self.jobs.values():
            if any(r.camera_id == camera_id for r in job.members):
                return job
        return None

    def candidates(self, req: RetrainRequest,
                   exclude: Iterable[int] = ()) -> dict[int, float]:
        skip = set(exclude)
        out = {}
        for job_id in sorted(self.jobs):
            if job_id in skip:
                continue
            job = self.jobs[job_id]
            if not correlation_filter(job, req, self.cfg):
                continue
            acc = self.evaluate(job, req.subsamples)
            if acc >= req.acc:
                out[job_id] = acc
        return out

    def group_request(self, req: RetrainRequest, now: float | None = None,
                      exclude: Iterable[int] = ()) -> int:
        if self.job_of(req.camera_id) is not None:
            raise ValueError(f"camera {req.camera_id} already belongs to a job")
        now = req.t if now is None else now
        found = self.candidates(req, exclude)
        if found:
            job_id = min(found, key=lambda j: (-found[j], j))
            self.jobs[job_id].members.append(req)
            self.events.append(GroupingEvent("join", req.camera_id, job_id, now))
            return job_id
        job_id = self._next_id
        self._next_id += 1
        self.jobs[job_id] = self.new_job(job_id, req)
        self.events.append(GroupingEvent("new_job", req.camera_id, job_id, now))
        return job_id

    def update_grouping(self, window_index: int, now: float) -> list[RetrainRequest]:
        p = self.cfg.drop_threshold_p
        reprocessed: list[RetrainRequest] = []
        done: set[str] = set()
        for job_id in sorted(self.jobs):
            job = self.jobs.get(job_id)
            if job is None:
                continue
            for req in sorted(job.members, key=lambda r: r.camera_id):
                if req.camera_id in done or len(req.acc_history) < 2:
                    continue
                prev, cur = req.acc_history[-2], req.acc_history[-1]
                if prev == 0:
                    log.warning("window %d: camera %s had zero accuracy; "
                                "treating as a drop", window_index, req.camera_id)
                    dropped = True
                else:
                    dropped = (cur - prev) / prev < -p
                if not dropped:
                    continue
                job.members.remove(req)
                self.events.append(GroupingEvent("removal", req.camera_id, job_id, now))
                if not job.members:
                    del self.jobs[job_id]
                    self.events.append(GroupingEvent("termination", None, job_id, now))
                if self.refresh is not None:
                    self.refresh(req, now)
                else:
                    req.t = max(req.t, now)
                self.group_request(req, now, exclude=(job_id,))
                done.add(req.camera_id)
                reprocessed.append(req)
        return reprocessed

    def check_partition(self) -> None:
        seen: set[str] = set()
        for job in self.jobs.values():
            if not job.members:
                raise AssertionError(f"job {job.id} has no members")
            for r in job.members:
                if r.camera_id in seen:
                    raise AssertionError(f"camera {r.camera_id} in two jobs")
                seen.add(r.camera_id)
