"""Simulation trace, CSV/JSON output and response-time analysis.

Output directory layout written by :func:`write_metrics`::

    cameras.csv   window,t_end_s,camera_id,job_id,accuracy,request_t_s,request_acc
    jobs.csv      window,job_id,n,micro_windows,p_j,c_j_gpu_s,mean_rate_bps,members
    schedule.csv  window,micro_window,job_id,acc_before,acc_after
    events.csv    seq,window,time_s,stage,kind,camera_id,job_id
    summary.json  per-window mean accuracy and response times
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from statistics import fmean
from typing import Iterable

UNATTAINED = "unattained"


@dataclass(frozen=True)
class CameraRecord:
    window: int
    t_end: float
    camera_id: str
    job_id: int | None
    accuracy: float
    request_t: float | None
    request_acc: float | None = None


@dataclass(frozen=True)
class JobRecord:
    window: int
    job_id: int
    n: int
    micro_windows: int
    p_j: float
    c_j: float
    mean_rate: float
    members: tuple[str, ...]


@dataclass(frozen=True)
class ScheduleRecord:
    window: int
    micro_window: int
    job_id: int
    acc_before: float
    acc_after: float


@dataclass(frozen=True)
class Event:
    seq: int
    window: int
    time: float
    stage: str  # grouping | allocation | regrouping | drift
    kind: str
    camera_id: str | None = None
    job_id: int | None = None


@dataclass
class MetricsTrace:
    window_s: float = 60.0
    cameras: list[CameraRecord] = field(default_factory=list)
    jobs: list[JobRecord] = field(default_factory=list)
    schedule: list[ScheduleRecord] = field(default_factory=list)
    events: list[Event] = field(default_factory=list)
    request_times: dict[str, float] = field(default_factory=dict)
    request_acc: dict[str, float] = field(default_factory=dict)

    def log(self, window: int, time: float, stage: str, kind: str,
            camera_id: str | None = None, job_id: int | None = None) -> None:
        self.events.append(Event(len(self.events), window, time, stage, kind,
                                 camera_id, job_id))

    @property
    def windows(self) -> list[int]:
        return sorted({r.window for r in self.cameras})

    def accuracy(self, window: int) -> dict[str, float]:
        return {r.camera_id: r.accuracy for r in self.cameras if r.window == window}

    def mean_accuracy(self) -> list[float]:
        """Average accuracy over cameras, one value per window."""
        return [fmean(self.accuracy(w).values()) for w in self.windows]

    def final_accuracy(self) -> dict[str, float]:
        return self.accuracy(self.windows[-1])

    def micro_windows(self, window: int) -> dict[int, int]:
        return {j.job_id: j.micro_windows for j in self.jobs if j.window == window}

    def shares(self, window: int) -> dict[int, float]:
        return {j.job_id: j.p_j for j in self.jobs if j.window == window}

    @classmethod
    def from_camera_csv(cls, path) -> "MetricsTrace":
        trace = cls()
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                req, req_acc = rec["request_t_s"], rec["request_acc"]
                job = rec["job_id"]
                row = CameraRecord(int(rec["window"]), float(rec["t_end_s"]),
                                   rec["camera_id"], int(job) if job else None,
                                   float(rec["accuracy"]), float(req) if req else None,
                                   float(req_acc) if req_acc else None)
                trace.cameras.append(row)
                if row.request_t is not None:
                    trace.request_times.setdefault(row.camera_id, row.request_t)
                    trace.request_acc.setdefault(row.camera_id, row.request_acc)
        if len(trace.windows) >= 1:
            first = min(trace.cameras, key=lambda r: r.window)
            trace.window_s = first.t_end / first.window
        return trace


def response_time(trace: MetricsTrace, target_acc: float) -> dict[str, float | None]:
    """Seconds from each camera's request to the first window end at target.

    ``None`` marks cameras that never reach the target.
    """
    if not 0 < target_acc < 1:
        raise ValueError("target accuracy must be in (0, 1)")
    by_cam: dict[str, list[CameraRecord]] = {}
    for r in trace.cameras:
        by_cam.setdefault(r.camera_id, []).append(r)
    out: dict[str, float | None] = {}
    for cam, t_req in sorted(trace.request_times.items()):
        rows = sorted(by_cam.get(cam, []), key=lambda r: r.t_end)
        start_acc = trace.request_acc.get(cam)
        if start_acc is not None and start_acc >= target_acc:
            out[cam] = 0.0
            continue
        out[cam] = None
        for r in rows:
            if r.t_end >= t_req and r.accuracy >= target_acc:
                out[cam] = r.t_end - t_req
                break
    return out


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _write(path: Path, header: list[str], rows: Iterable[list]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def summary(trace: MetricsTrace, target_acc: float | None = None) -> dict:
    out = {
        "windows": trace.windows,
        "mean_accuracy": trace.mean_accuracy(),
        "final_accuracy": trace.final_accuracy() if trace.cameras else {},
    }
    if target_acc is not None:
        rt = response_time(trace, target_acc)
        out["target_acc"] = target_acc
        out["response_time_s"] = {k: (UNATTAINED if v is None else v) for k, v in rt.items()}
    return out


def write_metrics(trace: MetricsTrace, out_dir, target_acc: float | None = 0.35) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "cameras.csv",
           ["window", "t_end_s", "camera_id", "job_id", "accuracy", "request_t_s",
            "request_acc"],
           ([r.window, r.t_end, r.camera_id, r.job_id, r.accuracy, r.request_t,
             r.request_acc]
            for r in trace.cameras))
    _write(out / "jobs.csv",
           ["window", "job_id", "n", "micro_windows", "p_j", "c_j_gpu_s",
            "mean_rate_bps", "members"],
           ([j.window, j.job_id, j.n, j.micro_windows, j.p_j, j.c_j, j.mean_rate,
             " ".join(j.members)] for j in trace.jobs))
    _write(out / "schedule.csv",
           ["window", "micro_window", "job_id", "acc_before", "acc_after"],
           ([s.window, s.micro_window, s.job_id, s.acc_before, s.acc_after]
            for s in trace.schedule))
    _write(out / "events.csv",
           ["seq", "window", "time_s", "stage", "kind", "camera_id", "job_id"],
           ([e.seq, e.window, e.time, e.stage, e.kind, e.camera_id, e.job_id]
            for e in trace.events))
    with open(out / "summary.json", "w") as fh:
        json.dump(summary(trace, target_acc), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out
