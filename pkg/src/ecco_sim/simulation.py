"""Window-by-window simulation of the retraining control plane.

Per retraining window ``k`` (covering ``[(k-1)T, kT)``):

0. drift events due by the window start are applied; cameras whose local
   model fell below the detection threshold emit retraining requests
1. pending requests are grouped
2. the allocator runs its initial pass and estimates GPU shares
3. each member camera picks a sampling configuration and GAIMD parameters
4. the network is simulated for the window; delivered rates set the
   compression quality of every job's training batch
5. the allocator spends the remaining micro-windows
6. per-camera accuracy is measured and groups are re-evaluated
7. metrics are appended
"""
from __future__ import annotations

import logging
import math
from dataclasses import replace
from statistics import fmean

import numpy as np

from .accuracy_model import (AccuracyModel, CameraState, TrainingBatchStats,
                             sampling_utility)
from .gpu_allocator import (GpuAllocation, InfeasibleScheduleError, RetrainJob,
                            WindowAllocator)
from .grouping import CameraGrouper, RetrainRequest
from .metrics import (CameraRecord, JobRecord, MetricsTrace, ScheduleRecord)
from .netsim import FlowParams, Topology, simulate_window
from .scenario import ScenarioConfig
from .transmission import (GAIMD_BETA, ProfileTable, SamplingConfig,
                           adapt_compression, build_profile_table, config_grid,
                           make_probe, set_aimd_params)

log = logging.getLogger(__name__)

# transmission still needs a non-zero weight for jobs whose estimated
# objective gain was clamped to zero
MIN_SHARE = 0.01


def detect_drift(camera: CameraState, threshold: float = 0.25, t: float = 0.0,
                 active: bool = False) -> RetrainRequest | None:
    """Retraining request if the local model fell below ``threshold``.

    ``active`` marks cameras already grouped or with a pending request.
    """
    if active or camera.local_model_acc >= threshold:
        return None
    return RetrainRequest(camera.id, t, tuple(camera.location), tuple(camera.scene),
                          camera.local_model_acc)


class _Env:
    """Training environment handed to the allocator."""

    def __init__(self, sim: "Simulation", jobs: list[RetrainJob],
                 batches: dict[int, TrainingBatchStats]):
        self.sim = sim
        self.jobs = {j.id: j for j in jobs}
        self.batches = batches

    def evaluate(self, job_id: int) -> float:
        return self.sim.job_accuracy(self.jobs[job_id])

    def train(self, job_id: int) -> None:
        job = self.jobs[job_id]
        alloc = self.sim.cfg.allocator
        cams = [self.sim.cameras[c] for c in job.camera_ids()]
        job.model = self.sim.model.train_step(
            job.model, self.batches[job_id], alloc.gpu_time_per_micro_window, cams)


class Simulation:
    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.model = AccuracyModel(cfg.model)
        for cam in cfg.cameras:
            self.model.clusters.assign(cam.scene)
        for ev in cfg.drift_events:
            self.model.clusters.assign(ev.new_scene)
        self.cameras: dict[str, CameraState] = {c.id: c for c in cfg.cameras}
        self._events = list(cfg.drift_events)
        self.pending: list[RetrainRequest] = []
        self.grouper = CameraGrouper(cfg.grouping, self._evaluate_scene,
                                     self._new_job, self._refresh)
        self.rng = np.random.default_rng(cfg.seed)
        self.trace = MetricsTrace(window_s=cfg.window_s)
        self.window = 0
        self._profiles: dict[str, ProfileTable] = {}
        self._n_group_events = 0

    # -- helpers ---------------------------------------------------------

    def _evaluate_scene(self, job: RetrainJob, scene) -> float:
        return self.model.evaluate_scene(job.model, scene)

    def _new_job(self, job_id: int, req: RetrainRequest) -> RetrainJob:
        return RetrainJob(job_id, [req], self.model.seed_model(req.subsamples, req.acc))

    def _refresh(self, req: RetrainRequest, now: float) -> None:
        cam = self.cameras[req.camera_id]
        req.t = max(req.t, now)
        req.loc = tuple(cam.location)
        req.subsamples = tuple(cam.scene)
        if req.acc_history:
            req.acc = req.acc_history[-1]

    def job_accuracy(self, job: RetrainJob) -> float:
        return fmean(self.model.eval(job.model, self.cameras[c])
                     for c in job.camera_ids())

    def profile(self, camera_id: str) -> ProfileTable:
        if camera_id not in self._profiles:
            cfg = self.cfg
            alloc = cfg.allocator
            levels = [m * alloc.gpu_time_per_micro_window
                      for m in range(1, alloc.micro_windows_W + 1)]
            probe = make_probe(self.model, cfg.window_s, alloc.gpu_count_G,
                               cfg.transmission.ref_bitrate, cfg.transmission.bpp_ref)
            grid = config_grid(cfg.transmission.frame_rates, cfg.transmission.resolutions)
            self._profiles[camera_id] = build_profile_table(
                self.cfg.camera(camera_id), levels, grid, probe, cfg.window_s,
                aspect=cfg.model.aspect_ratio)
        return self._profiles[camera_id]

    def _grouped(self, camera_id: str) -> bool:
        return self.grouper.job_of(camera_id) is not None

    def _flush_group_events(self, window: int, stage: str) -> None:
        for ev in self.grouper.events[self._n_group_events:]:
            self.trace.log(window, ev.time, stage, ev.kind, ev.camera_id, ev.job_id)
        self._n_group_events = len(self.grouper.events)

    def _table_config(self, cam: CameraState, c_j: float) -> SamplingConfig:
        override = self.cfg.sampling_override
        if override is not None:
            return SamplingConfig(*override)
        row, _ = self.profile(cam.id).lookup(c_j)
        if row.budget > c_j + 1e-9:
            log.warning("camera %s: share %.3f GPU-s below smallest profiled level",
                        cam.id, c_j)
        return row.config

    def _batch(self, job: RetrainJob, share: float, configs: dict[str, SamplingConfig],
               table_cfgs: dict[str, SamplingConfig],
               rates: dict[str, float] | None) -> TrainingBatchStats:
        aspect = self.cfg.model.aspect_ratio
        pix, qual, util, fps = {}, {}, {}, 0.0
        for cid in job.camera_ids():
            cfg = configs[cid]
            pix[cid] = cfg.pixel_rate(aspect)
            fps += cfg.frame_rate
            if rates is None:
                qual[cid] = 1.0
            else:
                qual[cid] = adapt_compression(rates[cid], cfg, self.cfg.transmission.bpp_ref,
                                              aspect).quality_factor
            tc = table_cfgs[cid]
            util[cid] = sampling_utility(self.cameras[cid].kind, tc.frame_rate,
                                         tc.resolution, self.cfg.model)
        total = sum(pix.values())
        resolution = math.sqrt(total / fps / aspect)
        mix = {cid: pix[cid] / total for cid in pix}
        return TrainingBatchStats(
            delivered_frame_rate=fps, resolution=resolution,
            quality_factor=min(1.0, sum(mix[c] * qual[c] for c in mix)),
            source_mix=mix,
            train_fraction=min(1.0, max(share, 1.0 / self.cfg.allocator.micro_windows_W)),
            sampling_utility=min(1.0, sum(mix[c] * util[c] for c in mix)))

    def _plan(self, jobs: list[RetrainJob], shares: dict[int, GpuAllocation]):
        trans = self.cfg.transmission
        configs, table_cfgs, flows = {}, {}, []
        for job in jobs:
            alloc = shares[job.id]
            p = max(alloc.p_j, MIN_SHARE)
            for cid in job.camera_ids():
                cam = self.cameras[cid]
                tc = self._table_config(cam, alloc.c_j)
                table_cfgs[cid] = tc
                if self.cfg.sampling_override is not None:
                    configs[cid] = tc
                else:
                    configs[cid] = SamplingConfig(tc.frame_rate / job.n, tc.resolution)
                if self.cfg.use_equal_bandwidth:
                    flows.append(FlowParams(cid, trans.alpha_unit, GAIMD_BETA))
                else:
                    flows.append(set_aimd_params(min(p, 1.0), job.n, trans.alpha_unit, cid))
        return configs, table_cfgs, flows

    def _topology(self) -> Topology:
        topo = self.cfg.topology
        jitter = self.cfg.capacity_jitter
        if jitter <= 0:
            return topo
        scale = 1.0 + jitter * self.rng.uniform(-1.0, 1.0)
        return replace(topo, shared_capacity=topo.shared_capacity * scale)

    # -- pipeline --------------------------------------------------------

    def _apply_drift(self, k: int, t0: float) -> None:
        thr = self.cfg.drift_threshold
        pending_ids = {r.camera_id for r in self.pending}
        while self._events and self._events[0].time <= t0:
            ev = self._events.pop(0)
            cam = self.model.apply_drift(self.cameras[ev.camera_id], ev)
            self.cameras[cam.id] = cam
            self.trace.log(k, ev.time, "drift", "drift", cam.id)
            active = cam.id in pending_ids or self._grouped(cam.id)
            req = detect_drift(cam, thr, ev.time, active)
            if req is not None:
                self.pending.append(req)
                pending_ids.add(cam.id)
        for cid in sorted(self.cameras):
            active = cid in pending_ids or self._grouped(cid)
            req = detect_drift(self.cameras[cid], thr, t0, active)
            if req is not None:
                self.pending.append(req)
                pending_ids.add(cid)

    def _group_pending(self, k: int, t0: float) -> None:
        for req in sorted(self.pending, key=lambda r: (r.t, r.camera_id)):
            self.trace.request_times.setdefault(req.camera_id, req.t)
            self.trace.request_acc.setdefault(req.camera_id, req.acc)
            if self.cfg.use_grouping:
                self.grouper.group_request(req, now=t0)
            else:
                self.grouper.group_request(req, now=t0, exclude=list(self.grouper.jobs))
        self.pending = []
        self._flush_group_events(k, "grouping")

    def _allocate(self, k: int, t0: float) -> None:
        cfg = self.cfg
        jobs = sorted(self.grouper.jobs.values(), key=lambda j: j.id)
        if not jobs:
            return
        # the initial pass trains on last window's data; new jobs start
        # from the frames shipped with their request at an even share
        even = cfg.allocator.gpu_time_per_window / len(jobs)
        batches = {}
        for job in jobs:
            if job.last_batch is not None and set(job.last_batch.source_mix) == set(
                    job.camera_ids()):
                batches[job.id] = job.last_batch
            else:
                tcs = {c: self._table_config(self.cameras[c], even) for c in job.camera_ids()}
                cfgs = tcs if cfg.sampling_override is not None else {
                    c: SamplingConfig(tc.frame_rate / job.n, tc.resolution)
                    for c, tc in tcs.items()}
                batches[job.id] = self._batch(job, 1.0 / len(jobs), cfgs, tcs, None)
        env = _Env(self, jobs, batches)
        try:
            allocator = WindowAllocator(jobs, cfg.allocator, env, cfg.policy)
        except InfeasibleScheduleError as exc:
            raise InfeasibleScheduleError(f"window {k}: {exc}") from None
        shares = {a.job_id: a for a in allocator.initial_pass()}

        configs, table_cfgs, flows = self._plan(jobs, shares)
        net = simulate_window(flows, self._topology(), cfg.window_s)
        for job in jobs:
            batch = self._batch(job, shares[job.id].p_j, configs, table_cfgs,
                                net.mean_rates)
            job.last_batch = batch
            env.batches[job.id] = batch

        schedule = allocator.finish()
        for rec in schedule.records:
            self.trace.schedule.append(ScheduleRecord(k, rec.index, rec.job_id,
                                                      rec.acc_before, rec.acc_after))
            self.trace.log(k, t0 + rec.index * cfg.allocator.micro_window_duration,
                           "allocation", "micro_window", None, rec.job_id)
        totals = schedule.totals
        for job in jobs:
            ids = job.camera_ids()
            self.trace.jobs.append(JobRecord(
                k, job.id, job.n, totals.get(job.id, 0), shares[job.id].p_j,
                shares[job.id].c_j, fmean(net.mean_rates[c] for c in ids), tuple(ids)))

    def _measure(self, k: int, t1: float) -> None:
        for job in self.grouper.jobs.values():
            job.acc_per_member = {}
        for cid in sorted(self.cameras):
            job = self.grouper.job_of(cid)
            cam = self.cameras[cid]
            if job is not None:
                acc = self.model.eval(job.model, cam)
                self.cameras[cid] = replace(cam, local_model_acc=acc)
                req = next(r for r in job.members if r.camera_id == cid)
                req.acc_history.append(acc)
                job.acc_per_member[cid] = acc
            else:
                acc = cam.local_model_acc
            self.trace.cameras.append(CameraRecord(
                k, t1, cid, None if job is None else job.id, acc,
                self.trace.request_times.get(cid), self.trace.request_acc.get(cid)))
        for job in self.grouper.jobs.values():
            job.acc_history.append(dict(job.acc_per_member))

    def run_window(self) -> None:
        k = self.window + 1
        T = self.cfg.window_s
        t0, t1 = (k - 1) * T, k * T
        self._apply_drift(k, t0)
        self._group_pending(k, t0)
        self._allocate(k, t0)
        self._measure(k, t1)
        if self.cfg.use_grouping:
            self.grouper.update_grouping(k, t1)
            self._flush_group_events(k, "regrouping")
        self.window = k

    def run(self) -> MetricsTrace:
        for _ in range(self.cfg.num_windows):
            self.run_window()
        return self.trace


def run_scenario(cfg: ScenarioConfig) -> MetricsTrace:
    return Simulation(cfg).run()
