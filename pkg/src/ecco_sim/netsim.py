"""Flow-level GAIMD simulation over one shared bottleneck with local caps.

Time advances one base RTT per step.  Each flow keeps a congestion window
and sends at ``window / (rtt + queue / C)`` clamped to its access-link cap,
so a standing queue at the bottleneck stretches the round trip.  The
bottleneck has a drop-tail buffer sized in bandwidth-delay products; when
the backlog would overflow it, every flow backs off multiplicatively at
once (synchronized loss).  Otherwise windows grow by ``alpha * rtt`` per
round trip.  A capped flow's window stops growing once it can hold the cap
even behind a full queue, so its rate stays pinned at the cap.  With
``buffer_bdp=0`` the queue never forms and this is the plain rate sawtooth
between ``beta*C`` and ``C``.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

log = logging.getLogger(__name__)

MIN_STEPS = 100


@dataclass(frozen=True)
class FlowParams:
    flow_id: str
    aimd_alpha: float  # bits/s added per RTT
    aimd_beta: float

    def __post_init__(self):
        if self.aimd_alpha <= 0:
            raise ValueError(f"flow {self.flow_id}: aimd_alpha must be positive")
        if not 0 < self.aimd_beta < 1:
            raise ValueError(f"flow {self.flow_id}: aimd_beta must be in (0, 1)")

    @property
    def weight(self) -> float:
        return self.aimd_alpha / (1 - self.aimd_beta)


@dataclass(frozen=True)
class Topology:
    shared_capacity: float  # bits/s
    local_caps: Mapping[str, float] = field(default_factory=dict)
    rtt: float = 0.05
    buffer_bdp: float = 1.0

    def __post_init__(self):
        if self.shared_capacity <= 0 or self.rtt <= 0:
            raise ValueError("capacity and rtt must be positive")
        if any(c <= 0 for c in self.local_caps.values()):
            raise ValueError("local caps must be positive")
        if self.buffer_bdp < 0:
            raise ValueError("buffer_bdp must be >= 0")

    def cap(self, flow_id: str) -> float:
        return self.local_caps.get(flow_id, math.inf)


@dataclass
class NetState:
    rates: np.ndarray  # sending rates, bits/s
    queue: float = 0.0  # bits
    delivered: np.ndarray | None = None
    windows: np.ndarray | None = None  # bits in flight; derived from rates if unset


@dataclass
class FlowTrace:
    flow_ids: list[str]
    times: np.ndarray
    rates: np.ndarray  # steps x flows, delivered bits/s
    mean_rates: dict[str, float]
    too_short: bool = False

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time_s", "flow_id", "rate_bps"])
            for i, t in enumerate(self.times):
                for j, fid in enumerate(self.flow_ids):
                    w.writerow([repr(float(t)), fid, repr(float(self.rates[i, j]))])


def _arrays(flows: Sequence[FlowParams], topology: Topology):
    alpha = np.array([f.aimd_alpha for f in flows], dtype=float)
    beta = np.array([f.aimd_beta for f in flows], dtype=float)
    caps = np.array([topology.cap(f.flow_id) for f in flows], dtype=float)
    return alpha, beta, caps


def step(state: NetState, flows: Sequence[FlowParams], topology: Topology,
         dt: float | None = None) -> NetState:
    if not flows:
        return state
    dt = topology.rtt if dt is None else dt
    alpha, beta, caps = _arrays(flows, topology)
    cap_c = topology.shared_capacity
    buffer = topology.buffer_bdp * cap_c * topology.rtt

    rtt_eff = topology.rtt + state.queue / cap_c
    # a rate-limited sender keeps enough window to hold its cap at any queue
    w_max = caps * (topology.rtt + buffer / cap_c)
    w = state.rates * rtt_eff if state.windows is None else state.windows
    w = np.minimum(w, w_max)
    x = np.minimum(caps, w / rtt_eff)
    total = float(x.sum())
    backlog = state.queue + total * dt
    served = min(backlog, cap_c * dt)
    if total > 0:
        delivered = np.minimum(caps, (served / dt) * x / total)
    else:
        delivered = np.zeros_like(x)

    excess = state.queue + (total - cap_c) * dt
    queue = min(max(excess, 0.0), buffer)
    if excess >= buffer:
        w = w * beta
    else:
        w = np.minimum(w + alpha * topology.rtt * dt / rtt_eff, w_max)
    next_rtt = topology.rtt + queue / cap_c
    rates = np.minimum(caps, w / next_rtt)
    return NetState(rates=rates, queue=queue, delivered=delivered, windows=w)


def simulate_window(flows: Sequence[FlowParams], topology: Topology,
                    duration: float, initial_rates: Sequence[float] | None = None
                    ) -> FlowTrace:
    """Run ``duration`` seconds; means cover the second half only."""
    ids = [f.flow_id for f in flows]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate flow ids")
    n_steps = int(round(duration / topology.rtt))
    too_short = n_steps < MIN_STEPS
    if too_short:
        log.warning("window of %.3fs is only %d RTTs; means may not have converged",
                    duration, n_steps)
    rates0 = np.zeros(len(flows)) if initial_rates is None else np.asarray(
        initial_rates, dtype=float)
    state = NetState(rates=rates0)
    out = np.zeros((n_steps, len(flows)))
    for i in range(n_steps):
        state = step(state, flows, topology)
        out[i] = state.delivered if state.delivered is not None else 0.0
    times = topology.rtt * np.arange(1, n_steps + 1)
    half = out[n_steps // 2:]
    means = half.mean(axis=0) if len(half) else np.zeros(len(flows))
    return FlowTrace(ids, times, out, {fid: float(m) for fid, m in zip(ids, means)},
                     too_short)


def analytic_steady_state(flows: Sequence[FlowParams],
                          topology: Topology) -> dict[str, float]:
    """Weighted water-filling with weights alpha/(1-beta)."""
    weights = {f.flow_id: f.weight for f in flows}
    caps = {f.flow_id: topology.cap(f.flow_id) for f in flows}
    alloc: dict[str, float] = {}
    free = set(weights)
    capacity = topology.shared_capacity
    while free:
        wsum = sum(weights[i] for i in free)
        share = {i: capacity * weights[i] / wsum for i in free}
        bound = {i for i in free if caps[i] <= share[i]}
        if not bound:
            alloc.update(share)
            break
        for i in bound:
            alloc[i] = caps[i]
            capacity -= caps[i]
        free -= bound
    return {f.flow_id: alloc[f.flow_id] for f in flows}
