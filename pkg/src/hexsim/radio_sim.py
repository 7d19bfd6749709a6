"""Tick-driven cell emulation: traffic arrivals, buffers, service, RTT, utilization.

The cell owns downlink byte buffers per bearer. Each tick it enqueues offered
traffic, builds the scheduler input from the published slice snapshot, runs
the three-stage allocator, then drains each buffer by what its RB grant can
carry. Throughput and delay statistics are exponentially smoothed with a
100 ms time constant and written into the live bearer stats read by reports.

The loop runs on virtual time and is deterministic for a fixed offered-rate
schedule; a many-second scenario replays in a fraction of wall time. Repeated
ticks with unchanged demands reuse the previous decision (pure-function
memoization), which is what keeps long steady-state phases cheap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

from . import fssf
from .slice_model import SliceRegistry, SliceState

RTT_CAP_MS = 2000.0
STATS_WINDOW_MS = 100.0


@dataclass(frozen=True)
class CellConfig:
    total_rb: int = 106
    per_rb_rate_mbps: float = 130.0 / 106.0
    tti_ms: float = 1.0
    base_rtt_ms: float = 20.0

    @property
    def per_rb_bits_per_tti(self) -> float:
        return self.per_rb_rate_mbps * 1e6 * (self.tti_ms / 1000.0)

    @property
    def max_throughput_mbps(self) -> float:
        return self.per_rb_rate_mbps * self.total_rb


@dataclass
class LinkState:
    """Per-UE link quality; the rate hook maps an MCS index to a fraction of
    the calibrated per-RB rate (identity keeps the single-scalar model)."""

    mcs_rate_fraction: Callable[[int], float] = lambda mcs: 1.0


class TrafficProfile:
    """Piecewise-constant offered rate per bearer: {drb: [(t_s, mbps), ...]}."""

    def __init__(self, schedule: Mapping[int, Sequence[tuple[float, float]]]):
        self.schedule = {drb: sorted(steps) for drb, steps in schedule.items()}
        for steps in self.schedule.values():
            if any(rate < 0 for _, rate in steps):
                raise ValueError("offered rates must be >= 0")

    def rate_at(self, drb: int, t_s: float) -> float:
        rate = 0.0
        for t, r in self.schedule.get(drb, ()):
            if t <= t_s:
                rate = r
            else:
                break
        return rate

    def apply(self, cell: "Cell", t_s: float) -> None:
        for drb in self.schedule:
            if cell.has_bearer(drb):
                cell.set_offered(drb, self.rate_at(drb, t_s))


@dataclass
class WindowMetrics:
    ttis: int
    utilization: float
    served_mbps: dict[int, float]
    alloc_rb_mean: dict[int, float]
    cell_throughput_mbps: float


class Cell:
    """One carrier driven tick-by-tick against a slice registry."""

    def __init__(
        self,
        cfg: CellConfig,
        registry: SliceRegistry,
        algorithms: fssf.AlgorithmRegistry = fssf.DEFAULT_REGISTRY,
        stage2_policy: str = "max_min",
        link_state: Optional[LinkState] = None,
    ):
        if registry.total_rb != cfg.total_rb:
            raise ValueError("registry and cell disagree on total_rb")
        self.cfg = cfg
        self.registry = registry
        self.algorithms = algorithms
        self.stage2_policy = stage2_policy
        self.link = link_state or LinkState()
        self.tti_index = 0
        self.buffers: dict[int, float] = {}
        self.offered: dict[int, float] = {}
        self.histories: dict[int, dict] = {}
        self._struct_epoch = -1
        self._slices_in: tuple[fssf.SliceInput, ...] = ()
        self._ue_rate: dict[int, float] = {}
        self._drb_bler: dict[int, float] = {}
        self._drb_capacity: dict[int, float] = {}
        self._decision_cache: dict = {}
        self._cacheable = False
        # window accumulators (reset by end_window)
        self._win_ttis = 0
        self._win_alloc = 0
        self._win_served: dict[int, float] = {}
        self._win_alloc_drb: dict[int, int] = {}
        self.last_decision: Optional[fssf.ScheduleDecision] = None

    # -- bearer bookkeeping ------------------------------------------------------

    def has_bearer(self, drb: int) -> bool:
        return drb in self.buffers

    def attach_bearer(self, drb: int, offered_mbps: float = 0.0) -> None:
        self.buffers.setdefault(drb, 0.0)
        self.offered[drb] = offered_mbps

    def detach_bearer(self, drb: int) -> None:
        self.buffers.pop(drb, None)
        self.offered.pop(drb, None)

    def set_offered(self, drb: int, mbps: float) -> None:
        if mbps < 0:
            raise ValueError("offered rate must be >= 0")
        if drb not in self.buffers:
            raise KeyError(f"drb {drb} not attached")
        self.offered[drb] = mbps

    # -- per-tick machinery --------------------------------------------------------

    def _rebuild_structure(self) -> None:
        snap = self.registry.published
        slices = []
        self._ue_rate = {}
        self._drb_bler = {}
        self._drb_capacity = {}
        per_rb_bits = self.cfg.per_rb_bits_per_tti
        for uid, ue in snap.ues.items():
            self._ue_rate[uid] = per_rb_bits * self.link.mcs_rate_fraction(ue.mcs)
        for sid in sorted(snap.slices):
            s = snap.slices[sid]
            if s.state is SliceState.IDLE:
                continue
            reserves = s.state in (
                SliceState.DEDICATED, SliceState.PRIORITIZED, SliceState.HYBRID
            )
            # bearer-less shared slices have nothing to schedule, but a
            # bearer-less dedicated/prioritized slice still pins its assignment
            if not s.bearers and not reserves:
                continue
            drbs = []
            for drb in sorted(s.bearers):
                b = snap.bearers[drb]
                drbs.append(fssf.DrbInput(drb, b.ue_id, b.bearer_priority))
                bler = snap.ues[b.ue_id].bler if b.ue_id in snap.ues else 0.0
                self._drb_bler[drb] = bler
                self._drb_capacity[drb] = (
                    self._ue_rate.get(b.ue_id, per_rb_bits) / 8.0 * (1.0 - bler)
                )
            slices.append(
                fssf.SliceInput(
                    slice_id=s.slice_id,
                    state=s.state,
                    dedicated_rb=s.rrc.dedicated_rb,
                    prioritized_rb=s.rrc.prioritized_rb,
                    shared_priority=s.rrc.shared_priority,
                    fd_scheduler=s.fd_scheduler,
                    drbs=tuple(drbs),
                )
            )
        self._slices_in = tuple(slices)
        self._cacheable = all(
            self.algorithms.get(s.fd_scheduler).stateless for s in slices
        )
        self._decision_cache.clear()
        self._struct_epoch = snap.epoch

    def step_tti(self) -> fssf.ScheduleDecision:
        """Advance one tick: arrivals, schedule, drain, stats."""
        snap = self.registry.published
        if snap.epoch != self._struct_epoch:
            self._rebuild_structure()
        tti_s = self.cfg.tti_ms / 1000.0
        for drb, rate in self.offered.items():
            if rate:
                self.buffers[drb] += rate * 1e6 * tti_s / 8.0

        demands: dict[int, int] = {}
        total_rb = self.cfg.total_rb
        owner_rate = self._ue_rate
        for s in self._slices_in:
            for d in s.drbs:
                buf = self.buffers.get(d.drb_id, 0.0)
                if buf > 0.0:
                    bits_per_rb = owner_rate.get(d.ue_id, self.cfg.per_rb_bits_per_tti)
                    need = math.ceil(buf * 8.0 / bits_per_rb)
                    demands[d.drb_id] = need if need < total_rb else total_rb

        decision = None
        key = None
        if self._cacheable:
            key = tuple(sorted(demands.items()))
            decision = self._decision_cache.get(key)
        if decision is None:
            inp = fssf.TtiInput(
                tti_index=self.tti_index,
                total_rb=total_rb,
                ue_rate_bits_per_rb=self._ue_rate,
                demands=demands,
                slices=self._slices_in,
            )
            decision = fssf.run_tti(inp, self.algorithms, self.histories, self.stage2_policy)
            if key is not None:
                if len(self._decision_cache) > 512:
                    self._decision_cache.clear()
                self._decision_cache[key] = decision

        allocated = 0
        served_by_drb = {}
        for drb, n_rb in decision.per_drb_rb.items():
            allocated += n_rb
            capacity = n_rb * self._drb_capacity.get(drb, 0.0)
            buf = self.buffers.get(drb, 0.0)
            served = capacity if capacity < buf else buf
            if drb in self.buffers:
                self.buffers[drb] = buf - served
            served_by_drb[drb] = served

        alpha = self.cfg.tti_ms / STATS_WINDOW_MS
        for s in self._slices_in:
            for d in s.drbs:
                drb = d.drb_id
                served = served_by_drb.get(drb, 0.0)
                stats = self.registry.get_bearer(drb).stats
                inst_mbps = served * 8.0 / tti_s / 1e6
                stats.throughput_mbps += alpha * (inst_mbps - stats.throughput_mbps)
                stats.buffer_occupancy_bytes = self.buffers.get(drb, 0.0)
                stats.packet_delay_ms = self._rtt_from(
                    stats.buffer_occupancy_bytes, stats.throughput_mbps
                )
                self._win_served[drb] = self._win_served.get(drb, 0.0) + served
                if drb in decision.per_drb_rb:
                    self._win_alloc_drb[drb] = (
                        self._win_alloc_drb.get(drb, 0) + decision.per_drb_rb[drb]
                    )

        self._win_alloc += allocated
        self._win_ttis += 1
        self.tti_index += 1
        self.last_decision = decision
        return decision

    # -- derived metrics ------------------------------------------------------------

    def _rtt_from(self, buffer_bytes: float, served_mbps: float) -> float:
        if buffer_bytes <= 0.0:
            return self.cfg.base_rtt_ms
        served_bps = served_mbps * 1e6
        if served_bps < 1.0:
            return RTT_CAP_MS
        rtt = self.cfg.base_rtt_ms + buffer_bytes * 8.0 / served_bps * 1000.0
        return rtt if rtt < RTT_CAP_MS else RTT_CAP_MS

    def rtt(self, drb: int) -> float:
        """Queueing-delay RTT estimate in ms, monotone in backlog, capped."""
        if drb not in self.buffers:
            raise KeyError(f"drb {drb} not attached")
        stats = self.registry.get_bearer(drb).stats
        return self._rtt_from(self.buffers[drb], stats.throughput_mbps)

    def utilization(self) -> float:
        """Allocated share of the grid averaged over the current window."""
        if self._win_ttis == 0:
            return 0.0
        return self._win_alloc / (self._win_ttis * self.cfg.total_rb)

    def end_window(self) -> WindowMetrics:
        """Close the current aggregation window (the driver calls this each second)."""
        ttis = max(self._win_ttis, 1)
        window_s = ttis * self.cfg.tti_ms / 1000.0
        served_mbps = {d: b * 8.0 / window_s / 1e6 for d, b in self._win_served.items()}
        metrics = WindowMetrics(
            ttis=self._win_ttis,
            utilization=self.utilization(),
            served_mbps=served_mbps,
            alloc_rb_mean={d: n / ttis for d, n in self._win_alloc_drb.items()},
            cell_throughput_mbps=sum(served_mbps.values()),
        )
        self._win_ttis = 0
        self._win_alloc = 0
        self._win_served = {}
        self._win_alloc_drb = {}
        return metrics
