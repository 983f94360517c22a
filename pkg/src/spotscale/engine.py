"""Request-level service: arrival replay, WRR dispatch and per-VM processor
sharing, advanced in windows between control events."""

from __future__ import annotations

import math

import numpy as np

from .capacity import AppProfile, wrr_weights, smooth_wrr_schedule
from .kernels import SlotState, get_kernels
from .traces import RT_BIN_WIDTH, WorkloadTrace

BLOCK_INTERVALS = 600


def _window_means(rate: np.ndarray, w: int) -> np.ndarray:
    """Each second mapped to the mean rate of its aligned ``w``-second window."""
    n = len(rate)
    if n == 0:
        return rate.copy()
    pad = -n % w
    blocks = np.concatenate([rate, np.full(pad, np.nan)]).reshape(-1, w)
    return np.repeat(np.nanmean(blocks, axis=1), w)[:n]


class SimRng:
    """Independent named Gaussian streams derived from one seed."""

    STREAMS = ("request_lengths", "startup_delays", "shutdown_delays",
               "spot_request_delays")

    def __init__(self, seed: int):
        self.seed = seed
        self._gens = {name: np.random.default_rng([seed, i])
                      for i, name in enumerate(self.STREAMS)}

    def gaussian(self, stream: str, mean: float, sd: float) -> float:
        g = self._gens[stream]
        while True:
            x = g.normal(mean, sd)
            if x > 0:
                return float(x)

    def gaussians(self, stream: str, n: int, mean: float, sd: float) -> np.ndarray:
        g = self._gens[stream]
        out = g.normal(mean, sd, n)
        bad = np.flatnonzero(out <= 0)
        while bad.size:
            out[bad] = g.normal(mean, sd, bad.size)
            bad = bad[out[bad] <= 0]
        return out


class RequestEngine:
    def __init__(self, workload: WorkloadTrace, duration: float, profile: AppProfile,
                 rng: SimRng, timeout: float = 30.0, jit=None, max_rt: float = 30.0,
                 window: float = 10.0):
        self.k = get_kernels(jit)
        self.workload = workload
        self.duration = duration
        self.profile = profile
        self.rng = rng
        self.timeout = timeout
        n_sec = int(math.ceil(duration))
        self.rate = workload.per_second_rate(duration)
        self.window_rate = _window_means(self.rate, max(1, int(window)))
        self.rt_sum = np.zeros(max(n_sec, 1))
        self.n_comp = np.zeros(max(n_sec, 1), dtype=np.int64)
        self.n_to = np.zeros(max(n_sec, 1), dtype=np.int64)
        self.n_sec = n_sec
        self.shortfall = np.zeros(n_sec, dtype=bool)
        self.hist = np.zeros(int(max_rt / RT_BIN_WIDTH) + 2, dtype=np.int64)
        self.demand = np.array(profile.demand_per_request.values)
        self.online_cap = np.zeros(len(self.demand))

        self.st = SlotState(8, 256)
        self.slot_of: dict[int, int] = {}
        self.free = list(range(7, -1, -1))
        self.dispatch: list = []
        self.sched = np.zeros(0, dtype=np.int64)
        self.ptr = 0

        self.now = 0.0
        self.arrivals = 0
        self._next_interval = 0
        self._block_t = np.zeros(0)
        self._block_l = np.zeros(0)
        self._pos = 0

    # -- slot storage ------------------------------------------------------
    def _grow(self, slots=None, jobs=None):
        st = self.st
        s0 = st.slots
        self.st = st.grown(slots or s0, jobs or st.jobs)
        if self.st.slots > s0:
            self.free = list(range(self.st.slots - 1, s0 - 1, -1)) + self.free

    def _ensure_jobs(self, needed: int):
        if needed > self.st.jobs:
            self._grow(jobs=max(needed, 2 * self.st.jobs))

    # -- instance membership ----------------------------------------------
    def attach(self, vm) -> None:
        """VM came online: give it a slot and make it dispatchable."""
        if not self.free:
            self._grow(slots=2 * self.st.slots)
        slot = self.free.pop()
        self.slot_of[vm.id] = slot
        self.st.clear(slot)
        self.st.cap[slot] = vm.type.ecu
        self.dispatch.append(vm)
        self._reschedule()

    def stop_dispatch(self, vm) -> None:
        """VM keeps serving its in-flight jobs but takes no new ones."""
        if vm in self.dispatch:
            self.dispatch.remove(vm)
            self._reschedule()

    def detach(self, vm) -> None:
        """VM is gone; in-flight jobs get one more chance elsewhere."""
        self.stop_dispatch(vm)
        slot = self.slot_of.pop(vm.id, None)
        if slot is None:
            return
        st = self.st
        jobs = st.live_jobs(slot)
        arr = st.arr[slot, jobs]
        ln = st.ln[slot, jobs]
        flag = st.flag[slot, jobs]
        st.clear(slot)
        self.free.append(slot)
        order = np.lexsort((jobs, arr))
        sec = min(int(self.now), self.n_sec - 1) if self.n_sec else 0
        for i in order:
            if flag[i] or len(self.sched) == 0:
                self.n_to[sec] += 1
                continue
            target = int(self.sched[self.ptr])
            self.ptr = (self.ptr + 1) % len(self.sched)
            self._ensure_jobs(int(self.st.cnt[target]) + 1)
            st = self.st
            self.k.push(target, arr[i], ln[i], 1, st.cnt, st.vt, st.tag, st.arr, st.ln,
                        st.flag, st.heap_t, st.pos_t, st.heap_a, st.pos_a, st.free)

    def _reschedule(self) -> None:
        self.dispatch.sort(key=lambda v: v.id)
        dims = len(self.demand)
        self.online_cap = np.zeros(dims)
        for v in self.dispatch:
            self.online_cap += np.array(v.type.capacity.values)
        if not self.dispatch:
            self.sched = np.zeros(0, dtype=np.int64)
        else:
            weights = wrr_weights([(v.type, 0.0) for v in self.dispatch],
                                  self.profile.demand_per_request)
            slots = [self.slot_of[v.id] for v in self.dispatch]
            self.sched = np.array([slots[i] for i in smooth_wrr_schedule(weights)],
                                  dtype=np.int64)
        self.ptr = 0

    # -- arrivals ----------------------------------------------------------
    def _next_block(self) -> bool:
        wl = self.workload
        i0 = self._next_interval
        if i0 >= len(wl.counts):
            return False
        i1 = min(i0 + BLOCK_INTERVALS, len(wl.counts))
        counts = wl.counts[i0:i1]
        starts = wl.start + np.arange(i0, i1) * wl.interval
        total = int(counts.sum())
        first = np.repeat(np.cumsum(counts) - counts, counts)
        j = np.arange(total) - first
        per = np.repeat(counts, counts)
        self._block_t = np.repeat(starts, counts) + (j + 0.5) * wl.interval / per
        self._block_l = self.rng.gaussians(
            "request_lengths", total, self.profile.mean_request_length,
            self.profile.request_length_stddev)
        self._pos = 0
        self._next_interval = i1
        return True

    def _arrivals(self, t1: float):
        ts, ls = [], []
        while True:
            if self._pos >= len(self._block_t):
                if not self._next_block():
                    break
                continue
            end = int(np.searchsorted(self._block_t, t1, side="left"))
            if end > self._pos:
                ts.append(self._block_t[self._pos:end])
                ls.append(self._block_l[self._pos:end])
            self._pos = max(end, self._pos)
            if end < len(self._block_t):
                break
        if not ts:
            return np.zeros(0), np.zeros(0)
        if len(ts) == 1:
            return ts[0], ls[0]
        return np.concatenate(ts), np.concatenate(ls)

    # -- time --------------------------------------------------------------
    def advance(self, t: float) -> None:
        t = min(t, self.duration)
        if t <= self.now:
            return
        times, lengths = self._arrivals(t)
        n = len(times)
        asg, self.ptr = self.k.assign(n, self.sched, self.ptr)
        if n and len(self.sched):
            per = np.bincount(asg, minlength=self.st.slots)
            self._ensure_jobs(int((per + self.st.cnt).max()))
        self.k.serve(self.now, t, times, lengths, asg, *self.st.arrays(), self.rt_sum,
                     self.n_comp, self.n_to, self.hist, self.timeout, RT_BIN_WIDTH)
        s0, s1 = int(math.floor(self.now)), min(int(math.ceil(t)), self.n_sec)
        if s1 > s0:
            need = self.window_rate[s0:s1, None] * self.demand[None, :]
            limit = self.online_cap * (1 + 1e-9) + 1e-12
            self.shortfall[s0:s1] |= (need > limit).any(axis=1)
        self.arrivals += n
        self.now = t

    def observed_rate(self, t: float, window: float) -> float:
        """Mean arrival rate over the last ``window`` seconds before ``t``."""
        hi = min(int(math.floor(t)), self.n_sec)
        lo = max(0, hi - int(window))
        if hi <= lo:
            return float(self.rate[0]) if self.n_sec else 0.0
        return float(self.rate[lo:hi].mean())

    @property
    def in_flight(self) -> int:
        return int(self.st.cnt.sum())
