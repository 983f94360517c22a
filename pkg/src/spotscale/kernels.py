"""Request-level hot loops: WRR assignment and processor-sharing service.

Every kernel exists twice: compiled with ``numba.njit`` and as plain Python
over numpy arrays. ``SPOTSCALE_NO_JIT=1`` (or a missing numba) selects the
plain path; :func:`get_kernels` lets callers pick explicitly, which the tests
use to cross-check the two.

Processor sharing is tracked in virtual time: ``vt[s]`` is the service each
job on slot ``s`` has received since the slot was last idle, so a job that
entered at virtual time ``v`` with length ``L`` finishes when ``vt`` reaches
``v + L`` (its ``tag``). Jobs of a slot live in columns of 2-D ``[slot, job]``
arrays and sit in two indexed min-heaps, by tag (next completion) and by
arrival (next timeout). Free columns form a stack: ``free[s, :J - cnt[s]]``.
"""

from __future__ import annotations

import os
from types import SimpleNamespace

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

ENV_FLAG = "SPOTSCALE_NO_JIT"


def jit_enabled() -> bool:
    return numba is not None and os.environ.get(ENV_FLAG, "") in ("", "0")


class SlotState:
    """Job storage for ``slots`` instances with room for ``jobs`` each."""

    def __init__(self, slots: int, jobs: int):
        self.cap = np.zeros(slots)
        self.cnt = np.zeros(slots, dtype=np.int64)
        self.vt = np.zeros(slots)
        self.tag = np.zeros((slots, jobs))
        self.arr = np.zeros((slots, jobs))
        self.ln = np.zeros((slots, jobs))
        self.flag = np.zeros((slots, jobs), dtype=np.int8)
        self.heap_t = np.zeros((slots, jobs), dtype=np.int64)
        self.pos_t = np.zeros((slots, jobs), dtype=np.int64)
        self.heap_a = np.zeros((slots, jobs), dtype=np.int64)
        self.pos_a = np.zeros((slots, jobs), dtype=np.int64)
        self.free = np.tile(np.arange(jobs, dtype=np.int64), (slots, 1))

    @property
    def slots(self) -> int:
        return self.tag.shape[0]

    @property
    def jobs(self) -> int:
        return self.tag.shape[1]

    def arrays(self) -> tuple:
        return (self.cap, self.cnt, self.vt, self.tag, self.arr, self.ln, self.flag,
                self.heap_t, self.pos_t, self.heap_a, self.pos_a, self.free)

    def grown(self, slots: int, jobs: int) -> "SlotState":
        s0, j0 = self.slots, self.jobs
        new = SlotState(slots, jobs)
        new.cap[:s0] = self.cap
        new.cnt[:s0] = self.cnt
        new.vt[:s0] = self.vt
        for name in ("tag", "arr", "ln", "flag", "heap_t", "pos_t", "heap_a", "pos_a"):
            getattr(new, name)[:s0, :j0] = getattr(self, name)
        for s in range(s0):
            nfree = j0 - int(self.cnt[s])
            new.free[s, :nfree] = self.free[s, :nfree]
            new.free[s, nfree:nfree + jobs - j0] = np.arange(j0, jobs)
        return new

    def live_jobs(self, s: int) -> np.ndarray:
        return self.heap_a[s, :self.cnt[s]].copy()

    def clear(self, s: int) -> None:
        self.cnt[s] = 0
        self.vt[s] = 0.0
        self.cap[s] = 0.0
        self.free[s] = np.arange(self.jobs)


def _build(jit: bool) -> SimpleNamespace:
    wrap = (lambda fn: numba.njit(cache=True)(fn)) if jit else (lambda fn: fn)

    def sift_up(heap, pos, key, s, i):
        j = heap[s, i]
        k = key[s, j]
        while i > 0:
            p = (i - 1) >> 1
            pj = heap[s, p]
            if key[s, pj] <= k:
                break
            heap[s, i] = pj
            pos[s, pj] = i
            i = p
        heap[s, i] = j
        pos[s, j] = i

    sift_up = wrap(sift_up)

    def sift_down(heap, pos, key, s, i, n):
        j = heap[s, i]
        k = key[s, j]
        while True:
            c = 2 * i + 1
            if c >= n:
                break
            if c + 1 < n and key[s, heap[s, c + 1]] < key[s, heap[s, c]]:
                c += 1
            if key[s, heap[s, c]] >= k:
                break
            heap[s, i] = heap[s, c]
            pos[s, heap[s, c]] = i
            i = c
        heap[s, i] = j
        pos[s, j] = i

    sift_down = wrap(sift_down)

    def heap_remove(heap, pos, key, s, j, n):
        # n is the heap size before removing job j
        i = pos[s, j]
        last = heap[s, n - 1]
        if i < n - 1:
            heap[s, i] = last
            pos[s, last] = i
            sift_down(heap, pos, key, s, i, n - 1)
            sift_up(heap, pos, key, s, pos[s, last])

    heap_remove = wrap(heap_remove)

    def push(s, arrival, length, redispatched, cnt, vt, tag, arr, ln, flag,
             heap_t, pos_t, heap_a, pos_a, free):
        c = cnt[s]
        j = free[s, tag.shape[1] - c - 1]
        tag[s, j] = vt[s] + length
        arr[s, j] = arrival
        ln[s, j] = length
        flag[s, j] = redispatched
        if c == 0:
            heap_t[s, 0] = j
            pos_t[s, j] = 0
            heap_a[s, 0] = j
            pos_a[s, j] = 0
            cnt[s] = 1
            return
        heap_t[s, c] = j
        sift_up(heap_t, pos_t, tag, s, c)
        heap_a[s, c] = j
        sift_up(heap_a, pos_a, arr, s, c)
        cnt[s] = c + 1

    push = wrap(push)

    def drop(s, j, cnt, tag, arr, heap_t, pos_t, heap_a, pos_a, free):
        c = cnt[s]
        if c == 1:
            free[s, tag.shape[1] - 1] = j
            cnt[s] = 0
            return
        heap_remove(heap_t, pos_t, tag, s, j, c)
        heap_remove(heap_a, pos_a, arr, s, j, c)
        free[s, tag.shape[1] - c] = j
        cnt[s] = c - 1

    drop = wrap(drop)

    def advance(s, now, target, cap, cnt, vt, tag, arr, ln, flag, heap_t, pos_t,
                heap_a, pos_a, free, rt_sum, n_comp, n_to, hist, timeout, bin_w):
        # Run slot s from `now` to `target`; each of c jobs is served at cap/c.
        n_sec = rt_sum.shape[0]
        n_bins = hist.shape[0]
        while cnt[s] > 0:
            c = cnt[s]
            rate = cap[s] / c
            jc = heap_t[s, 0]
            left = tag[s, jc] - vt[s]
            if left < 0.0:
                left = 0.0
            t_comp = now + left / rate
            ja = heap_a[s, 0]
            t_to = arr[s, ja] + timeout
            t_next = t_comp if t_comp <= t_to else t_to
            if t_next > target:
                vt[s] += (target - now) * rate
                now = target
                break
            vt[s] += (t_next - now) * rate
            now = t_next
            sec = int(now)
            if sec >= n_sec:
                sec = n_sec - 1
            if t_comp <= t_to:
                rt = now - arr[s, jc]
                rt_sum[sec] += rt
                n_comp[sec] += 1
                b = int(rt / bin_w)
                if b >= n_bins:
                    b = n_bins - 1
                hist[b] += 1
                victim = jc
            else:
                n_to[sec] += 1
                victim = ja
            if c == 1:
                # common case, no heap work
                free[s, tag.shape[1] - 1] = victim
                cnt[s] = 0
            else:
                drop(s, victim, cnt, tag, arr, heap_t, pos_t, heap_a, pos_a, free)
        if cnt[s] == 0:
            # idle slot: restart virtual time so it never grows without bound
            vt[s] = 0.0

    advance = wrap(advance)

    def serve(t0, t1, times, lengths, asg, cap, cnt, vt, tag, arr, ln, flag,
              heap_t, pos_t, heap_a, pos_a, free, rt_sum, n_comp, n_to, hist,
              timeout, bin_w):
        """Serve arrivals (sorted by time) assigned to slots over [t0, t1).

        ``asg[i] == -1`` means no instance could take request i: it times out
        on arrival.
        """
        n_slots = cap.shape[0]
        n_sec = rt_sum.shape[0]
        order = np.argsort(asg, kind="mergesort")
        start = 0
        n = asg.shape[0]
        while start < n and asg[order[start]] < 0:
            sec = int(times[order[start]])
            if sec >= n_sec:
                sec = n_sec - 1
            n_to[sec] += 1
            start += 1
        pos = start
        for s in range(n_slots):
            now = t0
            while pos < n and asg[order[pos]] == s:
                i = order[pos]
                if cnt[s] > 0:
                    advance(s, now, times[i], cap, cnt, vt, tag, arr, ln, flag, heap_t,
                            pos_t, heap_a, pos_a, free, rt_sum, n_comp, n_to, hist,
                            timeout, bin_w)
                now = times[i]
                if cnt[s] == 0:
                    j = free[s, tag.shape[1] - 1]
                    tag[s, j] = vt[s] + lengths[i]
                    arr[s, j] = times[i]
                    ln[s, j] = lengths[i]
                    flag[s, j] = 0
                    heap_t[s, 0] = j
                    pos_t[s, j] = 0
                    heap_a[s, 0] = j
                    pos_a[s, j] = 0
                    cnt[s] = 1
                else:
                    push(s, times[i], lengths[i], 0, cnt, vt, tag, arr, ln, flag,
                         heap_t, pos_t, heap_a, pos_a, free)
                pos += 1
            if cnt[s] > 0:
                advance(s, now, t1, cap, cnt, vt, tag, arr, ln, flag, heap_t,
                        pos_t, heap_a, pos_a, free, rt_sum, n_comp, n_to, hist,
                        timeout, bin_w)

    if jit:
        def assign(n, sched, ptr):
            out = np.empty(n, dtype=np.int64)
            L = sched.shape[0]
            if L == 0:
                out[:] = -1
                return out, ptr
            for i in range(n):
                out[i] = sched[ptr]
                ptr += 1
                if ptr == L:
                    ptr = 0
            return out, ptr
    else:
        def assign(n, sched, ptr):
            L = sched.shape[0]
            if L == 0:
                return np.full(n, -1, dtype=np.int64), ptr
            idx = (ptr + np.arange(n, dtype=np.int64)) % L
            return sched[idx].astype(np.int64), int((ptr + n) % L)

    return SimpleNamespace(assign=wrap(assign), serve=wrap(serve), push=push, jit=jit)


_CACHE: dict[bool, SimpleNamespace] = {}


def get_kernels(jit: bool | None = None) -> SimpleNamespace:
    if jit is None:
        jit = jit_enabled()
    if jit and numba is None:
        raise RuntimeError("numba is not installed")
    if jit not in _CACHE:
        _CACHE[jit] = _build(jit)
    return _CACHE[jit]
