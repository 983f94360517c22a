"""Independent reference computations used by the tests.

These deliberately avoid the package's planner and provision code: plain
floats, exhaustive enumeration, no pruning.
"""

from __future__ import annotations

import itertools
import math

REL = 1e-9


def ceil_div(need, unit):
    """Smallest n with n * unit >= need in every dimension (same slack rule)."""
    n = 0
    for a, b in zip(need, unit):
        if a <= 0:
            continue
        x = a / b
        n = max(n, math.ceil(x - REL * max(1.0, abs(x))))
    return n


def count(need, cap, m):
    return ceil_div(need, [c * (1 - m) for c in cap])


def brute_force_min_cost(R, types, prices, vm_o, f, O, S, m_spot, m_def, n_c=0,
                         current=(), excluded=()):
    """Cheapest spot plan cost over every (n, group set) allowed.

    ``types`` maps name -> capacity tuple, ``vm_o`` is (capacity, price).
    Returns None when no spot plan exists.
    """
    cap_o, p_o = vm_o
    C_o = count(R, cap_o, m_def) * p_o
    lo = max(n_c, count([r * O for r in R], cap_o, m_spot))
    hi = count(R, cap_o, m_spot)
    names = sorted(types)
    best = None
    for n in range(lo, hi + 1):
        r_o = [min(c * (1 - m_spot) * n, r) for c, r in zip(cap_o, R)]
        for s in range(max(len(current), f + 1), min(len(names), S) + 1):
            q = [max(0.0, r - o) / (s - f) for r, o in zip(R, r_o)]
            if all(x == 0 for x in q):
                continue
            for combo in itertools.combinations(names, s):
                if not set(current) <= set(combo):
                    continue
                ok, parts = True, [n * p_o]
                for name in combo:
                    n_q = count(q, types[name], m_spot)
                    if n_q == 0:
                        ok = False
                        break
                    if name not in current:
                        tb = (C_o - n * p_o) / (s * n_q)
                        if name in excluded or not tb > prices[name]:
                            ok = False
                            break
                    parts.append(n_q * prices[name])
                if ok:
                    cost = math.fsum(parts)
                    if best is None or cost < best:
                        best = cost
    return best


def ps_response_times(jobs, cap):
    """Exact processor-sharing response times by event stepping.

    ``jobs`` is a list of (arrival, work); all run on one server of speed
    ``cap`` shared equally.
    """
    pending = sorted(range(len(jobs)), key=lambda i: jobs[i][0])
    left = {}
    out = [None] * len(jobs)
    t = 0.0
    while pending or left:
        nxt_arr = jobs[pending[0]][0] if pending else math.inf
        if left:
            rate = cap / len(left)
            j = min(left, key=lambda k: (left[k], k))
            t_done = t + left[j] / rate
        else:
            t_done = math.inf
        if nxt_arr <= t_done:
            if left:
                for k in left:
                    left[k] -= (nxt_arr - t) * cap / len(left)
            t = nxt_arr
            i = pending.pop(0)
            left[i] = jobs[i][1]
        else:
            for k in left:
                left[k] -= (t_done - t) * rate
            t = t_done
            del left[j]
            out[j] = t - jobs[j][0]
    return out
