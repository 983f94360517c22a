"""Compiled vs pure-Python request kernels.

Serves the same batch of requests through both builds of the processor-sharing
kernel, checks they agree, and prints throughput. ``--sim`` also times a short
end-to-end simulation both ways.

    python benchmarks/bench_kernels.py [--requests N] [--sim SECONDS]
"""

import argparse
import time

import numpy as np

from spotscale.kernels import SlotState, get_kernels
from spotscale.traces import RT_BIN_WIDTH


def workload(n, slots, seed=0):
    rng = np.random.default_rng(seed)
    rate = 500.0
    times = np.cumsum(rng.exponential(1 / rate, n))
    lengths = np.abs(rng.normal(0.07, 0.005, n))
    caps = rng.choice([7.0, 14.0, 28.0], slots)
    # weighted round robin by capacity
    sched = np.repeat(np.arange(slots), (caps / 7).astype(int))
    asg = sched[np.arange(n) % len(sched)]
    return times, lengths, caps, asg


def serve(jit, times, lengths, caps, asg):
    k = get_kernels(jit)
    t1 = float(times[-1]) + 60
    n_sec = int(t1) + 1
    st = SlotState(len(caps), 256)
    st.cap[:] = caps
    rt_sum = np.zeros(n_sec)
    n_comp = np.zeros(n_sec, np.int64)
    n_to = np.zeros(n_sec, np.int64)
    hist = np.zeros(300_002, np.int64)
    t0 = time.perf_counter()
    k.serve(0.0, t1, times, lengths, asg, *st.arrays(), rt_sum, n_comp, n_to, hist,
            30.0, RT_BIN_WIDTH)
    return time.perf_counter() - t0, rt_sum.sum(), int(n_comp.sum())


def bench_sim(seconds):
    from spotscale.provision import ScalingConfig
    from spotscale.simulator import SimConfig, Simulation
    from spotscale.synthetic import load_bundled

    catalog, prices, wl = load_bundled()
    for jit in (True, False):
        cfg = SimConfig(ScalingConfig(catalog["c3.large"], f=1), duration=seconds, jit=jit)
        t0 = time.perf_counter()
        r = Simulation(cfg, catalog, prices, wl).run()
        dt = time.perf_counter() - t0
        label = "numba" if jit else "python"
        print(f"sim {seconds:.0f} s  {label:6s}  {dt:7.2f} s  "
              f"{r.arrivals / dt:12,.0f} req/s  cost {r.total_cost:.4f}")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--requests", type=int, default=200_000)
    ap.add_argument("--slots", type=int, default=16)
    ap.add_argument("--sim", type=float, default=0.0)
    args = ap.parse_args()

    data = workload(args.requests, args.slots)
    # warm up the compiled build so compile time is not measured
    serve(True, *workload(100, 2))
    results = {}
    for jit in (True, False):
        dt, rt, done = serve(jit, *data)
        results[jit] = (rt, done)
        label = "numba" if jit else "python"
        print(f"serve  {label:6s}  {dt:7.3f} s  {args.requests / dt:12,.0f} req/s")
    (rt_a, n_a), (rt_b, n_b) = results[True], results[False]
    assert n_a == n_b and abs(rt_a - rt_b) <= 1e-9 * max(1.0, rt_a)
    print(f"both builds: {n_a} completions, total response time {rt_a:.6f} s")
    if args.sim:
        bench_sim(args.sim)


if __name__ == "__main__":
    main()
