"""Time the numba kernels against the pure-numpy fallback.

    python benchmarks/bench_kernels.py [--batch 128] [--repeat 20]

The critic backend can be switched in-process. The kd-tree kernel is bound
at import time, so its fallback timing runs in a child process with
ADVREG_DISABLE_JIT=1.
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def best_of(fn, repeat):
    fn()  # warm-up (JIT compile, caches)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def critic_timings(batch, repeat):
    from advreg import critic as C
    from advreg.losses import critic_loss_full, generator_loss
    from advreg.geometry import RigidTransform

    rng = np.random.default_rng(0)
    net = C.init_critic(rng=rng)
    T, M = rng.normal(size=(batch, 3)), rng.normal(size=(batch, 3))
    t = RigidTransform(rng.normal(size=3), rng.normal(size=3))
    out = {}
    for backend in ("numba", "numpy"):
        C.set_backend(backend)
        out[backend] = {
            "critic_step": best_of(lambda: critic_loss_full(net, T, M, 10.0, np.random.default_rng(1)), repeat),
            "generator_step": best_of(lambda: generator_loss(net, M, t), repeat),
        }
    return out


def kdtree_timing(n_points, n_queries, repeat):
    from advreg import _accel
    from advreg.icp import KdTree

    rng = np.random.default_rng(0)
    tree = KdTree(rng.normal(size=(n_points, 3)))
    Q = rng.normal(size=(n_queries, 3))
    return {"backend": _accel.backend(), "kdtree_query": best_of(lambda: tree.query(Q), repeat)}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=128)
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--points", type=int, default=20000)
    ap.add_argument("--queries", type=int, default=2000)
    ap.add_argument("--kdtree-only", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()

    if args.kdtree_only:
        print(json.dumps(kdtree_timing(args.points, args.queries, args.repeat)))
        return

    rows = []
    crit = critic_timings(args.batch, args.repeat)
    for op in ("critic_step", "generator_step"):
        rows.append((f"{op} (batch {args.batch})", crit["numba"][op], crit["numpy"][op]))

    kd = {}
    for flag in ("0", "1"):
        env = dict(os.environ, ADVREG_DISABLE_JIT=flag)
        cmd = [sys.executable, __file__, "--kdtree-only", "--points", str(args.points),
               "--queries", str(args.queries), "--repeat", str(max(1, args.repeat // 5))]
        res = json.loads(subprocess.run(cmd, env=env, capture_output=True, text=True, check=True).stdout)
        kd[res["backend"]] = res["kdtree_query"]
    rows.append((f"kdtree query ({args.queries} q / {args.points} pts)", kd["numba"], kd["numpy"]))

    print(f"{'kernel':<40}{'numba ms':>12}{'numpy ms':>12}{'speedup':>10}")
    for name, a, b in rows:
        print(f"{name:<40}{a * 1e3:>12.3f}{b * 1e3:>12.3f}{b / a:>9.1f}x")


if __name__ == "__main__":
    main()
