#!/usr/bin/env python3
"""Benchmark the compiled kernels against the NumPy fallback.

Covers the two per-slot hot kernels (link grid, fused policy step) at desk
and reference scales, plus an end-to-end training episode with each backend
forced via subprocess.  Batched update math runs on NumPy/BLAS in both
backends (measured slower when compiled naively, so it is not part of the
compiled surface).

Usage: python3 benchmarks/bench_backends.py [--repeats 2000]
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from xsched._kernels import pure
from xsched.nets import init_mlp

try:
    from xsched._kernels import _core
except ImportError:
    _core = None

EPISODE_SNIPPET = """
import time
import numpy as np
from xsched.a2c import A2CHyper
from xsched.config import desk_config
from xsched.xapps import XAppKind, train_xapp
from xsched._kernels import BACKEND
episodes = 50
start = time.perf_counter()
train_xapp(XAppKind.POWER_A2C, desk_config().network, A2CHyper(), episodes, seed=0)
print(f"{BACKEND}\t{(time.perf_counter() - start) / episodes * 1e3:.3f}")
"""


def timeit(fn, args, repeats):
    fn(*args)  # warm up
    start = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - start) / repeats


def _link_grid_case(rng, orus, users, rbgs):
    oru_xy = rng.uniform(0.0, 2000.0, (orus, 2))
    user_xy = rng.uniform(-500.0, 2500.0, (users, 2))
    shadow = rng.normal(0.0, 8.0, (orus, users))
    owner = (np.arange(orus, dtype=np.int64)[:, None] * (users // orus)
             + rng.integers(0, users // orus, (orus, rbgs)))
    power = rng.uniform(0.0, 6000.0, (orus, rbgs))
    return (oru_xy, user_xy, shadow, owner, power,
            120.9, 37.6, 3.98e-12, 1.67e6, 30.0)


def _actor_case(rng, features, heads, head_size, sample):
    params = init_mlp((features, 128, 128, heads * head_size), rng)
    uniforms = rng.random(heads) if sample else None
    return (params.weights, params.biases, rng.normal(size=features),
            heads, head_size, uniforms)


def bench_kernels(repeats):
    rng = np.random.default_rng(0)
    cases = [
        ("link_grid desk 2x8x6", "link_grid", _link_grid_case(rng, 2, 8, 6)),
        ("link_grid ref 4x16x12", "link_grid", _link_grid_case(rng, 4, 16, 12)),
        ("actor_step desk greedy 48->72", "actor_step", _actor_case(rng, 48, 12, 6, False)),
        ("actor_step desk sample 48->72", "actor_step", _actor_case(rng, 48, 12, 6, True)),
        ("actor_step ref sample 192->480", "actor_step", _actor_case(rng, 192, 48, 10, True)),
        ("actor_step scheduler 3->4", "actor_step", _actor_case(rng, 3, 1, 4, True)),
    ]
    print(f"{'kernel':34s} {'numpy (us)':>12s} {'compiled (us)':>14s} {'speedup':>8s}")
    for name, fn_name, args in cases:
        t_pure = timeit(getattr(pure, fn_name), args, repeats)
        if _core is None:
            print(f"{name:34s} {t_pure * 1e6:12.2f} {'n/a':>14s} {'n/a':>8s}")
            continue
        t_core = timeit(getattr(_core, fn_name), args, repeats)
        print(f"{name:34s} {t_pure * 1e6:12.2f} {t_core * 1e6:14.2f} "
              f"{t_pure / t_core:8.2f}x")


def bench_episode():
    print("\nend-to-end xApp training (desk config, ms per episode):")
    for backend in ("pure", "compiled"):
        if backend == "compiled" and _core is None:
            print("compiled\tnot built")
            continue
        env = dict(os.environ, XSCHED_BACKEND=backend)
        out = subprocess.run([sys.executable, "-c", EPISODE_SNIPPET], env=env,
                             capture_output=True, text=True, check=True)
        print(out.stdout.strip())


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=2000)
    args = parser.parse_args()
    bench_kernels(args.repeats)
    bench_episode()


if __name__ == "__main__":
    main()
