"""Compare the numba-compiled loops against the vectorized numpy kernels.

    python3 benchmarks/bench_kernels.py [--repeat N] [--end-to-end]

Each kernel is called once to trigger compilation before timing.  With
``--end-to-end`` a short training run is also timed in two subprocesses,
one per ``ADAMEMENTO_NUMBA`` setting.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from adamemento import kernels, oracle
from adamemento._accel import HAS_NUMBA
from adamemento.env import make_env

E2E = """
import time
from adamemento.config import parse_config
from adamemento.agent.trainer import train
from adamemento._accel import backend_name
cfg = parse_config(None, ["NumEnv=8", "OriPolicyEnvNum=4", "total_updates=20", "ExploitUpdate=5"])
t = time.perf_counter()
train(cfg)
print(backend_name(), time.perf_counter() - t)
"""


def cases():
    rng = np.random.default_rng(0)
    mdp = oracle.random_mdp(0, 50, 4, 0.95)
    q0 = np.zeros((50, 4))
    yield "value_iteration 50x4", lambda f: f(mdp.transition, mdp.reward, 0.95, q0, 1e-10, 100_000), \
        kernels.value_iteration_loop, kernels.value_iteration_numpy

    T, n = 128, 32
    r, v, d = rng.normal(size=(T, n)), rng.normal(size=(T, n)), (rng.random((T, n)) < 0.05).astype(float)
    last = rng.normal(size=n)
    yield "gae 128x32", lambda f: f(r, v, last, d, 0.999, 0.95), kernels.gae_loop, kernels.gae_numpy

    spec = make_env("dark_chamber")
    blocked, cliff, goal = spec.masks()
    rows = rng.integers(0, 50, 32)
    cols = rng.integers(0, 50, 32)
    acts = rng.integers(0, 4, 32)
    steps = np.zeros(32, dtype=np.int64)
    yield "grid_step x32", lambda f: f(rows, cols, acts, steps, blocked, cliff, goal, 4500, 0.0, 0.0, 0.0), \
        kernels.grid_step_loop, kernels.grid_step_numpy

    x = rng.random(4096)
    yield "welford 4096", lambda f: f(x, 10.0, 0.3, 1.2, 0.0, 1e-8), kernels.welford_loop, kernels.welford_numpy


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--end-to-end", action="store_true")
    args = ap.parse_args()
    print(f"numba available: {HAS_NUMBA}")
    print(f"{'kernel':24s} {'loop us':>10s} {'numpy us':>10s} {'speedup':>8s}")
    for name, call, loop, vec in cases():
        call(loop)
        call(vec)
        t_loop = min(timeit.repeat(lambda: call(loop), number=1, repeat=args.repeat)) * 1e6
        t_vec = min(timeit.repeat(lambda: call(vec), number=1, repeat=args.repeat)) * 1e6
        print(f"{name:24s} {t_loop:10.1f} {t_vec:10.1f} {t_vec / t_loop:8.2f}")
    if args.end_to_end:
        for flag in ("1", "0"):
            env = dict(os.environ, ADAMEMENTO_NUMBA=flag)
            out = subprocess.run([sys.executable, "-c", E2E], env=env, capture_output=True, text=True, check=True)
            backend, secs = out.stdout.split()
            print(f"train 20 updates ({backend}): {float(secs):.2f} s")


if __name__ == "__main__":
    main()
