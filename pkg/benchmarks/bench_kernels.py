#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Times each hot kernel on realistic training shapes and then a short
end-to-end training run per backend. The active backend for the training
comparison is controlled by the MATCHLAB_BACKEND environment variable, so
the end-to-end numbers come from two subprocesses.

    python3 benchmarks/bench_kernels.py [--repeats 200]
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from matchlab import kernels  # noqa: E402
from matchlab.numkit import make_rng  # noqa: E402


def time_call(fn, *args, repeats: int) -> float:
    fn(*args)  # warm-up (and JIT compile for the numba path)
    start = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - start) / repeats


def fresh_args(name: str, rng):
    n, c, total = 64, 5, 2000
    if name == "pseudo_margins":
        return (np.ascontiguousarray(rng.normal(size=(n, c)) * 3),)
    if name == "apm_scatter_update":
        apm = rng.normal(size=(total, c))
        counts = rng.integers(0, 50, total)
        ids = np.ascontiguousarray(rng.permutation(total)[:n], dtype=np.int64)
        pm = rng.normal(size=(n, c))
        return (apm, counts, ids, pm, 0.999)
    if name == "plwm_weights":
        return (rng.integers(0, c, n), rng.integers(0, c, n),
                rng.random(n) < 0.5, rng.random(n) < 0.5, rng.random(n) < 0.7, 3.0)
    if name == "weighted_ce_grad":
        return (np.ascontiguousarray(rng.normal(size=(n, c)) * 3),
                rng.integers(0, c, n), rng.choice([0.0, 1.0, 3.0], size=n), float(n))
    raise ValueError(name)


def bench_kernels(repeats: int) -> None:
    rng = make_rng(0)
    print(f"{'kernel':<22} {'numpy (us)':>12} {'numba (us)':>12} {'speedup':>9}")
    for name in ("pseudo_margins", "apm_scatter_update", "plwm_weights",
                 "weighted_ce_grad"):
        impls = kernels.implementations(name)
        t_numpy = time_call(impls["numpy"], *fresh_args(name, rng), repeats=repeats)
        if "numba" in impls:
            t_numba = time_call(impls["numba"], *fresh_args(name, rng), repeats=repeats)
            print(f"{name:<22} {t_numpy * 1e6:>12.2f} {t_numba * 1e6:>12.2f} "
                  f"{t_numpy / t_numba:>8.1f}x")
        else:
            print(f"{name:<22} {t_numpy * 1e6:>12.2f} {'n/a':>12} {'':>9}")


TRAIN_SNIPPET = """
import time
from matchlab import kernels
from matchlab.config import parse_config_text
from matchlab.runner import execute_run

cfg = parse_config_text('''
classes = 4
input_dim = 12
class_separation = 3.5
labels_per_class = 10
unlabeled_per_class = 500
val_size = 400
test_size = 1000
batch_size = 32
epochs = 20
opt.lr = 0.03
augment.strong = gaussian_noise
''')
execute_run(cfg, "multimatch", 1)  # warm-up / compile
start = time.perf_counter()
result = execute_run(cfg, "multimatch", 1)
elapsed = time.perf_counter() - start
print(f"backend={kernels.BACKEND} run_time={elapsed:.2f}s "
      f"final_test_error={result.final_test_error:.4f}")
"""


def bench_training() -> None:
    print("\nend-to-end 20-epoch multimatch run per backend:")
    for backend in ("numpy", "numba"):
        env = dict(os.environ, MATCHLAB_BACKEND=backend)
        env["PYTHONPATH"] = os.pathsep.join(
            [os.path.join(os.path.dirname(__file__), "..", "src"),
             env.get("PYTHONPATH", "")])
        proc = subprocess.run([sys.executable, "-c", TRAIN_SNIPPET], env=env,
                              capture_output=True, text=True)
        if proc.returncode != 0:
            print(f"  {backend}: FAILED\n{proc.stderr}")
        else:
            print("  " + proc.stdout.strip())


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=200)
    parser.add_argument("--skip-training", action="store_true")
    args = parser.parse_args()
    print(f"active backend: {kernels.BACKEND}")
    bench_kernels(args.repeats)
    if not args.skip_training:
        bench_training()


if __name__ == "__main__":
    main()
