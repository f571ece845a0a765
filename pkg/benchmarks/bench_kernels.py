#!/usr/bin/env python3
"""Benchmark the compiled kernel backend against the numpy fallback.

Kernel-level timings run both implementations in-process on the shapes the
decoder actually exercises (channel width 64 for the toy pipeline, 512 for
the full configuration).  ``--end-to-end`` additionally times a full
teacher-forced training step per backend in subprocesses, since the backend
is chosen at import time.

Usage:
    python benchmarks/bench_kernels.py [--end-to-end]
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from memcap.kernels import pykernels  # noqa: E402

try:
    from memcap.kernels import _ckern
except ImportError:
    _ckern = None

rng = np.random.default_rng(0)


def _cases():
    for n in (64, 512):
        a_mat = rng.standard_normal((n, n))
        x = rng.standard_normal(n)
        m = 40  # frames
        frames = rng.standard_normal((m, 2 * n))
        proj = rng.standard_normal((2 * n, n))
        k, d_a = 20, 100  # attention slots at full width
        slots = rng.standard_normal((k, n))
        ua = rng.standard_normal((d_a, n))
        g = rng.standard_normal(n)
        moments = (np.zeros(n * n), np.zeros(n * n))
        flat_p = rng.standard_normal(n * n)
        flat_g = rng.standard_normal(n * n)
        yield f"matvec {n}x{n}", lambda impl, a=a_mat, x=x: impl.matvec(a, x)
        yield f"matmul {m}x{2*n} . {2*n}x{n}", lambda impl, f=frames, p=proj: impl.matmul(f, p)
        yield (f"attn scores {k}x{n} . ({d_a}x{n})^T",
               lambda impl, s=slots, u=ua: impl.matmul_nt(s, u))
        yield f"circ_conv {n}", lambda impl, k_=x, s=g: impl.circ_conv(k_, s)
        yield f"softmax {n}", lambda impl, x=x: impl.softmax_vec(x)
        yield (f"adam_update {n * n}",
               lambda impl, p=flat_p, gg=flat_g, mo=moments:
               impl.adam_update(p, gg, mo[0], mo[1], 1e-3, 0.9, 0.999, 1e-8, 1))


def bench_kernels():
    impls = [("python", pykernels)] + ([("compiled", _ckern)] if _ckern else [])
    if _ckern is None:
        print("compiled backend not built; timing the numpy fallback only\n")
    header = f"{'kernel':<34}" + "".join(f"{name:>14}" for name, _ in impls)
    if len(impls) == 2:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for label, call in _cases():
        row = f"{label:<34}"
        times = []
        for _, impl in impls:
            loops = 2000 if "512" not in label else 200
            t = timeit.timeit(lambda: call(impl), number=loops) / loops
            times.append(t)
            row += f"{t * 1e6:>12.1f}us"
        if len(times) == 2:
            row += f"{times[0] / times[1]:>9.2f}x"
        print(row)


_END_TO_END_SNIPPET = r"""
import time
import numpy as np
from memcap.data import CaptionItem
from memcap.decoder import DecoderConfig, MemoryDecoder
from memcap.training import AdamState, train_batch
import memcap.kernels

rng = np.random.default_rng(0)
config = DecoderConfig(vocab_size=30, feature_dim=16, n={n}, d_a={d_a}, seed=0)
model = MemoryDecoder.create(config)
items = [
    CaptionItem(f"v{{i}}", rng.standard_normal((5, 16)), [1, 4, 5, 6, 7, 8, 2])
    for i in range(10)
]
adam = AdamState(list(model.params.named()))
train_batch(model, items, adam)  # warm up
start = time.perf_counter()
for _ in range(5):
    train_batch(model, items, adam)
per_step = (time.perf_counter() - start) / 5
print(f"{{memcap.kernels.BACKEND:>10}}  n={n}: {{per_step * 1e3:8.1f}} ms / batch of 10")
"""


def bench_end_to_end():
    print("\nfull training step (10 videos, 6 supervised steps each):")
    sys.stdout.flush()  # children write straight to the fd
    for backend in ("py", "c"):
        if backend == "c" and _ckern is None:
            continue
        for n, d_a in ((64, 16), (128, 32)):
            env = dict(os.environ, MEMCAP_KERNELS=backend)
            code = _END_TO_END_SNIPPET.format(n=n, d_a=d_a)
            subprocess.run([sys.executable, "-c", code], env=env, check=True)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--end-to-end", action="store_true",
                        help="also time a full training step per backend")
    args = parser.parse_args()
    bench_kernels()
    if args.end_to_end:
        bench_end_to_end()


if __name__ == "__main__":
    main()
