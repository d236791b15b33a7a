"""Compare the compiled and pure-Python block-product backends.

Times the partial apply used during peeling (all stored levels, no near
field) on a synthetic rep, once per available backend, and checks that the
backends agree.

    python benchmarks/bench_kernels.py --N 64 --L 5 --cols 20 --repeat 5
"""
import argparse
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))
from conftest import plant_h1  # noqa: E402

from hpeel import hmat, kernels  # noqa: E402
from hpeel.hmat import Variant  # noqa: E402
from hpeel.oracle import explicit_oracle  # noqa: E402
from hpeel.peel import PeelConfig, construct  # noqa: E402


def bench(rep, X, backend, repeat):
    saved = kernels.BACKEND
    kernels.BACKEND = backend
    try:
        rep.invalidate()
        Y = hmat.partial_tree(rep, X, rep.grid.L)  # warm the plan cache
        best = float("inf")
        for _ in range(repeat):
            t0 = time.perf_counter()
            hmat.partial_tree(rep, X, rep.grid.L)
            best = min(best, time.perf_counter() - t0)
    finally:
        kernels.BACKEND = saved
    return best, Y


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, default=64)
    ap.add_argument("--L", type=int, default=5)
    ap.add_argument("--cols", type=int, default=20, help="probe width r_cap + c")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    G, _, _ = plant_h1(args.N, args.L, rank=6, seed=0)
    X = np.random.default_rng(0).standard_normal((args.N ** 2, args.cols))
    print(f"N={args.N} L={args.L} cols={args.cols}  backends: {kernels.available_backends()}")
    print(f"{'variant':<10} {'backend':<8} {'seconds':>10} {'speedup':>8}")
    for v in Variant:
        rep, _ = construct(explicit_oracle(G), PeelConfig(variant=v, L=args.L))
        times, outs = {}, {}
        for b in kernels.available_backends():
            times[b], outs[b] = bench(rep, X, b, args.repeat)
        base = times["python"]
        for b, t in times.items():
            print(f"{v.value:<10} {b:<8} {t:10.5f} {base / t:8.2f}x")
        ref = outs["python"]
        for b, Y in outs.items():
            err = np.linalg.norm(Y - ref) / np.linalg.norm(ref)
            assert err < 1e-12, f"{b} disagrees with python backend: {err:.2e}"


if __name__ == "__main__":
    main()
