"""Time the numba kernels against the pure-numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 20] [--batch 32]

Shapes follow the conv/pool layers of the default student and teacher on
1x28x28 inputs. Each backend is warmed up (JIT compile) before timing and
the reported figure is the best of ``--repeat`` runs.
"""

import argparse
import timeit

import numpy as np

from sparsedistill import kernels
from sparsedistill.kernels import _numpy

CASES = [
    # name, input [N, C, H, W] (already padded), kernel [O, C, kh, kw]
    ("conv 1->4 @30x30", (1, 30, 30), (4, 1, 3, 3)),
    ("conv 4->8 @16x16", (4, 16, 16), (8, 4, 3, 3)),
    ("conv 8->16 @16x16", (8, 16, 16), (16, 8, 3, 3)),
    ("conv 16->32 @16x16", (16, 16, 16), (32, 16, 3, 3)),
]
POOLS = [("pool 4 @28x28", (4, 28, 28)), ("pool 16 @14x14", (16, 14, 14))]


def _best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def run(repeat, batch, seed=0):
    rng = np.random.default_rng(seed)
    impls = {"numpy": _numpy}
    if kernels._numba is not None:
        impls["numba"] = kernels._numba
    rows = []
    for name, xs, ws in CASES:
        x = rng.normal(size=(batch,) + xs).astype(np.float32)
        w = rng.normal(size=ws).astype(np.float32)
        out = _numpy.conv2d_forward(x, w, 1)
        g = rng.normal(size=out.shape).astype(np.float32)
        t = {}
        for label, mod in impls.items():
            mod.conv2d_forward(x, w, 1)
            mod.conv2d_backward(x, w, g, 1)
            t[label] = (_best(lambda: mod.conv2d_forward(x, w, 1), repeat),
                        _best(lambda: mod.conv2d_backward(x, w, g, 1), repeat))
        rows.append((name + " fwd", {k: v[0] for k, v in t.items()}))
        rows.append((name + " bwd", {k: v[1] for k, v in t.items()}))
    for name, xs in POOLS:
        x = rng.normal(size=(batch,) + xs).astype(np.float32)
        t = {}
        for label, mod in impls.items():
            out, idx = mod.maxpool2d_forward(x, 2)
            g = np.ones_like(out)
            mod.maxpool2d_backward(g, idx, x.shape, 2)
            t[label] = (_best(lambda: mod.maxpool2d_forward(x, 2), repeat),
                        _best(lambda: mod.maxpool2d_backward(g, idx, x.shape, 2), repeat))
        rows.append((name + " fwd", {k: v[0] for k, v in t.items()}))
        rows.append((name + " bwd", {k: v[1] for k, v in t.items()}))
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--batch", type=int, default=32)
    args = ap.parse_args(argv)
    rows = run(args.repeat, args.batch)
    have_numba = "numba" in rows[0][1]
    print(f"{'kernel':<26} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")
    for name, t in rows:
        nb = t.get("numba", float("nan"))
        print(f"{name:<26} {t['numpy'] * 1e3:>10.3f} {nb * 1e3:>10.3f} {t['numpy'] / nb if have_numba else float('nan'):>8.2f}")
    if not have_numba:
        print("numba is not installed; only the numpy backend was timed")


if __name__ == "__main__":
    main()
