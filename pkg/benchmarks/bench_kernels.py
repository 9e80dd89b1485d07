"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Each kernel is run on desk-sized inputs (20 clients, MLP 20-16-2) and on a
larger case; the table reports the best-of-N wall time per call and the
speed-up.  Outputs of the two backends are compared before timing.
"""
import argparse
import timeit

import numpy as np

from flsim import _core
from flsim.clustering import mutual_reachability
from flsim.data import generate_task
from flsim.learning import ModelArch, init_model
from flsim.linalg import pairwise_cosine


def cases():
    rng = np.random.default_rng(0)
    arch = ModelArch((20, 16, 2))
    p = init_model(arch, 0).params
    data = generate_task(0, 2, 20, 100, informative=10)
    sizes = np.asarray(arch.layer_sizes, dtype=np.intp)
    order = np.arange(len(data), dtype=np.intp)
    for K, dim in ((20, arch.n_params), (200, 5000)):
        X = rng.normal(size=(K, dim))
        yield f"gram K={K} p={dim}", "gram", (X,)
        yield f"row_sqdist K={K} p={dim}", "row_sqdist", (X, X[0].copy())
        M = np.ascontiguousarray(mutual_reachability(pairwise_cosine(X), K // 2 + 1))
        yield f"mst_prim K={K}", "mst_prim", (M,)
    yield "sgd_epoch n=100 20-16-2", "sgd_epoch", (p, sizes, True, data.X, data.y.astype(np.intp), order, 32, 0.1)


def run(name, args, module):
    if name == "sgd_epoch":
        return getattr(module, name)(args[0].copy(), *args[1:])
    return getattr(module, name)(*args)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    mods = _core.backends()
    if "cython" not in mods:
        print("compiled extension not built; only the fallback is available")
    print(f"{'kernel':<28}{'python ms':>12}{'cython ms':>12}{'speed-up':>10}")
    for label, name, a in cases():
        outs = {b: run(name, a, m) for b, m in mods.items()}
        if len(outs) == 2:
            ref, got = outs["python"], outs["cython"]
            ok = np.allclose(ref, got, rtol=1e-9, atol=1e-12)
            assert ok, f"{label}: backends disagree"
        t = {}
        for b, m in mods.items():
            n = 3 if b == "python" and "K=200" in label and name == "mst_prim" else 20
            t[b] = min(timeit.repeat(lambda: run(name, a, m), number=n, repeat=args.repeat)) / n * 1e3
        cy = t.get("cython")
        print(f"{label:<28}{t['python']:>12.3f}"
              + (f"{cy:>12.3f}{t['python'] / cy:>9.1f}x" if cy else f"{'-':>12}{'-':>10}"))


if __name__ == "__main__":
    main()
