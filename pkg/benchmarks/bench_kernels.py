"""Time the compiled kernels against the numpy fallback, alone and inside their callers.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both backends are loaded side by side; outputs are checked for equality before
timing.  Without a built extension only the fallback column is printed.
"""
from __future__ import annotations

import argparse
import contextlib
import timeit

import numpy as np

from drivecausal import _kernels_py, kernels
from drivecausal.dsdag import ACTIONS, VehicleState, key_factors, random_scm
from drivecausal.metrics import rouge_l

try:
    from drivecausal import _kernels as compiled
except ImportError:
    compiled = None


@contextlib.contextmanager
def backend(impl):
    saved = {n: getattr(kernels, n) for n in ("fv_counts", "lcs_length", "tie_hits")}
    for n in saved:
        setattr(kernels, n, getattr(impl, n))
    try:
        yield
    finally:
        for n, f in saved.items():
            setattr(kernels, n, f)


def cases(rng):
    n_env = 4 ** 4
    admissible = rng.integers(1, 1 << len(ACTIONS), size=n_env).astype(np.int64)
    safe = (rng.random(n_env) < 0.7).astype(np.int8)
    a = rng.integers(0, 40, size=400).astype(np.int64)
    b = rng.integers(0, 40, size=400).astype(np.int64)
    scm = random_scm(rng, (4, 4, 4, 4))
    words = "the car stops slows because light red pedestrian crosses road ahead".split()
    corpus = [(list(rng.choice(words, 14)), [list(rng.choice(words, 14))]) for _ in range(200)]

    def sweep():
        for u in VehicleState.all()[:6]:
            for action in ACTIONS:
                try:
                    key_factors(scm, u, action)
                except ValueError:
                    pass

    return {
        "tie_hits(7, 3, 4096)": lambda k: k.tie_hits(7, 3, 4096),
        "fv_counts(256 envs)": lambda k: k.fv_counts(admissible, safe, (4, 4, 4, 4), 2, 64),
        "lcs_length(400, 400)": lambda k: k.lcs_length(a, b),
        "key_factors sweep": lambda k: sweep(),
        "rouge_l(200 pairs)": lambda k: rouge_l(corpus),
    }


def best_of(fn, impl, repeat: int) -> float:
    with backend(impl):
        timer = timeit.Timer(lambda: fn(impl))
        number, _ = timer.autorange()
        return min(timer.repeat(repeat, number)) / number


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    table = cases(np.random.default_rng(args.seed))
    print(f"{'case':24s} {'python':>12s} {'compiled':>12s} {'speedup':>8s}")
    for name, fn in table.items():
        if compiled is not None and name.split("(")[0] in ("tie_hits", "fv_counts", "lcs_length"):
            assert np.array_equal(fn(_kernels_py), fn(compiled)), name
        slow = best_of(fn, _kernels_py, args.repeat)
        if compiled is None:
            print(f"{name:24s} {slow * 1e3:10.3f}ms {'-':>12s} {'-':>8s}")
            continue
        fast = best_of(fn, compiled, args.repeat)
        print(f"{name:24s} {slow * 1e3:10.3f}ms {fast * 1e3:10.3f}ms {slow / fast:7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
