"""Compare the numba kernels with their pure-numpy twins.

    python3 benchmarks/bench_kernels.py [--repeats 20] [--json out.json]

Each kernel is run once to trigger compilation, then timed; outputs of the two
implementations are checked for equality before timing.
"""
import argparse
import json
import time

import numpy as np

from hetune import kernels
from hetune.hecore import preset
from hetune.hecore.rlwe import ntt_tables
from hetune.pid import initial_theta, pid_tf
from hetune.plant import benchmark_plant, closed_loop, discretize_zoh, tf_to_ss


def best_of(fn, repeats):
    fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rng):
    params = preset("fast")
    rows = params.levels + 1
    tab = ntt_tables(params.modulus_chain, params.ring_dimension)
    mod, fwd, inv, ninv = tab.rows(rows, 2)
    q = mod[:, None]
    a = rng.integers(0, q, size=(2 * rows, params.ring_dimension), dtype=np.int64)
    b = rng.integers(0, q, size=a.shape, dtype=np.int64)
    yield "mulmod_rows", (kernels.mulmod_rows_numba, kernels.mulmod_rows_numpy), (a, b, mod)
    yield "ntt_forward", (kernels.ntt_forward_numba, kernels.ntt_forward_numpy), (a, mod, fwd)
    yield "ntt_inverse", (kernels.ntt_inverse_numba, kernels.ntt_inverse_numpy), (a, mod, inv, ninv)

    loop = closed_loop(tf_to_ss(benchmark_plant("G3")), tf_to_ss(pid_tf(initial_theta("G3"))))
    d = discretize_zoh(loop, 0.01)
    v = rng.normal(0, 0.05, size=8000)
    args = (d.Ad, d.Bd[:, 0], d.Bd[:, 1], d.C[0], d.D[0, 0], d.D[0, 1], 1.0, v)
    yield "lti_run (N=8000)", (kernels.lti_run_numba, kernels.lti_run_numpy), args


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=20)
    ap.add_argument("--json")
    args = ap.parse_args(argv)
    if not kernels.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    rng = np.random.default_rng(0)
    results = []
    print(f"{'kernel':<18} {'numba ms':>10} {'numpy ms':>10} {'speedup':>8}")
    for name, (fast, slow), call_args in cases(rng):
        ref, got = slow(*call_args), fast(*call_args)
        if not np.allclose(ref, got, rtol=1e-12, atol=1e-12):
            raise SystemExit(f"{name}: numba and numpy disagree")
        t_fast = best_of(lambda: fast(*call_args), args.repeats)
        t_slow = best_of(lambda: slow(*call_args), args.repeats)
        results.append({"kernel": name, "numba_ms": 1e3 * t_fast, "numpy_ms": 1e3 * t_slow})
        print(f"{name:<18} {1e3 * t_fast:10.3f} {1e3 * t_slow:10.3f} {t_slow / t_fast:8.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)


if __name__ == "__main__":
    main()
