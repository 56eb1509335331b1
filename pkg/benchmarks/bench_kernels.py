"""Compare the compiled kernels against the numpy fallback.

Runs the three kernel entry points on matched workloads, asserts that the
two implementations produce identical results, and prints a timing table.
Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from kcmkit.families import make_family, tables_for
from kcmkit.kernels import implementations
from kcmkit.lattice import Geometry
from kcmkit import rng


def timed(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return out, best


def bench_closure(impls, repeat):
    geom = Geometry((256, 256), torus=True)
    t = tables_for(geom, make_family("fa_kf", 2, 2))
    u = rng.uniforms_np(7, rng.STREAM_CONFIG, 0, geom.vertex_keys())
    bits = (u >= 0.08).astype(np.uint8)
    results = {}
    for name, impl in impls.items():
        (out, rounds), dt = timed(lambda: impl.closure(bits.copy(), t),
                                  repeat)
        results[name] = (out, rounds, dt)
    return "closure 256x256 fa2 q=0.08", results


def bench_kcm(impls, repeat):
    geom = Geometry((64,), torus=True)
    t = tables_for(geom, make_family("fa_kf", 1, 1))
    vkeys = geom.vertex_keys()
    u = rng.uniforms_np(11, rng.STREAM_CONFIG, 0, vkeys)
    bits = (u >= 0.3).astype(np.uint8)
    results = {}
    for name, impl in impls.items():
        def f():
            return impl.kcm_run(bits.copy(), t, vkeys, 11, 0, 0.3, 200.0,
                                log_events=True)
        out, dt = timed(f, repeat)
        results[name] = (out, dt)
    return "kcm_run 64-ring fa1 q=0.3 t=200", results


def bench_crossing(impls, repeat):
    g = np.random.default_rng(3).random((400, 64, 32)) < 0.8
    results = {}
    for name, impl in impls.items():
        out, dt = timed(lambda: impl.crossing_batch(g, 0), repeat)
        results[name] = (out, dt)
    return "crossing_batch 400x64x32", results


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    impls = implementations()
    print(f"implementations: {', '.join(impls)}")
    if len(impls) < 2:
        print("compiled core unavailable; timing the fallback only")

    label, res = bench_closure(impls, args.repeat)
    rows = [(label, {k: v[2] for k, v in res.items()})]
    if len(res) == 2:
        a, b = res["pure"], res["compiled"]
        assert np.array_equal(a[0], b[0]), "closure bits differ"
        assert np.array_equal(a[1], b[1]), "closure rounds differ"

    label, res = bench_kcm(impls, args.repeat)
    rows.append((label, {k: v[1] for k, v in res.items()}))
    if len(res) == 2:
        pa, pb = res["pure"][0], res["compiled"][0]
        assert np.array_equal(pa["bits"], pb["bits"]), "final states differ"
        assert pa["flips"] == pb["flips"], "flip counts differ"
        times_a, verts_a, vals_a = pa["events"]
        times_b, verts_b, vals_b = pb["events"]
        assert np.array_equal(verts_a, verts_b), "event vertices differ"
        assert np.allclose(times_a, times_b, rtol=0, atol=1e-12), \
            "event times differ"
        assert np.array_equal(vals_a, vals_b), "event values differ"

    label, res = bench_crossing(impls, args.repeat)
    rows.append((label, {k: v[1] for k, v in res.items()}))
    if len(res) == 2:
        assert np.array_equal(res["pure"][0], res["compiled"][0]), \
            "crossing verdicts differ"

    print()
    width = max(len(r[0]) for r in rows) + 2
    names = list(impls)
    print("".ljust(width) + "".join(n.rjust(12) for n in names)
          + ("     speedup" if len(names) == 2 else ""))
    for label, times in rows:
        line = label.ljust(width)
        for n in names:
            line += f"{times[n] * 1e3:10.2f}ms"
        if len(names) == 2:
            line += f"{times['pure'] / times['compiled']:10.1f}x"
        print(line)
    print("\nresult equality: verified" if len(impls) == 2
          else "\nresult equality: single implementation, nothing to compare")


if __name__ == "__main__":
    main()
