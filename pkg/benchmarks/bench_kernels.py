"""Compare the compiled and pure-numpy integration backends.

    python3 benchmarks/bench_kernels.py [--size 32] [--steps 400] [--repeat 3]

Both backends integrate the same segmentation-style network (one oscillator
per pixel, 9x9 window) and the same two-layer hierarchy. Reports seconds per
RK4 step, the speedup, and the largest state difference between backends.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from oscgroup import fixtures, kernels
from oscgroup.coupling import CouplingGraph, build_segmentation_coupling
from oscgroup.network import HierarchySpec, NetworkSpec, _stacked, hierarchy_extent, laplacian_lambda_max, stable_dt
from oscgroup.oscillator import OscParams
from oscgroup.pipelines import build_feedback_matrices, feedback_links


def _time(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_flat(size, steps, repeat):
    img, _ = fixtures.three_level(0, size, 10.0)
    g = build_segmentation_coupling(img, 10.0, 5)
    spec = NetworkSpec.random(g, seed=0)
    dt = stable_dt(laplacian_lambda_max(g))
    adj = g.adjacency()
    rows = []
    results = {}
    for name in sorted(kernels.BACKENDS):
        t, res = _time(lambda: kernels.integrate(spec.v0, spec.w0, spec.inputs, adj, spec.params, dt, steps,
                                                 sample_every=steps, backend=name), repeat)
        results[name] = res
        rows.append((name, t / steps))
    return "flat", g.n, g.n_edges, rows, results


def bench_hierarchy(size, steps, repeat):
    img, truth = fixtures.three_level(0, size, 10.0)
    g = build_segmentation_coupling(img, 10.0, 5)
    layer1 = NetworkSpec.random(g, seed=0)
    A, _ = build_feedback_matrices(truth)
    a_link, b_link = feedback_links(A)

    layer2 = NetworkSpec.random(CouplingGraph.empty(A.shape[0]), seed=1)
    h = HierarchySpec(layer1, layer2, a_link, b_link, 1.0, 0.01)
    adj, proj, knode = _stacked(h)
    dt = stable_dt(hierarchy_extent(h))
    v0 = np.concatenate([layer1.v0, layer2.v0])
    w0 = np.concatenate([layer1.w0, layer2.w0])
    drive = np.concatenate([layer1.inputs, layer2.inputs])
    rows = []
    results = {}
    for name in sorted(kernels.BACKENDS):
        t, res = _time(lambda: kernels.integrate(v0, w0, drive, adj, OscParams(), dt, steps, sample_every=steps,
                                                 projection=proj, knode=knode, backend=name), repeat)
        results[name] = res
        rows.append((name, t / steps))
    return "hierarchy", g.n + A.shape[0], g.n_edges, rows, results


def report(label, n, n_edges, rows, results):
    print(f"{label}: {n} oscillators, {n_edges} edges")
    per = dict(rows)
    for name, t in rows:
        print(f"  {name:8s} {t * 1e3:9.3f} ms/step")
    if "cython" in per:
        print(f"  speedup  {per['python'] / per['cython']:9.1f}x")
        dv = np.max(np.abs(results["python"][0] - results["cython"][0]))
        print(f"  max |v_python - v_cython| = {dv:.2e}")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=32)
    ap.add_argument("--steps", type=int, default=400)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    print(f"default backend: {kernels.BACKEND}; available: {', '.join(sorted(kernels.BACKENDS))}")
    report(*bench_flat(args.size, args.steps, args.repeat))
    report(*bench_hierarchy(args.size, args.steps, args.repeat))


if __name__ == "__main__":
    main()
