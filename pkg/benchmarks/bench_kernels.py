#!/usr/bin/env python3
"""Benchmark the numba kernels against their pure-numpy fallbacks.

The two paths always produce identical results; this script measures the
speed difference on workloads shaped like the benchmark pipeline's hot
spots (co-occurrence pair counting, boolean doc-set unions).

    python3 benchmarks/bench_kernels.py [--docs N] [--terms M] [--repeat R]

Set HIERLABEL_NO_NUMBA=1 when running the pipeline itself to force the
numpy path everywhere.
"""

import argparse
import time

import numpy as np

from hierlabel import _kernels


def timeit(fn, *args, repeat=3):
    best = float("inf")
    result = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, result


def synth_presence(rng, n_docs, n_terms, uniq_per_doc):
    rows = [np.unique(rng.integers(0, n_terms, uniq_per_doc)).astype(np.int64)
            for _ in range(n_docs)]
    indptr = np.zeros(n_docs + 1, np.int64)
    indptr[1:] = np.cumsum([r.size for r in rows])
    return indptr, np.concatenate(rows)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--docs", type=int, default=5000)
    ap.add_argument("--terms", type=int, default=10000)
    ap.add_argument("--uniq", type=int, default=40,
                    help="distinct terms per document")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    print(f"numba available and active: {_kernels.USING_NUMBA}")
    print(f"workload: {args.docs} docs, {args.terms} terms, "
          f"{args.uniq} distinct terms/doc\n")

    indptr, indices = synth_presence(rng, args.docs, args.terms, args.uniq)

    rows = [("pair_keys / numpy", _kernels.pair_keys_numpy,
             (indptr, indices, args.terms))]
    if _kernels.HAVE_NUMBA:
        _kernels.pair_keys_numba(indptr[:10], indices[:indptr[9]], args.terms)
        rows.append(("pair_keys / numba", _kernels.pair_keys_numba,
                     (indptr, indices, args.terms)))
    results = {}
    for name, fn, fnargs in rows:
        secs, out = timeit(fn, *fnargs, repeat=args.repeat)
        results[name] = (secs, np.sort(out))
        print(f"{name:24s} {secs * 1e3:9.1f} ms   ({out.size} keys)")
    if len(results) == 2:
        a, b = results.values()
        assert np.array_equal(a[1], b[1]), "kernel outputs differ"
        print(f"{'speedup':24s} {a[0] / b[0]:9.2f} x\n")

    # term-union workload: CSC presence, one union of 10 term doc-lists
    csc_ptr, csc_idx = synth_presence(rng, args.terms, args.docs,
                                      max(2, args.docs // 200))
    terms = rng.choice(args.terms, size=10, replace=False).astype(np.int64)

    def run_numpy():
        out = np.zeros(args.docs, bool)
        for _ in range(1000):
            out[:] = False
            _kernels.mark_union_numpy(csc_ptr, csc_idx, terms, out)
        return out

    rows = [("mark_union / numpy x1000", run_numpy)]
    if _kernels.HAVE_NUMBA:
        def run_numba():
            out = np.zeros(args.docs, bool)
            for _ in range(1000):
                out[:] = False
                _kernels.mark_union_numba(csc_ptr, csc_idx, terms, out)
            return out
        _kernels.mark_union_numba(csc_ptr, csc_idx, terms,
                                  np.zeros(args.docs, bool))
        rows.append(("mark_union / numba x1000", run_numba))
    results = {}
    for name, fn in rows:
        secs, out = timeit(fn, repeat=args.repeat)
        results[name] = (secs, out)
        print(f"{name:24s} {secs * 1e3:9.1f} ms")
    if len(results) == 2:
        a, b = results.values()
        assert np.array_equal(a[1], b[1]), "kernel outputs differ"
        print(f"{'speedup':24s} {a[0] / b[0]:9.2f} x")


if __name__ == "__main__":
    main()
