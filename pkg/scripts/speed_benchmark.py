#!/usr/bin/env python3
"""Sweep bank shapes and report per-query speedup of precomputed scoring
over the exact NN scan, plus the on-disk size ratio.

Example:
    python3 scripts/speed_benchmark.py --out bench.jsonl
"""

import argparse

import numpy as np

from crdkit import FeatureBank, QueryBatch, bench_compare

SHAPES = [
    (64, 2_000, 500),
    (64, 20_000, 500),
    (128, 10_000, 1_000),
    (256, 10_000, 500),
]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--reps", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--out", default=None, help="append JSON lines here")
    args = parser.parse_args()

    print(f"{'d':>5} {'n':>8} {'m':>6} {'crd ns/q':>12} {'nn ns/q':>14} "
          f"{'speedup':>10} {'size ratio':>11}")
    for d, n, m in SHAPES:
        rng = np.random.default_rng(args.seed)
        bank = FeatureBank(rng.standard_normal((d, n)))
        queries = QueryBatch(rng.standard_normal((d, m)))
        report = bench_compare(bank, queries, lam=5.0, reps=args.reps,
                               warmup=1, threads=args.threads)
        ratio = report.bank_bytes / report.crd_model_bytes
        print(f"{d:>5} {n:>8} {m:>6} {report.crd_ns_per_query:>12,.0f} "
              f"{report.nn_ns_per_query:>14,.0f} {report.speedup:>9,.1f}x "
              f"{ratio:>10.1f}x")
        if args.out:
            with open(args.out, "a", encoding="utf-8") as fh:
                fh.write(report.to_json_line() + "\n")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
