"""Compiled vs numpy stencil kernels.

    python benchmarks/bench_kernels.py [--sizes 16,32,64,128] [--csv out.csv]
"""

import argparse
import csv
import sys

from threadpoolctl import threadpool_limits

from vheat import kernels
from vheat.bench import compare_kernel_backends


def main(argv=None) -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", default="16,32,64,128")
    ap.add_argument("--channels", type=int, default=32)
    ap.add_argument("--batch", type=int, default=8)
    ap.add_argument("--repeats", type=int, default=7)
    ap.add_argument("--csv")
    args = ap.parse_args(argv)
    backends = kernels.available_backends()
    print(f"default backend: {kernels.BACKEND}; available: {', '.join(backends)}")
    with threadpool_limits(1):
        rows = compare_kernel_backends([int(s) for s in args.sizes.split(",")], args.channels, args.batch,
                                       args.repeats)
    head = ["kernel", "size"] + backends + (["speedup"] if len(backends) == 2 else [])
    for r in rows:
        if "speedup" in head:
            r["speedup"] = r["numpy"] / r["cython"]
    print(" ".join(f"{h:>18s}" for h in head))
    for r in rows:
        print(" ".join(f"{r[h]:>18.3e}" if isinstance(r[h], float) else f"{r[h]!s:>18s}" for h in head))
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, head)
            w.writeheader()
            w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
