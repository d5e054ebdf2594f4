#!/usr/bin/env python3
"""Fraction of Hilbert-Schmidt random qutrit states that violate the nine-ray inequality."""

from __future__ import annotations

import argparse
import time

from qutritctx import engine, persist


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--n", type=int, default=10_000_000)
    p.add_argument("--seed", type=int, default=20240611)
    p.add_argument("--workers", type=int, default=1)
    args = p.parse_args()
    t0 = time.perf_counter()
    res = engine.census(args.n, args.seed, workers=args.workers)
    rec = res.to_record()
    rec["seconds"] = time.perf_counter() - t0
    print(persist.dumps(rec), end="")


if __name__ == "__main__":
    main()
