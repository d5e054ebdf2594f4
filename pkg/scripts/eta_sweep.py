#!/usr/bin/env python3
"""Simulated LHS of the optimal state against the lossy bound and the best loss-exploiting model."""

from __future__ import annotations

import argparse

import numpy as np

from qutritctx import adversary, engine, harness, persist


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--etas", default="0.5,0.6,0.7,0.75,0.8,0.82,0.85,0.9,0.95,1.0")
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--budget", type=int, default=5_000)
    args = p.parse_args()
    etas = [float(x) for x in args.etas.split(",")]
    m = engine.witness(engine.catalog_graph(), engine.main_functional())
    w, v = np.linalg.eigh(m)
    rho = np.outer(v[:, 0], v[:, 0].conj())
    rows = []
    for r in harness.eta_sweep(rho, etas, harness.default_plan(args.trials), args.seed, m=m):
        adv = adversary.search_adversarial(r.eta, args.budget, args.seed)
        rows.append({"eta": r.eta, "lhs": r.lhs, "stderr": r.lhs_stderr, "lossy_bound": r.lossy_bound,
                     "adversary": adv.expected_lhs, "verdict": r.verdict})
    print(persist.table_text(rows), end="")


if __name__ == "__main__":
    main()
