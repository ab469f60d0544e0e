"""Bowen roots of growing truncations for several tau, word lengths 1 and 2.

Writes one CSV row per (tau, truncation) with both roots and their gap; the
gap should shrink as the truncation grows.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass

from cifs_lab import TauParam, bowen_root, smallest_indices


@dataclass
class SweepConfig:
    taus: tuple = ((0.0, 1.0), (1.0, 1.0), (0.0, 2.0), (0.5, 1.5))
    counts: tuple = (100, 250, 500, 1000, 2000)
    tol: float = 1e-10


def run(cfg: SweepConfig, out):
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["tau_u", "tau_v", "n_indices", "truncation_bound", "h_len1", "h_len2", "gap"])
    for u, v in cfg.taus:
        tau = TauParam(u, v)
        for count in cfg.counts:
            idx = smallest_indices(tau, count)
            h1 = bowen_root(tau, idx, 1, tol=cfg.tol).h
            h2 = bowen_root(tau, idx, 2, tol=cfg.tol).h
            w.writerow([u, v, len(idx), repr(idx.bound), repr(h1), repr(h2), repr(h1 - h2)])
            out.flush()


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--counts", default="100,250,500,1000,2000", help="truncation sizes (index counts)")
    p.add_argument("--out", default=None, help="CSV path (default stdout)")
    args = p.parse_args()
    cfg = SweepConfig(counts=tuple(int(c) for c in args.counts.split(",")))
    if args.out:
        with open(args.out, "w", newline="") as fh:
            run(cfg, fh)
    else:
        run(cfg, sys.stdout)


if __name__ == "__main__":
    main()
