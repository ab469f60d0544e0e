"""Command-line front end: ``cifs-lab <command> [options]``.

Every command prints a JSON report ``{command, config, results, seed,
wall_time_s, provenance}``.  ``--out`` receives the JSON report for
``dim``, ``constants`` and the audits, a CSV table for ``measure-scan`` and
``sweep``, and a PGM image for ``render``.

Exit codes: 0 success, 2 an audit found violations, 1 any error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict

import numpy as np

from . import __version__
from .cifs import SystemConfig, distortion_audit, osc_audit, sample_limit_set
from .errors import BracketError, DomainError, FitError
from .geometry import (
    Disk,
    TauParam,
    case1_probe_ball,
    e_apply,
    invert_disk,
    preimage_probe_ball,
    spectral_data,
)
from .lattice import (
    count_lens,
    count_quarter_disk,
    fit_growth_constants,
    lens_bound,
    lens_threshold,
    lattice_cone_angle,
    quarter_disk_bounds,
    smallest_indices,
    AnnulusCounter,
)
from .measure import build_measure, claim_star_scan, default_b_sample, packing_constants
from .pressure import bowen_root

EXIT_OK, EXIT_ERROR, EXIT_VIOLATION = 0, 1, 2
VIEW_LO, VIEW_SPAN = -0.05, 1.1  # real axis; the imaginary axis is centred on 0


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def thread_cap() -> int:
    raw = os.environ.get("CIFS_LAB_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"CIFS_LAB_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise UsageError(f"CIFS_LAB_THREADS must be a positive integer, got {raw!r}")
    return n


# ------------------------------------------------------------------ outputs


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, np.generic):
        return _jsonable(x.item())
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


def dump_report(report: dict) -> str:
    return json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n"


def write_text(path: str, text: str):
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def csv_text(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({c: _fmt(row[c]) for c in columns})
    return buf.getvalue()


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


def pixel_coords(points, width: int):
    """Row/column of each point in a ``width``-square image of the viewport around ``X``."""
    z = np.asarray(points, dtype=complex).ravel()
    scale = width / VIEW_SPAN
    col = np.floor((z.real - VIEW_LO) * scale).astype(np.int64)
    row = np.floor((VIEW_SPAN / 2 - z.imag) * scale).astype(np.int64)
    return row, col


def render_bytes(points, width: int) -> bytes:
    if width < 64:
        raise DomainError(f"width must be >= 64, got {width}")
    img = np.zeros((width, width), dtype=np.uint8)
    row, col = pixel_coords(points, width)
    ok = (row >= 0) & (row < width) & (col >= 0) & (col < width)
    img[row[ok], col[ok]] = 255
    return f"P5\n{width} {width}\n255\n".encode("ascii") + img.tobytes()


def write_render(points, width: int, path: str) -> int:
    """Write a binary PGM of the points; returns the number of marked pixels."""
    data = render_bytes(points, width)
    try:
        with open(path, "wb") as fh:
            fh.write(data)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc
    return int(np.count_nonzero(np.frombuffer(data[-width * width :], dtype=np.uint8)))


# ----------------------------------------------------------------- commands


def _tau(args) -> TauParam:
    try:
        return TauParam(args.tau_u, args.tau_v)
    except DomainError as exc:
        raise UsageError(str(exc)) from None


def _indices(args, tau):
    if args.truncation < 1 or args.truncation != int(args.truncation):
        raise UsageError("--truncation is a positive index count")
    return smallest_indices(tau, int(args.truncation))


def cmd_dim(args):
    tau = _tau(args)
    idx = _indices(args, tau)
    est = bowen_root(tau, idx, word_length=args.depth, tol=args.tol)
    res = asdict(est)
    res["h_between_1_and_2"] = 1.0 < est.h < 2.0
    return res, [], EXIT_OK


def cmd_render(args):
    tau = _tau(args)
    idx = _indices(args, tau)
    pts = sample_limit_set(SystemConfig(tau, truncation_count=len(idx), max_word_length=args.depth))
    out = args.out or "render.pgm"
    marked = write_render(pts, args.width, out)
    outside = int(np.count_nonzero(np.abs(pts - 0.5) > 0.5 + 1e-12))
    res = {"points": len(pts), "marked_pixels": marked, "points_outside_x": outside, "image": out}
    return res, [], EXIT_VIOLATION if outside else EXIT_OK


def growth_fit(tau: TauParam, r_max: float):
    """Fit ``(Q, C)`` on every radius where ``count / R^2`` can reach a new low."""
    counter = AnnulusCounter(tau, r_max)
    grid = counter.critical_radii(1.0, r_max)
    return fit_growth_constants(tau, grid), counter, grid


def cmd_audit_lattice(args):
    tau = _tau(args)
    rng = np.random.default_rng(args.seed)
    r_max = int(args.r_max)
    if r_max < 6:
        raise UsageError("--r-max must be >= 6")
    quarter_bad = []
    for r in range(6, r_max + 1):
        lo, hi = quarter_disk_bounds(r)
        n = count_quarter_disk(r)
        if not lo <= n <= hi:
            quarter_bad.append(r)
    growth, counter, grid = growth_fit(tau, r_max)
    audit = grid[grid >= growth.c_hat]
    annulus_bad = audit[~(counter(audit) > growth.q_hat * audit**2)].tolist()
    lens_bad = []
    r_lo = lens_threshold(tau)
    for _ in range(args.trials):
        rp = float(rng.uniform(r_lo, 3 * r_lo))
        mod = float(rng.uniform(rp * 1.0001, 4 * rp))
        th = rng.uniform(0, lattice_cone_angle(tau))
        w = mod * complex(math.cos(th), math.sin(th))
        if not count_lens(tau, w, rp) > lens_bound(tau, rp):
            lens_bad.append([w, rp])
    res = {
        "quarter_disk": {"r_range": [6, r_max], "violations": quarter_bad},
        "annulus": {"q_hat": growth.q_hat, "c_hat": growth.c_hat, "radii_audited": len(audit), "violations": annulus_bad},
        "lens": {"trials": args.trials, "threshold": r_lo, "violations": lens_bad},
    }
    bad = quarter_bad or annulus_bad or lens_bad
    return res, [], EXIT_VIOLATION if bad else EXIT_OK


def geometry_checks(tau: TauParam, samples: int, seed: int) -> dict:
    """Sampled checks of the inversion formula and the two inclusion constructions."""
    rng = np.random.default_rng(seed)
    worst_circle = worst_round = 0.0
    inv_bad = incl_bad = probe_bad = 0
    for _ in range(samples):
        x = complex(*rng.uniform(-5, 5, 2))
        if abs(x) < 1e-3:
            continue
        r = float(rng.uniform(0.01, 0.99)) * abs(x)
        img = invert_disk(Disk(x, r))
        pts = 1.0 / Disk(x, r).boundary(16)
        rel = float(np.max(np.abs(np.abs(pts - img.center) - img.radius)) / img.radius)
        back = invert_disk(img)
        rt = max(abs(back.center - x) / max(abs(x), 1.0), abs(back.radius - r) / r)
        worst_circle, worst_round = max(worst_circle, rel), max(worst_round, rt)
        inv_bad += (rel > 1e-10) + (rt > 1e-9)
    sd = spectral_data(tau)
    for _ in range(samples):
        xt = complex(*rng.uniform(-50, 50, 2))
        rt = float(rng.uniform(0.1, 20))
        pre = preimage_probe_ball(tau, xt, rt)
        pts = e_apply(tau, np.append(pre.boundary(8), pre.center))
        incl_bad += bool(np.any(np.abs(pts - xt) > rt * (1 + 1e-12)))
    for _ in range(samples):
        w = complex(*rng.uniform(1, 100, 2))
        rb = float(rng.uniform(0.01, 0.99)) * abs(w)
        m = float(rng.uniform(2, 10))
        probe = case1_probe_ball(tau, w, rb, m)
        pts = e_apply(tau, np.append(probe.boundary(8), probe.center))
        inside = (np.abs(pts) < abs(w) * (1 + 1e-12)) & (np.abs(pts - w) < rb * (1 + 1e-12))
        probe_bad += int(not inside.all())
    return {
        "inversion": {"samples": samples, "worst_circle_rel": worst_circle, "worst_roundtrip": worst_round, "violations": int(inv_bad)},
        "preimage_probe": {"samples": samples, "violations": incl_bad, "lambda2": sd.lambda2},
        "lens_probe": {"samples": samples, "violations": probe_bad},
    }


def cmd_audit_geometry(args):
    tau = _tau(args)
    res = geometry_checks(tau, args.samples, args.seed)
    bad = sum(v["violations"] for v in res.values())
    return res, [], EXIT_VIOLATION if bad else EXIT_OK


def cmd_audit_cifs(args):
    tau = _tau(args)
    cfg = SystemConfig(tau, args.bound, max_word_length=args.depth)
    overlaps = osc_audit(cfg)
    rep = distortion_audit(cfg, samples=args.samples, seed=args.seed)
    res = {
        "n_indices": len(cfg.indices),
        "truncation_bound": cfg.truncation_bound,
        "osc_violations": [[list(a), list(b)] for a, b in overlaps],
        "contraction_hat": rep.contraction_hat,
        "k_hat": rep.k_hat,
        "k_hat_word": [list(x) for x in rep.worst_word],
        "words_audited": rep.samples,
    }
    bad = overlaps or not rep.contraction_hat < 1 or not math.isfinite(rep.k_hat)
    return res, [], EXIT_VIOLATION if bad else EXIT_OK


def empirical_inputs(tau: TauParam, idx, depth: int, growth_r_max: float = 500.0):
    """``(h, k, q, c)`` estimated from a truncation."""
    h = bowen_root(tau, idx, word_length=depth).h
    k = distortion_audit(SystemConfig(tau, truncation_count=min(len(idx), 2000), max_word_length=depth)).k_hat
    growth = growth_fit(tau, growth_r_max)[0]
    return h, k, growth.q_hat, growth.c_hat


def cmd_constants(args):
    tau = _tau(args)
    idx = _indices(args, tau)
    h, k, q, c = empirical_inputs(tau, idx, args.depth)
    pc = packing_constants(tau, k, h, q, c)
    return {"inputs": {"h": h, "k": k, "q": q, "c": c}, "constants": asdict(pc)}, [], EXIT_OK


SCAN_COLUMNS = ["level", "m", "n", "r", "case", "lower", "upper", "ratio"]


def cmd_measure_scan(args):
    tau = _tau(args)
    idx = _indices(args, tau)
    h, k, q, c = empirical_inputs(tau, idx, 1)
    if args.h is not None:
        h = args.h
    pc = packing_constants(tau, k, h, q, c)
    sample = default_b_sample(idx, args.n_small, args.n_random, seed=args.seed)
    levels = sorted({args.level - 1, args.level} - {0}) if args.check_stability else [args.level]
    rows, per_level = [], {}
    for lvl in levels:
        m = build_measure(tau, h, idx, lvl)
        scan = claim_star_scan(tau, m, pc, sample, r_per_b=args.r_per_b, seed=args.seed)
        per_level[lvl] = scan
        rows += [dict(row, level=lvl) for row in scan.rows]
    top = per_level[levels[-1]]
    nonpositive = sum(row["ratio"] <= 0 for row in top.rows)
    cases = {
        str(lvl): [
            {
                "case": c_.case_id,
                "scanned": c_.scanned,
                "min_ratio": c_.min_ratio,
                "witness": None if c_.witness is None else [list(c_.witness[0]), c_.witness[1]],
                "below_l": c_.below_l,
            }
            for c_ in scan.cases
        ]
        for lvl, scan in per_level.items()
    }
    res = {
        "h": h,
        "inputs": {"k": k, "q": q, "c": c},
        "l": pc.l,
        "xi": pc.xi,
        "gamma": pc.gamma,
        "n_indices": len(idx),
        "truncation_bound": idx.bound,
        "skipped_b": [list(b) for b in top.skipped],
        "cases": cases,
        "nonpositive_ratios": int(nonpositive),
    }
    bad = nonpositive > 0
    if args.check_stability and len(levels) == 2:
        drift = {}
        for a, b in zip(per_level[levels[0]].cases, per_level[levels[1]].cases):
            if a.min_ratio and b.min_ratio:
                drift[str(a.case_id)] = abs(b.min_ratio - a.min_ratio) / a.min_ratio
        res["relative_drift"] = drift
        bad = bad or any(v > 0.2 for v in drift.values())
    return res, (rows, SCAN_COLUMNS), EXIT_VIOLATION if bad else EXIT_OK


SWEEP_COLUMNS = ["tau_u", "tau_v", "status", "h", "residual", "n_indices", "truncation_bound", "word_length"]


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _sweep_cell(args, u, v):
    tau = TauParam(u, v)
    idx = smallest_indices(tau, int(args.truncation))
    try:
        est = bowen_root(tau, idx, word_length=args.depth, tol=args.tol)
    except BracketError:
        # too few indices for psi to exceed 1 at t = 1
        return {"tau_u": u, "tau_v": v, "status": "no_bracket", "h": "", "residual": "",
                "n_indices": len(idx), "truncation_bound": idx.bound, "word_length": args.depth}
    return {
        "tau_u": u,
        "tau_v": v,
        "status": "ok",
        "h": est.h,
        "residual": est.residual,
        "n_indices": est.n_indices,
        "truncation_bound": est.truncation_bound,
        "word_length": est.word_length,
    }


def cmd_sweep(args):
    us, vs = _parse_floats(args.u_values), _parse_floats(args.v_values)
    if args.truncation < 1 or args.truncation != int(args.truncation):
        raise UsageError("--truncation is a positive index count")
    cells = [(u, v) for u in us for v in vs]
    for u, v in cells:
        try:
            TauParam(u, v)
        except DomainError as exc:
            raise UsageError(str(exc)) from None
    with ThreadPoolExecutor(max_workers=min(thread_cap(), max(len(cells), 1))) as pool:
        rows = list(pool.map(lambda uv: _sweep_cell(args, *uv), cells))
    hs = [r["h"] for r in rows if r["status"] == "ok"]
    res = {
        "cells": len(rows),
        "unbracketed": len(rows) - len(hs),
        "h_min": min(hs) if hs else None,
        "h_max": max(hs) if hs else None,
    }
    return res, (rows, SWEEP_COLUMNS), EXIT_OK


COMMANDS = {
    "dim": cmd_dim,
    "render": cmd_render,
    "audit-lattice": cmd_audit_lattice,
    "audit-geometry": cmd_audit_geometry,
    "audit-cifs": cmd_audit_cifs,
    "measure-scan": cmd_measure_scan,
    "constants": cmd_constants,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--tau-u", type=float, default=0.0, help="real part of tau (default 0)")
    common.add_argument("--tau-v", type=float, default=1.0, help="imaginary part of tau (default 1)")
    common.add_argument("--truncation", type=float, default=2000, help="number of smallest indices kept (default 2000)")
    common.add_argument("--depth", type=int, default=2, help="word length (default 2)")
    common.add_argument("--tol", type=float, default=1e-9, help="root tolerance on |psi - 1| (default 1e-9)")
    common.add_argument("--out", default=None, help="output file; see the command description")
    common.add_argument("--seed", type=int, default=0, help="seed for sampling audits (default 0)")
    common.add_argument("--no-timing", action="store_true", help="report wall_time_s as null for byte-identical output")

    p = _Parser(prog="cifs-lab", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("dim", parents=[common], help="Bowen root of a truncation (JSON)")
    r = sub.add_parser("render", parents=[common], help="PGM image of phi_w(0) over all words of length --depth")
    r.add_argument("--width", type=int, default=512, help="image side in pixels, >= 64 (default 512)")
    a = sub.add_parser("audit-lattice", parents=[common], help="quarter-disk, annulus and lens counting bounds")
    a.add_argument("--r-max", type=float, default=300, help="largest radius audited (default 300)")
    a.add_argument("--trials", type=int, default=100, help="random lens trials (default 100)")
    g = sub.add_parser("audit-geometry", parents=[common], help="inversion formula and inclusion constructions")
    g.add_argument("--samples", type=int, default=10_000, help="samples per check (default 10000)")
    c = sub.add_parser("audit-cifs", parents=[common], help="open set condition, contraction and distortion")
    c.add_argument("--bound", type=float, default=20.0, help="audit indices with |b| <= bound (default 20)")
    c.add_argument("--samples", type=int, default=200_000, help="word sample size for long words (default 200000)")
    s = sub.add_parser("measure-scan", parents=[common], help="ball-mass ratio scan (CSV rows, JSON summary)")
    s.add_argument("--level", type=int, default=2, help="measure level (default 2)")
    s.add_argument("--r-per-b", type=int, default=16, help="log-spaced radii per index (default 16)")
    s.add_argument("--n-small", type=int, default=32, help="smallest indices in the sample (default 32)")
    s.add_argument("--n-random", type=int, default=32, help="random extra indices in the sample (default 32)")
    s.add_argument("--h", type=float, default=None, help="exponent for the measure (default: Bowen root)")
    s.add_argument("--check-stability", action="store_true", help="also scan one level lower; >20%% drift is a violation")
    w = sub.add_parser("sweep", parents=[common], help="Bowen roots over a grid of tau (CSV)")
    w.add_argument("--u-values", default="0,0.5,1", help="comma-separated tau_u values (default 0,0.5,1)")
    w.add_argument("--v-values", default="1,1.5,2", help="comma-separated tau_v values (default 1,1.5,2)")
    sub.add_parser("constants", parents=[common], help="empirical inputs and the packing constant chain")
    return p


def _validate(args):
    if args.depth < 1:
        raise UsageError("--depth must be >= 1")
    if not args.tol > 0:
        raise UsageError("--tol must be positive")
    if args.seed < 0:
        raise UsageError("--seed must be >= 0")


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    start = time.perf_counter()
    try:
        _validate(args)
        results, table, code = COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"cifs-lab: usage error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (DomainError, FitError, RuntimeError, ValueError, OSError) as exc:
        print(f"cifs-lab: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    config = {k: v for k, v in vars(args).items() if k not in ("no_timing",)}
    report = {
        "command": args.command,
        "config": config,
        "results": results,
        "seed": args.seed,
        "wall_time_s": None if args.no_timing else time.perf_counter() - start,
        "provenance": {"cifs_lab": __version__, "numpy": np.__version__},
    }
    text = dump_report(report)
    try:
        if table:
            rows, columns = table
            if args.out:
                write_text(args.out, csv_text(rows, columns))
            sys.stdout.write(text)
        elif args.out and args.command != "render":
            write_text(args.out, text)
        else:
            sys.stdout.write(text)
    except OSError as exc:
        print(f"cifs-lab: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
