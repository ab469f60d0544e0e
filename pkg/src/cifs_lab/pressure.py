"""Truncated partition sums ``psi^n(t) = sum_{|w| = n} ||phi_w'||_X^t`` and their root in ``t``.

Sup norms come from the closed form in :func:`cifs_lab.cifs.derivative_range`,
so on a finite truncation the sums are exact up to floating point; they are
accumulated with ``math.fsum``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cifs import (
    MATERIALIZE_CAP,
    STREAM_CAP,
    SystemConfig,
    all_words,
    distortion_audit,
    resolve_indices,
    word_blocks,
)
from .errors import BracketError, DomainError
from .geometry import TauParam
from .lattice import IndexSet, enumerate_indices

DIVERGENCE_TOL = 1e-3
# increments shrinking by at least this factor per grid step count as geometric decay
DECAY_RATIO = 0.9


@dataclass(frozen=True)
class PressureSample:
    tau: TauParam
    t: float
    word_length: int
    truncation_bound: float
    value: float


@dataclass(frozen=True)
class DimensionEstimate:
    h: float
    bracket: tuple[float, float]
    word_length: int
    truncation_bound: float
    tolerance: float
    residual: float
    n_indices: int = 0
    iterations: int = 0


@dataclass(frozen=True)
class ThetaVerdict:
    verdict: str  # "diverges", "converges" or "indeterminate"
    t: float
    bounds: tuple
    partial_sums: tuple
    increments: tuple
    ratios: tuple


@dataclass(frozen=True)
class SubmultiplicativityReport:
    t: float
    m: int
    n: int
    psi_sum: float  # psi^{m+n}
    product: float  # psi^m psi^n
    lower: float  # k^{-2t} psi^m psi^n
    k_hat: float

    @property
    def upper_slack(self) -> float:
        return (self.product - self.psi_sum) / self.product

    @property
    def lower_slack(self) -> float:
        return (self.psi_sum - self.lower) / self.psi_sum

    @property
    def upper_ok(self) -> bool:
        return self.upper_slack >= -1e-9

    @property
    def lower_ok(self) -> bool:
        return self.lower_slack >= -1e-9


def sup_norms(indices: IndexSet, word_length: int, cap: int = MATERIALIZE_CAP) -> np.ndarray:
    """``||phi_w'||_X`` for every word of the given length, lexicographic order."""
    return all_words(indices.values, word_length, cap=cap).derivative_range()[1]


def _fsum_pow(norms: np.ndarray, t: float) -> float:
    if t == 0:
        return float(len(norms))
    return math.fsum(np.power(norms, t).tolist())


def psi(tau: TauParam, t: float, truncation, word_length: int = 1, cap: int = STREAM_CAP) -> PressureSample:
    """``psi^n(t)`` on a truncation (an :class:`IndexSet`, config, or modulus bound)."""
    if t < 0:
        raise DomainError("t must be >= 0")
    idx = resolve_indices(tau, truncation)
    parts = []
    for block in word_blocks(idx.values, word_length, cap=cap):
        parts.append(_fsum_pow(block.derivative_range()[1], t))
    return PressureSample(tau, float(t), word_length, idx.bound, math.fsum(parts))


class PressureCurve:
    """``t -> psi^n(t)`` with the sup norms of one truncation cached."""

    def __init__(self, tau: TauParam, truncation, word_length: int = 1, cap: int = MATERIALIZE_CAP):
        self.tau = tau
        self.indices = resolve_indices(tau, truncation)
        self.word_length = word_length
        self.norms = sup_norms(self.indices, word_length, cap=cap)

    def __call__(self, t: float) -> float:
        return _fsum_pow(self.norms, t)


def theta_probe(
    tau: TauParam, t: float, bound_grid, tol: float = DIVERGENCE_TOL
) -> ThetaVerdict:
    """Heuristic finiteness verdict for ``psi^1(t)`` from partial sums over growing bounds.

    Best read on a geometric grid (e.g. successive doublings).  Converges when
    the last two increments each shrink by at least ``DECAY_RATIO``; diverges
    when the last increment exceeds ``tol`` without such decay; otherwise the
    verdict is ``"indeterminate"``.
    """
    grid = [float(b) for b in bound_grid]
    if any(b2 <= b1 for b1, b2 in zip(grid, grid[1:])):
        raise DomainError("bound_grid must be increasing")
    full = enumerate_indices(tau, grid[-1])
    norms = sup_norms(full, 1)
    moduli = full.moduli  # already sorted ascending
    cuts = np.searchsorted(moduli, np.asarray(grid) * (1 + 1e-12), side="right")
    segs, prev = [], 0
    for c in cuts:
        segs.append(_fsum_pow(norms[prev:c], t))
        prev = c
    partial = np.cumsum(segs).tolist()
    incr = segs[1:]
    ratios = [b / a if a > 0 else math.inf for a, b in zip(incr, incr[1:])]
    verdict = "indeterminate"
    if len(ratios) >= 2 and all(0 <= r <= DECAY_RATIO for r in ratios[-2:]):
        verdict = "converges"
    elif incr and incr[-1] > tol:
        verdict = "diverges"
    return ThetaVerdict(verdict, float(t), tuple(grid), tuple(partial), tuple(incr), tuple(ratios))


def bowen_root(
    tau: TauParam,
    truncation,
    word_length: int = 1,
    tol: float = 1e-9,
    bracket: tuple[float, float] = (1.0, 2.0),
    max_iter: int = 200,
) -> DimensionEstimate:
    """Bisection root of ``psi^n(t) = 1`` on a finite truncation."""
    if not tol > 0:
        raise DomainError("tol must be positive")
    curve = truncation if isinstance(truncation, PressureCurve) else PressureCurve(tau, truncation, word_length)
    lo, hi = bracket
    f_lo, f_hi = curve(lo) - 1.0, curve(hi) - 1.0
    if not (f_lo > 0 > f_hi):
        raise BracketError(
            f"psi^{curve.word_length} - 1 does not change sign on [{lo}, {hi}]: "
            f"{f_lo + 1:.6g}, {f_hi + 1:.6g} (truncation too small?)"
        )
    mid, f_mid, it = lo, f_lo, 0
    for it in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        f_mid = curve(mid) - 1.0
        if abs(f_mid) <= tol or hi - lo <= 4 * np.finfo(float).eps:
            break
        if f_mid > 0:
            lo = mid
        else:
            hi = mid
    return DimensionEstimate(
        h=mid,
        bracket=(lo, hi),
        word_length=curve.word_length,
        truncation_bound=curve.indices.bound,
        tolerance=tol,
        residual=abs(f_mid),
        n_indices=len(curve.indices),
        iterations=it,
    )


def submultiplicativity_audit(
    tau: TauParam,
    t: float,
    truncation,
    m: int,
    n: int,
    k_hat: float | None = None,
) -> SubmultiplicativityReport:
    """Compare ``psi^{m+n}`` against ``psi^m psi^n`` and ``k^{-2t} psi^m psi^n``."""
    idx = resolve_indices(tau, truncation)
    if k_hat is None:
        cfg = SystemConfig(tau, idx.bound, max_word_length=max(m, n))
        k_hat = distortion_audit(cfg).k_hat
    both = psi(tau, t, idx, m + n).value
    pm = psi(tau, t, idx, m).value
    pn = pm if n == m else psi(tau, t, idx, n).value
    prod = pm * pn
    return SubmultiplicativityReport(t, m, n, both, prod, k_hat ** (-2 * t) * prod, k_hat)
