"""Enumeration and exact counting of the index lattice ``I_tau = {m + n tau : m, n >= 1}``.

All counts are brute force over a bounding box of ``(m, n)``.  Squared moduli
are evaluated in floating point; a point whose squared modulus lies within a
relative guard band of a region boundary is logged, since its classification
depends on rounding.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DomainError, EmptyIndexSetError, EstimationError
from .geometry import TauParam, spectral_data

log = logging.getLogger(__name__)

GUARD = 1e-9


class LatticeIndex(NamedTuple):
    m: int
    n: int

    def value(self, tau: TauParam) -> complex:
        return complex(self.m + self.n * tau.u, self.n * tau.v)


@dataclass(frozen=True)
class IndexSet:
    """A finite truncation of ``I_tau``, stored as parallel integer arrays.

    Ordered by ``(|b|, m, n)``.
    """

    tau: TauParam
    m: np.ndarray
    n: np.ndarray
    bound: float
    values: np.ndarray = field(repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.m)

    def __iter__(self):
        for m, n in zip(self.m.tolist(), self.n.tolist()):
            yield LatticeIndex(m, n)

    def __getitem__(self, i: int) -> LatticeIndex:
        return LatticeIndex(int(self.m[i]), int(self.n[i]))

    @property
    def moduli(self) -> np.ndarray:
        return np.abs(self.values)

    def position(self, idx: LatticeIndex) -> int:
        hit = np.flatnonzero((self.m == idx.m) & (self.n == idx.n))
        if len(hit) == 0:
            raise KeyError(idx)
        return int(hit[0])


@dataclass(frozen=True)
class GrowthEstimate:
    q_hat: float
    c_hat: float
    fit_residual: float
    grid: np.ndarray = field(default=None, repr=False, compare=False)
    ratios: np.ndarray = field(default=None, repr=False, compare=False)


def lattice_values(tau: TauParam, m, n) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    n = np.asarray(n, dtype=float)
    return (m + tau.u * n) + 1j * (tau.v * n)


def _box(tau: TauParam, radius: float):
    """All (m, n) >= 1 with |m + n tau| <= radius lie in the returned grids."""
    n_max = max(int(math.floor(radius / tau.v)), 0)
    m_max = max(int(math.floor(radius)), 0)
    m, n = np.meshgrid(np.arange(1, m_max + 1), np.arange(1, n_max + 1), indexing="ij")
    return m.ravel(), n.ravel()


def _mod2(tau: TauParam, m, n) -> np.ndarray:
    x = m + tau.u * n
    y = tau.v * n
    return x * x + y * y


def _warn_band(mod2: np.ndarray, level: float, what: str) -> int:
    # exact ties are classified by the literal set definition; near misses are not
    gap = np.abs(mod2 - level)
    close = (gap > 0) & (gap <= GUARD * max(level, 1.0))
    k = int(np.count_nonzero(close))
    if k:
        log.warning("%d lattice point(s) within the guard band of %s", k, what)
    return k


def enumerate_indices(tau: TauParam, bound: float) -> IndexSet:
    """Every index with ``|m + n tau| <= bound``, ordered by ``(|b|, m, n)``."""
    if bound < abs(1 + tau.value):
        raise EmptyIndexSetError(
            f"bound {bound} is below the smallest lattice modulus |1+tau| = {abs(1 + tau.value)}"
        )
    m, n = _box(tau, bound)
    mod2 = _mod2(tau, m.astype(float), n.astype(float))
    _warn_band(mod2, bound * bound, f"|b| = {bound}")
    keep = mod2 <= bound * bound
    m, n, mod2 = m[keep], n[keep], mod2[keep]
    order = np.lexsort((n, m, mod2))
    m, n = m[order].astype(np.int64), n[order].astype(np.int64)
    return IndexSet(tau, m, n, float(bound), lattice_values(tau, m, n))


def smallest_indices(tau: TauParam, count: int) -> IndexSet:
    """The ``count`` smallest-modulus indices, widened to include modulus ties."""
    if count < 1:
        raise DomainError("count must be >= 1")
    # area of the lattice quadrant inside radius R is ~ pi R^2 / (4 v)
    radius = max(abs(1 + tau.value), math.sqrt(4.0 * tau.v * count / math.pi) + 2.0 + tau.u)
    while True:
        full = enumerate_indices(tau, radius)
        if len(full) >= count:
            break
        radius *= 1.5
    # widened by rounding so that enumerate_indices(tau, bound) returns the same set
    cut = float(full.moduli[count - 1]) * (1 + 1e-12)
    keep = full.moduli <= cut
    return IndexSet(tau, full.m[keep], full.n[keep], cut, full.values[keep])


def count_quarter_disk(r: float) -> int:
    """``#{(m, n) : m, n >= 1, m^2 + n^2 <= r^2}``, exact for integer or float ``r``."""
    if not r > 0:
        raise DomainError("r must be positive")
    r2 = r * r
    total = 0
    for m in range(1, int(math.floor(r)) + 1):
        rest = r2 - m * m
        if rest < 1:
            break
        k = math.isqrt(int(math.floor(rest)))
        total += k
    return total


def quarter_disk_bounds(r: float) -> tuple[float, float]:
    """The two-sided bound ``(r^2 - 7r + 7)/2 <= count <= r^2``, valid for ``r >= 6``."""
    return (r * r - 7 * r + 7) / 2.0, r * r


def count_annulus(tau: TauParam, r: float, outer: float | None = None) -> int:
    """Lattice points with ``r < |b| <= outer``; ``outer`` defaults to ``N_tau * r``."""
    if not r > 0:
        raise DomainError("r must be positive")
    if outer is None:
        outer = spectral_data(tau).n_tau * r
    m, n = _box(tau, outer)
    mod2 = _mod2(tau, m.astype(float), n.astype(float))
    _warn_band(mod2, r * r, "the inner circle")
    _warn_band(mod2, outer * outer, "the outer circle")
    return int(np.count_nonzero((mod2 > r * r) & (mod2 <= outer * outer)))


class AnnulusCounter:
    """Counts ``|I_tau ∩ D2(tau, R)|`` for many ``R`` from one sorted enumeration."""

    def __init__(self, tau: TauParam, r_max: float):
        self.tau = tau
        self.n_tau = spectral_data(tau).n_tau
        m, n = _box(tau, self.n_tau * r_max)
        self._mod2 = np.sort(_mod2(tau, m.astype(float), n.astype(float)))

    def __call__(self, r):
        """Count for a radius, or an array of counts for an array of radii."""
        rr = np.asarray(r, dtype=float)
        lo = np.searchsorted(self._mod2, rr * rr, side="right")
        hi = np.searchsorted(self._mod2, (self.n_tau * rr) ** 2, side="right")
        out = hi - lo
        return int(out) if out.ndim == 0 else out

    def critical_radii(self, r_min: float, r_max: float) -> np.ndarray:
        """Radii in ``[r_min, r_max]`` that realise every value of ``count(R) / R^2``.

        The count only changes where ``R`` or ``N_tau R`` crosses a lattice
        modulus, and ``count / R^2`` decreases between such crossings.  The
        crossings, the points just below them and ``r_max`` therefore attain
        (or approach to within rounding) the infimum over the whole interval.
        """
        mods = np.sqrt(self._mod2)
        events = np.concatenate([mods, mods / self.n_tau])
        events = np.concatenate([events, events * (1 - 1e-12), [r_min, r_max]])
        events = events[(events >= r_min) & (events <= r_max)]
        return np.unique(events)


def lens_points(tau: TauParam, w: complex, r_prime: float) -> np.ndarray:
    """Lattice points in the open lens ``B(0, |w|) ∩ B(w, r_prime)``."""
    w = complex(w)
    if not (abs(w) > r_prime > 0):
        raise DomainError(f"need |w| > r_prime > 0, got |w|={abs(w)}, r_prime={r_prime}")
    n_lo = max(1, int(math.floor((w.imag - r_prime) / tau.v)))
    n_hi = int(math.ceil((w.imag + r_prime) / tau.v))
    if n_hi < n_lo:
        return np.empty(0, dtype=complex)
    n = np.arange(n_lo, n_hi + 1)
    m_lo = max(1, int(math.floor(w.real - r_prime - tau.u * n_hi)))
    m_hi = int(math.ceil(w.real + r_prime - tau.u * n_lo))
    if m_hi < m_lo:
        return np.empty(0, dtype=complex)
    mm, nn = np.meshgrid(np.arange(m_lo, m_hi + 1), n, indexing="ij")
    b = lattice_values(tau, mm.ravel(), nn.ravel())
    d0 = b.real**2 + b.imag**2
    dw = np.abs(b - w) ** 2
    _warn_band(d0, abs(w) ** 2, "the lens arc |b| = |w|")
    _warn_band(dw, r_prime**2, "the lens arc |b - w| = R'")
    return b[(d0 < abs(w) ** 2) & (dw < r_prime**2)]


def count_lens(tau: TauParam, w: complex, r_prime: float) -> int:
    return int(len(lens_points(tau, w, r_prime)))


def lattice_cone_angle(tau: TauParam) -> float:
    """Opening angle of the cone ``{s + t tau : s, t > 0}`` that holds ``I_tau``.

    The lens bound needs ``w`` inside this cone: outside it the lens can miss
    the lattice entirely.
    """
    return math.atan2(tau.v, tau.u)


def lens_bound(tau: TauParam, r_prime: float) -> float:
    """The quadratic lower bound ``r_prime^2 / (32 lambda2)`` on lens counts."""
    return r_prime * r_prime / (32.0 * spectral_data(tau).lambda2)


def lens_threshold(tau: TauParam) -> float:
    """Radius ``34 sqrt(lambda2)`` from which the lens bound applies."""
    return 34.0 * math.sqrt(spectral_data(tau).lambda2)


def fit_growth_constants(tau: TauParam, r_grid) -> GrowthEstimate:
    """Empirical constants ``(Q, C)`` with ``count_annulus(R) > Q R^2`` for grid ``R >= C``.

    ``c_hat`` is the first grid value from which every ratio ``count/R^2`` is
    positive and the running minimum over the remaining grid varies by less
    than 50%.  ``q_hat`` is a hair below that minimum so the inequality is
    strict on the audited grid.
    """
    grid = np.unique(np.asarray(r_grid, dtype=float))
    if len(grid) == 0 or grid[0] < 1:
        raise EstimationError("grid must be nonempty with min >= 1")
    if len(grid) < 3:
        raise EstimationError("need at least 3 grid values to judge stability")
    counter = AnnulusCounter(tau, float(grid[-1]))
    counts = counter(grid).astype(float)
    ratios = counts / grid**2
    # min of each tail ratios[i:]
    tail_min = np.minimum.accumulate(ratios[::-1])[::-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        stable = (tail_min > 0) & ((ratios - tail_min) / ratios < 0.5)
    stable[len(grid) - 2 :] = False
    if not stable.any():
        raise EstimationError("count/R^2 never stabilises on the grid")
    start = int(np.argmax(stable))
    tail = ratios[start:]
    q_hat = float(tail.min()) * (1.0 - 1e-9)
    # quadratic fit through the origin on the stable part
    coef = float(np.dot(counts[start:], grid[start:] ** 2) / np.dot(grid[start:] ** 2, grid[start:] ** 2))
    resid = float(np.max(np.abs(tail - coef) / coef))
    return GrowthEstimate(q_hat, float(grid[start]), resid, grid, ratios)
