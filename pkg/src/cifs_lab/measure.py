"""Cylinder approximation of the ``h``-conformal measure and the ball-mass lower bound scan.

A level-``k`` cylinder ``phi_w(X)`` carries three weights, all divided by the
same level normaliser ``Z_k = sum_{|v| = k} |phi_v'(0)|^h``:

* ``mid  = |phi_w'(0)|^h / Z_k``
* ``low  = (min_X |phi_w'|)^h / Z_k``
* ``high = (max_X |phi_w'|)^h / Z_k``

Only the normalisers and the level-1 arrays are stored.  Deeper cylinders are
generated on demand, and only below level-1 cylinders that straddle a
query ball.

Ball masses walk the cylinder tree rooted at ``X`` (weight 1).  A cylinder inside
the ball contributes its ``low``; one disjoint from it contributes nothing; a
straddling cylinder is refined, with its children's total clipped to its own
``high``.  Because level-``k`` weights do not depend on the depth of the
measure, raising the level can only raise the lower bound and lower the
upper bound.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .cifs import (
    STREAM_CAP,
    X_CENTER,
    X_RADIUS,
    WordArrays,
    _extend,
    _generators,
    compose,
    derivative_range,
    image_disk,
    resolve_indices,
    word_blocks,
    words_from_letters,
    Word,
)
from .errors import DomainError, FitError
from .geometry import CONTAIN_TOL, Disk, TauParam, invert_disk, spectral_data, disk_contains
from .lattice import IndexSet, LatticeIndex, lattice_values, _box, _mod2

log = logging.getLogger(__name__)

CHILD_BLOCK = 2_000_000


@dataclass(frozen=True)
class BallMassEstimate:
    lower: float
    upper: float
    contained_words: int
    intersecting_words: int


@dataclass(frozen=True)
class CylinderEntry:
    word: Word
    weight_low: float
    weight_mid: float
    weight_high: float
    image: Disk


@dataclass
class CylinderMeasure:
    tau: TauParam
    h: float
    level: int
    indices: IndexSet
    normalizers: tuple  # Z_1 .. Z_level
    truncation_bound: float = field(init=False)

    def __post_init__(self):
        self.truncation_bound = self.indices.bound
        gens = _generators(self.indices.values)
        self._gens = gens
        self._level1 = self._weights(gens, 1)

    @property
    def values(self) -> np.ndarray:
        return self.indices.values

    def _weights(self, words: WordArrays, depth: int):
        """(centers, radii, low, mid, high) for words of the given depth."""
        z = self.normalizers[depth - 1]
        lo, hi = words.derivative_range()
        centers, radii = words.image_disks()
        h = self.h
        return (
            centers,
            radii,
            lo**h / z,
            words.derivative_at_zero() ** h / z,
            hi**h / z,
        )

    def entry(self, word: Word) -> CylinderEntry:
        k = len(word)
        if k > self.level:
            raise DomainError(f"word of length {k} is deeper than the measure level {self.level}")
        mp = compose(word)
        lo, hi = derivative_range(mp)
        z = self.normalizers[k - 1]
        h = self.h
        return CylinderEntry(word, lo**h / z, float(mp.derivative(0)) ** h / z, hi**h / z, image_disk(mp))

    def leaves(self, depth: int | None = None, cap: int = 25_000_000):
        """Arrays for every cylinder at ``depth`` (default: the measure level)."""
        depth = self.level if depth is None else depth
        blocks = list(word_blocks(self.values, depth, cap=cap))
        parts = [self._weights(bk, depth) for bk in blocks]
        names = ("centers", "radii", "low", "mid", "high")
        return {n: np.concatenate([p[i] for p in parts]) for i, n in enumerate(names)}

    def entries(self, cap: int = 100_000) -> list[CylinderEntry]:
        """Leaf cylinders as records; meant for small measures."""
        n = len(self.values)
        if n**self.level > cap:
            raise DomainError(f"{n}^{self.level} entries exceeds cap {cap}; use leaves()")
        leaves = self.leaves()
        out = []
        for flat in range(n**self.level):
            letters, rest = [], flat
            for _ in range(self.level):
                rest, r = divmod(rest, n)
                letters.append(self.indices[r])
            out.append(
                CylinderEntry(
                    Word(self.tau, tuple(reversed(letters))),
                    float(leaves["low"][flat]),
                    float(leaves["mid"][flat]),
                    float(leaves["high"][flat]),
                    Disk(complex(leaves["centers"][flat]), float(leaves["radii"][flat])),
                )
            )
        return out


def _level_normalizer(values: np.ndarray, h: float, depth: int, cap: int) -> float:
    parts = []
    for block in word_blocks(values, depth, cap=cap):
        parts.append(float(np.sum(block.derivative_at_zero() ** h)))
    return math.fsum(parts)


def build_measure(tau: TauParam, h: float, truncation, level: int = 1, cap: int = STREAM_CAP) -> CylinderMeasure:
    """Cylinder weights of level ``1..level`` over a truncation, each level summing to 1."""
    if not 1 < h < 2:
        raise DomainError(f"h must lie in (1, 2), got {h}")
    if level < 1:
        raise DomainError("level must be >= 1")
    idx = resolve_indices(tau, truncation)
    zs = tuple(_level_normalizer(idx.values, h, k, cap) for k in range(1, level + 1))
    return CylinderMeasure(tau, float(h), level, idx, zs)


def _classify(centers, radii, ball: Disk):
    dist = np.abs(centers - ball.center)
    contained = dist + radii <= ball.radius + CONTAIN_TOL
    touching = dist <= ball.radius + radii + CONTAIN_TOL
    return contained, touching & ~contained


def _subset(words: WordArrays, mask: np.ndarray) -> WordArrays:
    return WordArrays(0, words.a[mask], words.b[mask], words.c[mask], words.d[mask], words.det[mask])


def _walk(measure: CylinderMeasure, words: WordArrays, depth: int, ball: Disk, weights=None, direct=False):
    """Per-node (lower, upper) contributions plus (contained, intersecting) counts."""
    centers, radii, low, _, high = weights if weights is not None else measure._weights(words, depth)
    contained, partial = _classify(centers, radii, ball)
    lower = np.where(contained, low, 0.0)
    upper = np.where(contained | partial, high, 0.0)
    n_in = int(contained.sum())
    n_touch = int(partial.sum()) if depth == measure.level else 0
    n_touch += n_in
    use_preimage = depth == 1 and not direct and _preimage_of_ball(0j, ball) is not None
    if use_preimage and measure.level >= 2:
        for p in np.flatnonzero(partial).tolist():
            k_lo, k_hi, c_in, c_touch = _children_by_preimage(measure, p, ball)
            lower[p] = min(k_lo, high[p])
            upper[p] = min(k_hi, high[p])
            n_in += c_in
            n_touch += c_touch
    elif depth < measure.level and partial.any():
        pos = np.flatnonzero(partial)
        parents = _subset(words, partial)
        n = len(measure.values)
        s_lo = np.empty(len(pos))
        s_hi = np.empty(len(pos))
        step = max(1, CHILD_BLOCK // n)
        for a in range(0, len(pos), step):
            b = min(a + step, len(pos))
            chunk = WordArrays(0, parents.a[a:b], parents.b[a:b], parents.c[a:b], parents.d[a:b], parents.det[a:b])
            kids = _extend(chunk, measure.values, 0)
            k_lo, k_hi, c_in, c_touch = _walk(measure, kids, depth + 1, ball, direct=direct)
            s_lo[a:b] = k_lo.reshape(b - a, n).sum(axis=1)
            s_hi[a:b] = k_hi.reshape(b - a, n).sum(axis=1)
            n_in += c_in
            n_touch += c_touch
        lower[pos] = np.minimum(s_lo, high[pos])
        upper[pos] = np.minimum(s_hi, high[pos])
    return lower, upper, n_in, n_touch


def _preimage_of_ball(beta: complex, ball: Disk):
    """``1/ball - beta`` as ``(center, radius, exterior)``; ``None`` if the circle passes near 0."""
    x, r = ball.center, ball.radius
    denom = abs(x) ** 2 - r * r
    if abs(denom) <= 1e-12 * max(abs(x) ** 2, r * r):
        return None
    return x.conjugate() / denom - beta, r / abs(denom), denom < 0


def _children_by_preimage(measure: CylinderMeasure, pos: int, ball: Disk):
    """Lower/upper sums over the depth-2 children of level-1 word ``pos``.

    A child ``phi_p(phi_b(X))`` lies in (or meets) the ball exactly when
    ``phi_b(X)`` lies in (or meets) ``phi_p^{-1}(ball)``, so the children are
    classified against the stored level-1 disks before any child is built.
    """
    c, rad, exterior = _preimage_of_ball(complex(measure.values[pos]), ball)
    centers, radii = measure._level1[0], measure._level1[1]
    dist = np.abs(centers - c)
    if exterior:
        contained = dist - radii >= rad - CONTAIN_TOL
        touching = dist + radii >= rad - CONTAIN_TOL
    else:
        contained = dist + radii <= rad + CONTAIN_TOL
        touching = dist <= rad + radii + CONTAIN_TOL
    sel = np.flatnonzero(touching)
    if len(sel) == 0:
        return 0.0, 0.0, 0, 0
    g = measure._gens
    parent = WordArrays(0, g.a[pos : pos + 1], g.b[pos : pos + 1], g.c[pos : pos + 1], g.d[pos : pos + 1], g.det[pos : pos + 1])
    kids = _extend(parent, measure.values[sel], 0)
    _, _, low, _, high = measure._weights(kids, 2)
    inside = contained[sel]
    part = ~inside
    lo = np.where(inside, low, 0.0)
    hi = high.copy()
    n_in = int(inside.sum())
    n_touch = len(sel) if measure.level == 2 else n_in
    if measure.level > 2 and part.any():
        sub = _subset(kids, part)
        s_lo, s_hi, c_in, c_touch = _walk(measure, sub, 2, ball)
        lo[part] = s_lo
        hi[part] = s_hi
        n_in += c_in
        n_touch += c_touch
    return math.fsum(lo.tolist()), math.fsum(hi.tolist()), n_in, n_touch


def ball_mass(measure: CylinderMeasure, ball: Disk, direct: bool = False) -> BallMassEstimate:
    """Lower and upper bounds on the measure of ``ball`` from the cylinder tree.

    ``direct=True`` builds every child of a straddling cylinder instead of
    classifying level-2 children through the preimage of the ball; the two
    agree up to the containment tolerance and the direct path is much slower.
    """
    x = Disk(X_CENTER, X_RADIUS)
    if disk_contains(ball, x):
        return BallMassEstimate(1.0, 1.0, 1, 1)
    if abs(ball.center - X_CENTER) > ball.radius + X_RADIUS + CONTAIN_TOL:
        return BallMassEstimate(0.0, 0.0, 0, 0)
    lower, upper, n_in, n_touch = _walk(measure, measure._gens, 1, ball, measure._level1, direct=direct)
    lo = min(math.fsum(lower.tolist()), 1.0)
    hi = min(math.fsum(upper.tolist()), 1.0)
    return BallMassEstimate(lo, hi, n_in, n_touch)


def refinement_ratios(measure: CylinderMeasure, depth: int = 2) -> np.ndarray:
    """``sum(mid of children) / mid(parent)`` for every cylinder at ``depth - 1``."""
    if not 2 <= depth <= measure.level:
        raise DomainError(f"depth must lie in [2, {measure.level}]")
    n = len(measure.values)
    out = []
    for block in word_blocks(measure.values, depth):
        kids_mid = measure._weights(block, depth)[3].reshape(-1, n).sum(axis=1)
        # the block's parents are the prefixes it was extended from
        parents = block.start // n + np.arange(len(kids_mid))
        out.append((parents, kids_mid))
    parent_mid = _parent_mid(measure, depth - 1)
    ratios = np.empty(len(parent_mid))
    for parents, kids_mid in out:
        ratios[parents] = kids_mid / parent_mid[parents]
    return ratios


def _parent_mid(measure: CylinderMeasure, depth: int) -> np.ndarray:
    return np.concatenate([measure._weights(bk, depth)[3] for bk in word_blocks(measure.values, depth)])


# ------------------------------------------------------------ proof constants


@dataclass(frozen=True)
class PackingConstants:
    k: float
    r0: float
    xi: float
    gamma: float
    r_big0: float
    l_prime: float
    l: float
    q: float
    q_prime: float
    c: float
    c_prime: float
    h: float
    n_tau: float


def _lens_side_condition(c_prime: float, lam2: float) -> bool:
    return (c_prime - 2 * math.sqrt(2 * lam2)) ** 2 / (16 * lam2) - c_prime**2 / (32 * lam2) > 0


def packing_constants(tau: TauParam, k: float, h: float, q: float, c: float) -> PackingConstants:
    """Evaluate the constant chain of the packing-measure argument."""
    if not (k >= 1 and h > 0 and q > 0 and c > 0):
        raise DomainError(f"need k >= 1 and h, q, c > 0; got k={k}, h={h}, q={q}, c={c}")
    sd = spectral_data(tau)
    lam2, n_tau = sd.lambda2, sd.n_tau
    q_prime = 1.0 / (32.0 * lam2)
    c_prime = 34.0 * math.sqrt(lam2)
    if not _lens_side_condition(c_prime, lam2):
        # positive beyond the larger root of the quadratic in R'
        c_prime = 2 * math.sqrt(2 * lam2) / (1 - 1 / math.sqrt(2)) * (1 + 1e-9)
    r_big0 = max(c_prime, 2.0)
    r0 = min(1.0 / 8.0, k / c)
    l_prime = min(q_prime / 4.0, (r_big0 + 1.0) ** -2)
    l_val = min(
        l_prime * (8 * k) ** (-h),
        q * k ** (2 - 3 * h) * n_tau ** (-2 * h) * 2 ** (2 - 2 * h),
    )
    return PackingConstants(
        k=k, r0=r0, xi=r0 * r0, gamma=k, r_big0=r_big0, l_prime=l_prime, l=l_val,
        q=q, q_prime=q_prime, c=c, c_prime=c_prime, h=h, n_tau=n_tau,
    )


# ---------------------------------------------------------------- index sets


@dataclass(frozen=True)
class Case1Sets:
    by_images: tuple  # a with phi_a(X) inside B(x, r)
    by_inversion: tuple  # a with B(a + 1/2, 1/2) inside B(w, R)
    near: tuple  # the first set restricted to |a| <= |w|
    w: complex
    big_r: float

    @property
    def agree(self) -> bool:
        return self.by_images == self.by_inversion


def _points_near(tau: TauParam, center: complex, radius: float, limit: int = 50_000_000):
    n_lo = max(1, int(math.floor((center.imag - radius) / tau.v)))
    n_hi = int(math.ceil((center.imag + radius) / tau.v))
    m_lo = max(1, int(math.floor(center.real - radius - tau.u * n_hi)))
    m_hi = int(math.ceil(center.real + radius - tau.u * n_lo))
    if n_hi < n_lo or m_hi < m_lo:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    if (n_hi - n_lo + 1) * (m_hi - m_lo + 1) > limit:
        raise DomainError("search box too large; radius too big for exhaustive enumeration")
    m, n = np.meshgrid(np.arange(m_lo, m_hi + 1), np.arange(n_lo, n_hi + 1), indexing="ij")
    return m.ravel(), n.ravel()


def index_set_case1(tau: TauParam, x: complex, r: float) -> Case1Sets:
    """``{a : phi_a(X) ⊂ B(x, r)}`` computed directly and through the inverted ball."""
    x = complex(x)
    if not 0 < r < abs(x):
        raise DomainError(f"need 0 < r < |x|, got r={r}, |x|={abs(x)}")
    inv = invert_disk(Disk(x, r))
    w, big_r = inv.center, inv.radius
    m, n = _points_near(tau, w, big_r)
    a = lattice_values(tau, m, n)
    shifted = a + 0.5
    # route 1: exact image disks phi_a(X) = 1 / B(a + 1/2, 1/2)
    x2 = np.abs(shifted) ** 2
    img_c = np.conj(shifted) / (x2 - 0.25)
    img_r = 0.5 / (x2 - 0.25)
    route1 = np.abs(img_c - x) + img_r <= r + CONTAIN_TOL
    # route 2: B(a + 1/2, 1/2) inside B(w, R)
    route2 = np.abs(shifted - w) + 0.5 <= big_r + CONTAIN_TOL

    def pack(mask):
        sel = np.flatnonzero(mask)
        order = sel[np.lexsort((n[sel], m[sel], np.abs(a[sel])))]
        return tuple(LatticeIndex(int(m[i]), int(n[i])) for i in order)

    near = route1 & (np.abs(a) <= abs(w))
    return Case1Sets(pack(route1), pack(route2), pack(near), w, big_r)


@dataclass(frozen=True)
class Case3Set:
    indices: tuple
    r_bar: float
    k: float
    inner: float  # K / r_bar
    outer: float  # N_tau K / r_bar
    values: np.ndarray = field(repr=False, compare=False)


def index_set_case3(tau: TauParam, r_bar: float, k: float) -> Case3Set:
    """``{a : r_bar / N_tau <= K/|a| < r_bar}``, i.e. the annulus ``K/r_bar < |a| <= N_tau K/r_bar``."""
    if not (r_bar > 0 and k >= 1):
        raise DomainError("need r_bar > 0 and k >= 1")
    n_tau = spectral_data(tau).n_tau
    inner, outer = k / r_bar, n_tau * k / r_bar
    m, n = _box(tau, outer)
    mf, nf = m.astype(float), n.astype(float)
    # membership written literally in terms of K|a|^{-1}
    inv = k / np.sqrt(_mod2(tau, mf, nf))
    keep = (r_bar / n_tau <= inv) & (inv < r_bar)
    m, n = m[keep], n[keep]
    vals = lattice_values(tau, m, n)
    order = np.lexsort((n, m, np.abs(vals)))
    return Case3Set(
        tuple(LatticeIndex(int(m[i]), int(n[i])) for i in order),
        r_bar, k, inner, outer, vals[order],
    )


# ------------------------------------------------------------------- scans


@dataclass(frozen=True)
class CaseReport:
    case_id: int
    scanned: int
    min_ratio: float | None
    witness: tuple | None  # (LatticeIndex, r)
    below_l: int = 0


@dataclass
class ScanResult:
    h: float
    level: int
    constants: PackingConstants
    cases: list
    rows: list
    skipped: list


def classify_case(x_abs: float, r: float) -> int:
    if r <= x_abs / 2:
        return 1
    if r <= 2 * x_abs:
        return 2
    return 3


def default_b_sample(indices: IndexSet, n_small: int = 32, n_random: int = 32, seed: int = 0) -> list[LatticeIndex]:
    """The smallest-modulus indices plus a seeded random draw from the rest."""
    k = min(n_small, len(indices))
    picks = list(range(k))
    rest = np.arange(k, len(indices))
    if len(rest) and n_random > 0:
        rng = np.random.default_rng(seed)
        extra = rng.choice(rest, size=min(n_random, len(rest)), replace=False)
        picks += sorted(int(i) for i in extra)
    return [indices[i] for i in picks]


def claim_star_scan(
    tau: TauParam,
    measure: CylinderMeasure,
    constants: PackingConstants,
    b_sample=None,
    r_per_b: int = 16,
    seed: int = 0,
) -> ScanResult:
    """Lower-mass ratios ``m(B(1/b, r)) / r^h`` over ``gamma diam phi_b(X) <= r <= xi``."""
    if b_sample is None:
        b_sample = default_b_sample(measure.indices, seed=seed)
    if not b_sample:
        raise DomainError("b_sample is empty")
    h = measure.h
    rows, skipped = [], []
    for idx in b_sample:
        b = LatticeIndex(*idx).value(tau)
        diam = 2.0 * (0.5 / (abs(b + 0.5) ** 2 - 0.25))
        r_lo, r_hi = constants.gamma * diam, constants.xi
        if r_lo > r_hi:
            log.info("skipping b=%s: gamma*diam=%.3g exceeds xi=%.3g", idx, r_lo, r_hi)
            skipped.append(LatticeIndex(*idx))
            continue
        x = 1.0 / b
        for r in np.geomspace(r_lo, r_hi, r_per_b):
            r = float(r)
            est = ball_mass(measure, Disk(x, r))
            rows.append(
                {
                    "m": idx[0],
                    "n": idx[1],
                    "r": r,
                    "case": classify_case(abs(x), r),
                    "lower": est.lower,
                    "upper": est.upper,
                    "ratio": est.lower / r**h,
                }
            )
    cases = []
    for cid in (1, 2, 3):
        sel = [row for row in rows if row["case"] == cid]
        if not sel:
            cases.append(CaseReport(cid, 0, None, None))
            continue
        worst = min(sel, key=lambda row: row["ratio"])
        below = sum(row["ratio"] < constants.l for row in sel)
        cases.append(
            CaseReport(cid, len(sel), worst["ratio"], (LatticeIndex(worst["m"], worst["n"]), worst["r"]), below)
        )
    return ScanResult(h, measure.level, constants, cases, rows, skipped)


@dataclass(frozen=True)
class ScalingFit:
    exponent: float
    slopes: tuple
    residuals: tuple


def typical_centers(
    measure: CylinderMeasure, count: int, r_min: float, seed: int = 0, word_length: int = 8, max_draws: int = 100_000
) -> list[complex]:
    """Points ``phi_w(0)`` with letters drawn i.i.d. from the level-1 weights.

    Only points whose depth-``level`` cylinder has diameter ``<= r_min`` are
    kept, so every ball ``B(c, r)`` with ``r >= r_min`` contains a whole cylinder.
    The i.i.d. draw is a Bernoulli stand-in for the conformal measure.
    """
    if word_length < measure.level:
        raise DomainError("word_length must be at least the measure level")
    rng = np.random.default_rng(seed)
    mid = measure._level1[3]
    prob = mid / mid.sum()
    n = len(measure.values)
    out: list[complex] = []
    draws = 0
    while len(out) < count:
        batch = min(4096, max_draws - draws)
        if batch <= 0:
            raise FitError(f"only {len(out)} of {count} centers resolved at r_min={r_min} after {draws} draws")
        letters = rng.choice(n, size=(batch, word_length), p=prob)
        draws += batch
        head = words_from_letters(measure.values, letters[:, : measure.level])
        ok = np.flatnonzero(2 * head.image_disks()[1] <= r_min)
        if len(ok) == 0:
            continue
        pts = words_from_letters(measure.values, letters[ok]).at_zero()
        out.extend(complex(z) for z in pts[: count - len(out)])
    return out


def scaling_exponent_fit(measure: CylinderMeasure, centers, r_grid) -> ScalingFit:
    """Least-squares slope of ``log lower-mass`` against ``log r``, averaged over centers.

    Every center must be resolved on the whole grid; a zero lower mass means
    the ball holds no complete cylinder and raises :class:`FitError`.
    """
    r = np.asarray(sorted(float(v) for v in r_grid))
    if len(r) < 3 or r[0] <= 0 or r[-1] / r[0] < 100:
        raise FitError("radius grid must have >= 3 positive values spanning >= 2 decades")
    centers = list(centers)
    if not centers:
        raise FitError("no centers given")
    lx = np.log(r)
    slopes, resid = [], []
    for c in centers:
        masses = np.array([ball_mass(measure, Disk(complex(c), float(v))).lower for v in r])
        if np.any(masses <= 0):
            bad = float(r[np.argmax(masses <= 0)])
            raise FitError(f"center {c} is unresolved at r={bad:.3g}: zero lower mass")
        ly = np.log(masses)
        slope, icept = np.polyfit(lx, ly, 1)
        slopes.append(float(slope))
        resid.append(float(np.sqrt(np.mean((ly - (slope * lx + icept)) ** 2))))
    return ScalingFit(float(np.mean(slopes)), tuple(slopes), tuple(resid))
