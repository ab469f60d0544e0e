"""The systems ``S_tau = {phi_b(z) = 1/(z + b) : b in I_tau}`` acting on ``X = B(1/2, 1/2)``.

Word maps ``phi_w = phi_{w1} o ... o phi_{wn}`` are 2x2 complex matrices, the
product of generator matrices ``[[0, 1], [1, b]]`` in word order.  Entries are
rescaled to unit max modulus after every product.  The determinant is carried
alongside the entries rather than recomputed as ``ad - bc``: after rescaling
it is of order ``|phi_w'|`` and the subtraction would cancel catastrophically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .errors import DomainError, ResourceError
from .geometry import UNIT_X, Disk, TauParam, invert_disk
from .lattice import IndexSet, LatticeIndex, enumerate_indices, smallest_indices

# Largest word space materialised in memory (points, per-word arrays).
MATERIALIZE_CAP = 25_000_000
# Largest word space summed block by block.
STREAM_CAP = 2_000_000_000
BLOCK_WORDS = 1 << 20

X_CENTER = 0.5
X_RADIUS = 0.5


@dataclass(frozen=True)
class MoebiusMap:
    """``z -> (a z + b) / (c z + d)`` with ``det = ad - bc`` tracked exactly."""

    a: complex
    b: complex
    c: complex
    d: complex
    det: complex = None

    def __post_init__(self):
        a, b, c, d = (complex(v) for v in (self.a, self.b, self.c, self.d))
        det = a * d - b * c if self.det is None else complex(self.det)
        if abs(det) <= 1e-300:
            raise DomainError("singular Moebius matrix")
        s = max(abs(a), abs(b), abs(c), abs(d))
        for name, val in zip("abcd", (a, b, c, d)):
            object.__setattr__(self, name, val / s)
        object.__setattr__(self, "det", det / (s * s))

    def __call__(self, z):
        return (self.a * z + self.b) / (self.c * z + self.d)

    def derivative(self, z):
        """``|phi'(z)|``."""
        return np.abs(self.det) / np.abs(self.c * z + self.d) ** 2

    @property
    def pole(self) -> complex:
        if self.c == 0:
            return complex("inf")
        return -self.d / self.c

    def then(self, other: "MoebiusMap") -> "MoebiusMap":
        """Matrix of ``self o other``."""
        return MoebiusMap(
            self.a * other.a + self.b * other.c,
            self.a * other.b + self.b * other.d,
            self.c * other.a + self.d * other.c,
            self.c * other.b + self.d * other.d,
            self.det * other.det,
        )

    def scaled(self, k: complex) -> "MoebiusMap":
        """Same map from coefficients multiplied by ``k`` (renormalised on construction)."""
        return MoebiusMap(k * self.a, k * self.b, k * self.c, k * self.d, k * k * self.det)


@dataclass(frozen=True)
class Word:
    tau: TauParam
    letters: tuple

    def __post_init__(self):
        letters = tuple(LatticeIndex(int(m), int(n)) for m, n in self.letters)
        if not letters:
            raise DomainError("a word needs at least one letter")
        if any(l.m < 1 or l.n < 1 for l in letters):
            raise DomainError("letters must have m, n >= 1")
        object.__setattr__(self, "letters", letters)

    def __len__(self) -> int:
        return len(self.letters)

    def values(self) -> list[complex]:
        return [l.value(self.tau) for l in self.letters]

    def __add__(self, other: "Word") -> "Word":
        return Word(self.tau, self.letters + other.letters)


@dataclass
class SystemConfig:
    """A finite truncation of ``S_tau`` together with its domains.

    The truncation is either every index with ``|b| <= truncation_bound`` or,
    when ``truncation_count`` is given, the smallest ``truncation_count``
    indices (widened to include modulus ties).
    """

    tau: TauParam
    truncation_bound: float | None = None
    max_word_length: int = 1
    truncation_count: int | None = None
    domain_x: Disk = UNIT_X
    domain_v: Disk = Disk(0.5 + 0j, 0.75)
    indices: IndexSet = field(init=False, repr=False)

    def __post_init__(self):
        if self.domain_x != UNIT_X:
            raise DomainError("domain_x is fixed to B(1/2, 1/2)")
        if not abs(self.domain_v.center - UNIT_X.center) + UNIT_X.radius < self.domain_v.radius:
            raise DomainError("domain_v must contain X strictly")
        if self.max_word_length < 1:
            raise DomainError("max_word_length must be >= 1")
        if self.truncation_count is not None:
            self.indices = smallest_indices(self.tau, self.truncation_count)
        elif self.truncation_bound is not None:
            self.indices = enumerate_indices(self.tau, self.truncation_bound)
        else:
            raise DomainError("give truncation_bound or truncation_count")
        self.truncation_bound = self.indices.bound


@dataclass(frozen=True)
class DistortionReport:
    k_hat: float
    contraction_hat: float
    samples: int
    worst_word: tuple = ()


class CodingPoint(NamedTuple):
    point: complex
    error: float
    disk: Disk


def resolve_indices(tau: TauParam, truncation) -> IndexSet:
    """Accept an :class:`IndexSet`, a :class:`SystemConfig` or a modulus bound."""
    if isinstance(truncation, IndexSet):
        return truncation
    if isinstance(truncation, SystemConfig):
        return truncation.indices
    return enumerate_indices(tau, float(truncation))


# ---------------------------------------------------------------- single maps


def generator(tau: TauParam, idx: LatticeIndex) -> MoebiusMap:
    m, n = idx
    if m < 1 or n < 1:
        raise DomainError(f"invalid index {idx}")
    b = complex(m + n * tau.u, n * tau.v)
    return MoebiusMap(0, 1, 1, b, -1)


def compose(word: Word) -> MoebiusMap:
    out = generator(word.tau, word.letters[0])
    for letter in word.letters[1:]:
        out = out.then(generator(word.tau, letter))
    return out


def nested_eval(values: Sequence[complex], z: complex) -> complex:
    """Continued-fraction evaluation ``1/(b1 + 1/(b2 + ... 1/(bn + z)))``."""
    for b in reversed(values):
        z = 1.0 / (z + b)
    return z


def _check_pole(mp: MoebiusMap):
    if mp.c == 0:
        return
    if abs(mp.pole - X_CENTER) <= X_RADIUS:
        raise DomainError(f"pole {mp.pole} lies in X")


def image_disk(mp: MoebiusMap) -> Disk:
    """Exact ``phi(X)`` via ``z -> cz + d``, inversion, then ``-det/c`` and ``+ a/c``."""
    _check_pole(mp)
    if mp.c == 0:
        k = mp.a / mp.d
        return Disk(k * X_CENTER + mp.b / mp.d, abs(k) * X_RADIUS)
    shifted = Disk(mp.c * X_CENTER + mp.d, abs(mp.c) * X_RADIUS)
    inv = invert_disk(shifted)
    k = -mp.det / mp.c
    return Disk(mp.a / mp.c + k * inv.center, abs(k) * inv.radius)


def derivative_range(mp: MoebiusMap) -> tuple[float, float]:
    """Exact ``(min, max)`` of ``|phi'|`` over ``X``."""
    _check_pole(mp)
    cc = abs(mp.c * X_CENTER + mp.d)
    cr = abs(mp.c) * X_RADIUS
    det = abs(mp.det)
    return det / (cc + cr) ** 2, det / (cc - cr) ** 2


def coding_point(word: Word) -> CodingPoint:
    """``phi_w(0)`` with a guaranteed distance bound to every limit point coded by ``w``.

    The bound is ``c^n diam X`` with ``c`` the largest generator sup-derivative
    among the letters; the exact cylinder ``phi_w(X)`` is returned as well.
    """
    mp = compose(word)
    c = max(derivative_range(generator(word.tau, l))[1] for l in set(word.letters))
    return CodingPoint(complex(mp(0)), c ** len(word) * UNIT_X.diameter, image_disk(mp))


# ---------------------------------------------------------- vectorised words


@dataclass
class WordArrays:
    """Matrices of a contiguous block of words in lexicographic order."""

    start: int
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    det: np.ndarray

    def __len__(self) -> int:
        return len(self.a)

    def at_zero(self) -> np.ndarray:
        return self.b / self.d

    def derivative_at_zero(self) -> np.ndarray:
        return np.abs(self.det) / np.abs(self.d) ** 2

    def derivative_range(self):
        cc = np.abs(self.c * X_CENTER + self.d)
        cr = np.abs(self.c) * X_RADIUS
        det = np.abs(self.det)
        return det / (cc + cr) ** 2, det / (cc - cr) ** 2

    def image_disks(self):
        """Centers and radii of ``phi_w(X)``; poles are never in X for lattice words."""
        shifted = self.c * X_CENTER + self.d
        rho = np.abs(self.c) * X_RADIUS
        denom = np.abs(shifted) ** 2 - rho**2
        k = -self.det / self.c
        centers = self.a / self.c + k * np.conj(shifted) / denom
        radii = np.abs(k) * rho / denom
        return centers, radii


def _generators(values: np.ndarray) -> WordArrays:
    n = len(values)
    return WordArrays(
        0,
        np.zeros(n, complex),
        np.ones(n, complex),
        np.ones(n, complex),
        values.astype(complex),
        -np.ones(n, complex),
    )


def _extend(prefix: WordArrays, values: np.ndarray, start: int) -> WordArrays:
    """All words ``p b`` for ``p`` in ``prefix`` and ``b`` in ``values``."""
    beta = values[None, :]
    a = np.broadcast_to(prefix.b[:, None], (len(prefix), len(values)))
    b = prefix.a[:, None] + prefix.b[:, None] * beta
    c = np.broadcast_to(prefix.d[:, None], (len(prefix), len(values)))
    d = prefix.c[:, None] + prefix.d[:, None] * beta
    det = np.broadcast_to(-prefix.det[:, None], (len(prefix), len(values)))
    s = np.maximum(np.maximum(np.abs(a), np.abs(b)), np.maximum(np.abs(c), np.abs(d)))
    return WordArrays(
        start,
        (a / s).ravel(),
        (b / s).ravel(),
        (c / s).ravel(),
        (d / s).ravel(),
        (det / (s * s)).ravel(),
    )


def word_space_size(n_letters: int, length: int) -> int:
    return n_letters**length


def word_blocks(
    values: np.ndarray, length: int, cap: int = STREAM_CAP, block: int = BLOCK_WORDS
) -> Iterator[WordArrays]:
    """Yield every word of ``length`` over ``values`` in lexicographic blocks."""
    values = np.asarray(values, dtype=complex)
    n = len(values)
    total = word_space_size(n, length)
    if total > cap:
        raise ResourceError(f"{n}^{length} = {total} words exceeds the cap of {cap}")
    if length == 1:
        yield _generators(values)
        return
    prefixes = _generators(values)
    for _ in range(length - 2):
        prefixes = _extend(prefixes, values, 0)
    step = max(1, block // n)
    for lo in range(0, len(prefixes), step):
        hi = min(lo + step, len(prefixes))
        part = WordArrays(
            lo * n,
            prefixes.a[lo:hi],
            prefixes.b[lo:hi],
            prefixes.c[lo:hi],
            prefixes.d[lo:hi],
            prefixes.det[lo:hi],
        )
        yield _extend(part, values, lo * n)


def all_words(values: np.ndarray, length: int, cap: int = MATERIALIZE_CAP) -> WordArrays:
    """Materialise every word of ``length``; refuses word spaces above ``cap``."""
    blocks = list(word_blocks(values, length, cap=cap))
    if len(blocks) == 1:
        return blocks[0]
    return WordArrays(0, *(np.concatenate([getattr(bk, f) for bk in blocks]) for f in "abcd"),
                      np.concatenate([bk.det for bk in blocks]))


def words_from_letters(values: np.ndarray, letters: np.ndarray) -> WordArrays:
    """Matrices for explicit words given as rows of letter positions into ``values``."""
    letters = np.atleast_2d(letters)
    beta = values[letters[:, 0]]
    k = len(beta)
    out = WordArrays(0, np.zeros(k, complex), np.ones(k, complex), np.ones(k, complex),
                     beta.astype(complex), -np.ones(k, complex))
    for j in range(1, letters.shape[1]):
        beta = values[letters[:, j]]
        a, b = out.b, out.a + out.b * beta
        c, d = out.d, out.c + out.d * beta
        s = np.maximum(np.maximum(np.abs(a), np.abs(b)), np.maximum(np.abs(c), np.abs(d)))
        out = WordArrays(0, a / s, b / s, c / s, d / s, -out.det / (s * s))
    return out


def unravel_word(flat: int, n_letters: int, length: int) -> tuple[int, ...]:
    digits = []
    for _ in range(length):
        flat, r = divmod(flat, n_letters)
        digits.append(r)
    return tuple(reversed(digits))


# ------------------------------------------------------------------- audits


def osc_audit(config: SystemConfig, tol: float = 1e-12) -> list[tuple[LatticeIndex, LatticeIndex]]:
    """Pairs of generators whose open image disks overlap, plus images leaving ``X``.

    An image escaping ``X`` is reported as the pair ``(i, i)``.
    """
    idx = config.indices
    gens = _generators(idx.values)
    centers, radii = gens.image_disks()
    bad = []
    escape = np.abs(centers - X_CENTER) + radii > X_RADIUS + tol
    for i in np.flatnonzero(escape):
        bad.append((idx[i], idx[i]))
    n = len(centers)
    chunk = max(1, 4_000_000 // max(n, 1))
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        dist = np.abs(centers[lo:hi, None] - centers[None, :])
        overlap = dist < radii[lo:hi, None] + radii[None, :] - tol
        ii, jj = np.nonzero(overlap)
        ii = ii + lo
        for i, j in zip(ii.tolist(), jj.tolist()):
            if i < j:
                bad.append((idx[i], idx[j]))
    return bad


def distortion_audit(
    config: SystemConfig,
    word_length: int | None = None,
    samples: int = 200_000,
    seed: int = 0,
) -> DistortionReport:
    """Largest ``max|phi_w'| / min|phi_w'|`` over words of length ``1..word_length``.

    Word spaces above ``samples`` words are sampled uniformly at random.
    """
    word_length = config.max_word_length if word_length is None else word_length
    if word_length < 1:
        raise DomainError("word_length must be >= 1")
    values = config.indices.values
    n = len(values)
    rng = np.random.default_rng(seed)
    gens = _generators(values)
    lo, hi = gens.derivative_range()
    ratios = hi / lo
    k_hat = float(ratios.max())
    worst = (int(ratios.argmax()),)
    contraction = float(hi.max())
    count = n
    for length in range(2, word_length + 1):
        if n**length <= samples:
            block = all_words(values, length)
            letters = None
        else:
            letters = rng.integers(0, n, size=(samples, length))
            block = words_from_letters(values, letters)
        lo, hi = block.derivative_range()
        r = hi / lo
        j = int(r.argmax())
        if r[j] > k_hat:
            k_hat = float(r[j])
            worst = tuple(letters[j]) if letters is not None else unravel_word(j, n, length)
        count += len(block)
    idx = config.indices
    return DistortionReport(k_hat, contraction, count, tuple(idx[i] for i in worst))


def sample_limit_set(config: SystemConfig, cap: int = MATERIALIZE_CAP) -> np.ndarray:
    """``phi_w(0)`` for every word of length ``config.max_word_length``."""
    words = all_words(config.indices.values, config.max_word_length, cap=cap)
    return words.at_zero()


def contraction_hat(indices: IndexSet) -> float:
    return float(_generators(indices.values).derivative_range()[1].max())
