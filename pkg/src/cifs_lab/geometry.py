"""Plane geometry on disks and the lattice map E_tau.

Points of the plane are Python ``complex`` numbers (or complex numpy arrays).
A point ``x + iy`` is identified with the column vector ``(x, y)``, so the
linear map ``E_tau = [[1, u], [0, v]]`` sends the integer pair ``(m, n)`` to
the lattice point ``m + n*tau``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

CONTAIN_TOL = 1e-12


@dataclass(frozen=True)
class Disk:
    """Disk ``B(center, radius)``; open/closed is decided by the caller's tolerance."""

    center: complex
    radius: float

    def __post_init__(self):
        c = complex(self.center)
        if not (math.isfinite(c.real) and math.isfinite(c.imag)):
            raise DomainError(f"disk center must be finite, got {self.center!r}")
        if not (math.isfinite(self.radius) and self.radius >= 0):
            raise DomainError(f"disk radius must be finite and >= 0, got {self.radius!r}")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    def boundary(self, n: int) -> np.ndarray:
        """``n`` equally spaced points on the boundary circle."""
        theta = 2.0 * np.pi * np.arange(n) / n
        return self.center + self.radius * np.exp(1j * theta)


# The compact domain X of every generator.
UNIT_X = Disk(0.5 + 0j, 0.5)


@dataclass(frozen=True)
class TauParam:
    """A parameter ``tau = u + iv`` in the half strip ``u >= 0, v >= 1``."""

    u: float
    v: float

    def __post_init__(self):
        if not (math.isfinite(self.u) and math.isfinite(self.v)):
            raise DomainError("tau must be finite")
        if self.u < 0 or self.v < 1:
            raise DomainError(
                f"tau = {self.u} + {self.v}i is outside A0 (need u >= 0 and v >= 1)"
            )

    @classmethod
    def from_complex(cls, tau: complex) -> "TauParam":
        return cls(float(tau.real), float(tau.imag))

    @property
    def value(self) -> complex:
        return complex(self.u, self.v)

    def __str__(self) -> str:
        return f"{self.u:g}+{self.v:g}i"


@dataclass(frozen=True)
class SpectralData:
    e_matrix: np.ndarray
    f_matrix: np.ndarray
    lambda1: float
    lambda2: float
    v_matrix: np.ndarray
    n_tau: float


@dataclass(frozen=True)
class Annulus:
    """The half-open annulus ``R < |z| <= N_tau R`` used for index harvesting."""

    tau: TauParam
    r: float

    @property
    def inner(self) -> float:
        return self.r

    @property
    def outer(self) -> float:
        return spectral_data(self.tau).n_tau * self.r


def invert_disk(d: Disk) -> Disk:
    """Image of the disk ``d`` under ``z -> 1/z``.

    The pole must lie strictly outside the closed disk.

    >>> invert_disk(Disk(1, 0.5))
    Disk(center=(1.3333333333333333+0j), radius=0.6666666666666666)
    """
    x, r = d.center, d.radius
    x2 = abs(x) ** 2
    if not r < abs(x):
        raise DomainError(f"0 lies in the closed disk B({x}, {r}); cannot invert")
    denom = x2 - r * r
    return Disk((x2 / denom) / x, r / denom)


def invert_disks(centers: np.ndarray, radii: np.ndarray):
    """Vectorised :func:`invert_disk`; returns ``(centers, radii)`` arrays."""
    centers = np.asarray(centers, dtype=complex)
    radii = np.asarray(radii, dtype=float)
    x2 = centers.real**2 + centers.imag**2
    if np.any(radii >= np.sqrt(x2)):
        raise DomainError("0 lies in one of the closed disks; cannot invert")
    denom = x2 - radii * radii
    return (x2 / denom) / centers, radii / denom


def disk_contains(outer: Disk, inner: Disk, tol: float = CONTAIN_TOL) -> bool:
    return abs(outer.center - inner.center) + inner.radius <= outer.radius + tol


def disks_intersect(a: Disk, b: Disk, tol: float = CONTAIN_TOL) -> bool:
    """True when the closed disks share a point."""
    return abs(a.center - b.center) <= a.radius + b.radius + tol


def spectral_data(tau: TauParam) -> SpectralData:
    """Eigen-decomposition of ``F_tau = E_tau^T E_tau`` in closed form."""
    u, v = tau.u, tau.v
    e = np.array([[1.0, u], [0.0, v]])
    f = e.T @ e
    trace = 1.0 + u * u + v * v
    det = v * v
    disc = math.sqrt(max(trace * trace - 4.0 * det, 0.0))
    lam2 = 0.5 * (trace + disc)
    lam1 = det / lam2  # avoids cancellation in (trace - disc) / 2
    # two formulas for the lam1 eigenvector of [[1, u], [u, u^2 + v^2]]; keep the better conditioned
    cand = [np.array([u, lam1 - 1.0]), np.array([lam1 - (u * u + v * v), u])]
    v1 = max(cand, key=np.linalg.norm)
    norm = float(np.linalg.norm(v1))
    if u == 0.0 or norm < 1e-150:
        # F is diagonal, or its eigenvalues agree to rounding; any orthogonal basis works
        vmat = np.eye(2)
    else:
        v1 = v1 / norm
        vmat = np.column_stack([v1, [-v1[1], v1[0]]])
    n_tau = math.sqrt(2.0 * lam2 / lam1) + 1.0
    return SpectralData(e, f, lam1, lam2, vmat, n_tau)


def e_apply(tau: TauParam, p):
    """Apply ``E_tau`` to a point (or array of points) written as ``x + iy``."""
    p = np.asarray(p, dtype=complex)
    out = p.real + tau.u * p.imag + 1j * tau.v * p.imag
    return complex(out) if out.ndim == 0 else out


def e_inverse(tau: TauParam, p):
    p = np.asarray(p, dtype=complex)
    y = p.imag / tau.v
    out = (p.real - tau.u * y) + 1j * y
    return complex(out) if out.ndim == 0 else out


def preimage_probe_ball(tau: TauParam, x_tilde: complex, r_tilde: float) -> Disk:
    """A disk in (m, n)-coordinates whose ``E_tau`` image lies inside ``B(x_tilde, r_tilde)``."""
    if not r_tilde > 0:
        raise DomainError("r_tilde must be positive")
    lam2 = spectral_data(tau).lambda2
    return Disk(e_inverse(tau, complex(x_tilde)), r_tilde / math.sqrt(lam2))


def case1_probe_ball(tau: TauParam, w: complex, r_bar: float, m: float = 2.0) -> Disk:
    """Preimage disk whose ``E_tau`` image sits in the lens ``B(0,|w|) ∩ B(w, r_bar)``."""
    w = complex(w)
    if not (abs(w) > r_bar > 0):
        raise DomainError(f"need |w| > r_bar > 0, got |w|={abs(w)}, r_bar={r_bar}")
    if m < 2:
        raise DomainError(f"need m >= 2, got {m}")
    lam2 = spectral_data(tau).lambda2
    shifted = w - (r_bar / (m * abs(w))) * w
    return Disk(e_inverse(tau, shifted), r_bar / (math.sqrt(lam2) * m))


def sample_in_disk(d: Disk, n: int, rng: np.random.Generator, shrink: float = 1.0) -> np.ndarray:
    """Uniform samples from the open disk ``B(d.center, shrink * d.radius)``."""
    rad = d.radius * shrink * np.sqrt(rng.random(n))
    theta = 2.0 * np.pi * rng.random(n)
    return d.center + rad * np.exp(1j * theta)
