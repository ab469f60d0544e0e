"""Numerics for complex continued fraction systems ``z -> 1/(z + b)`` over lattice digits."""

from .geometry import Disk, TauParam, invert_disk, spectral_data
from .lattice import IndexSet, LatticeIndex, enumerate_indices, smallest_indices
from .cifs import MoebiusMap, SystemConfig, Word, compose, generator, image_disk
from .pressure import bowen_root, psi
from .measure import ball_mass, build_measure, packing_constants

__version__ = "0.1.0"

__all__ = [
    "Disk",
    "TauParam",
    "invert_disk",
    "spectral_data",
    "IndexSet",
    "LatticeIndex",
    "enumerate_indices",
    "smallest_indices",
    "MoebiusMap",
    "SystemConfig",
    "Word",
    "compose",
    "generator",
    "image_disk",
    "bowen_root",
    "psi",
    "ball_mass",
    "build_measure",
    "packing_constants",
]
