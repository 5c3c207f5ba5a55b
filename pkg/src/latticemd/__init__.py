"""Hash-based lattice molecular dynamics for BCC EAM collision cascades."""

from .lattice import BoxSpec
from .potential import EamPotential, parse_potential_file
from .store import ATOM_DTYPE, AtomRecord, LatticeStore

__version__ = "0.1.0"

__all__ = ["ATOM_DTYPE", "AtomRecord", "BoxSpec", "EamPotential", "LatticeStore", "parse_potential_file"]
