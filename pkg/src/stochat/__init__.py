"""Discrete Ambrosio-Tortorelli energies on stochastic lattices.

Lattice generation, admissible edge sets, the discrete phase-field energies
and their minimization, homogenized-density cell problems, and PGM-based
segmentation, with a CLI front-end in :mod:`stochat.cli`.
"""

from .energy import EnergyBreakdown, EnergyParams
from .graph import CellTable, EdgeSet
from .lattice import AdmissibilityReport, BoxDomain, PointSet

__version__ = "0.1.0"

__all__ = [
    "AdmissibilityReport",
    "BoxDomain",
    "CellTable",
    "EdgeSet",
    "EnergyBreakdown",
    "EnergyParams",
    "PointSet",
    "__version__",
]
