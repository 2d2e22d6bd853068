"""Regions used to localize energies and cell problems.

A region is anything with a ``mask(points) -> bool array`` method. Cubes are
half-open in their rotated frame so that integer-lattice point counts match
``side**d`` exactly, mirroring the half-open intervals the homogenization
process is built from.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["AxisBox", "RotatedCube", "frame_from_normal", "region_mask"]


def frame_from_normal(nu) -> np.ndarray:
    """Orthonormal basis (rows) with first axis along nu (2D)."""
    nu = np.asarray(nu, dtype=np.float64)
    n = np.linalg.norm(nu)
    if not np.isfinite(n) or n == 0:
        raise ValueError("nu must be a nonzero vector")
    nu = nu / n
    if nu.shape != (2,):
        raise ValueError("only 2D directions are supported")
    return np.array([[nu[0], nu[1]], [-nu[1], nu[0]]])


@dataclass(frozen=True)
class AxisBox:
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def mask(self, points: np.ndarray) -> np.ndarray:
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return np.all((points >= lo) & (points <= hi), axis=1)


@dataclass(frozen=True)
class RotatedCube:
    """Cube of given side centered at ``center`` with first axis along ``nu``."""

    center: tuple[float, ...]
    nu: tuple[float, ...]
    side: float

    def local(self, points: np.ndarray) -> np.ndarray:
        frame = frame_from_normal(self.nu)
        return (points - np.asarray(self.center)) @ frame.T

    def mask(self, points: np.ndarray) -> np.ndarray:
        loc = self.local(points)
        h = self.side / 2.0
        return np.all((loc >= -h) & (loc < h), axis=1)


def region_mask(region, points: np.ndarray) -> np.ndarray:
    """Normalize a region spec (None, mask array, callable, or region object)."""
    if region is None:
        return np.ones(len(points), dtype=bool)
    if isinstance(region, np.ndarray):
        if region.dtype != bool or region.shape != (len(points),):
            raise ValueError("mask array must be bool with one entry per point")
        return region
    if hasattr(region, "mask"):
        return np.asarray(region.mask(points), dtype=bool)
    if callable(region):
        return np.asarray(region(points), dtype=bool)
    raise TypeError(f"unsupported region spec: {type(region)!r}")
