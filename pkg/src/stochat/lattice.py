"""Finite realizations of admissible point sets in a box.

Three generators are provided: saturated random parking (random sequential
adsorption run to full saturation), a periodic grid, and a jittered periodic
grid. Every point set carries its hard-core distance ``r`` and a covering
radius bound ``R``; ``check_admissibility`` measures both on the realization.

Random parking is run on a shrinking active-cell quadtree: darts are thrown
uniformly over the union of still-active cells, and a cell is retired once a
single accepted disc provably covers it. Restricting proposals to a superset
of the feasible region leaves the law of the accepted sequence unchanged, so
the output is an exact saturated RSA configuration for the given seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .rng import master_rng

__all__ = [
    "TOL_GEOM",
    "BoxDomain",
    "PointSet",
    "AdmissibilityReport",
    "generate_random_parking",
    "generate_periodic",
    "generate_jittered",
    "check_admissibility",
    "pointset_to_json",
    "pointset_from_json",
]

# Tolerance for all geometric comparisons (length units).
TOL_GEOM = 1e-9

# Cells smaller than this fraction of r are force-retired during RSA even if
# the single-disc cover test is inconclusive (near-tangency slivers); the
# saturation gap this can leave behind is below every tolerance used here.
_RSA_MIN_CELL = 1e-6

_KINDS = ("parking", "periodic", "jittered")


class LatticeError(ValueError):
    """Invalid lattice parameters or malformed serialized data."""


@dataclass(frozen=True)
class BoxDomain:
    """Axis-aligned closed box, the finite stand-in for the ambient domain."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(x) for x in self.lo)
        hi = tuple(float(x) for x in self.hi)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if len(lo) != len(hi) or len(lo) not in (2, 3):
            raise LatticeError("domain must be 2D or 3D with matching lo/hi")
        if any(h <= l for l, h in zip(lo, hi)):
            raise LatticeError("domain must have hi > lo on every axis")

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def sides(self) -> np.ndarray:
        return np.asarray(self.hi) - np.asarray(self.lo)

    @property
    def volume(self) -> float:
        return float(np.prod(self.sides))

    def contains(self, pts: np.ndarray) -> np.ndarray:
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return np.all((pts >= lo - TOL_GEOM) & (pts <= hi + TOL_GEOM), axis=1)

    @staticmethod
    def square(side: float, dim: int = 2) -> "BoxDomain":
        return BoxDomain((0.0,) * dim, (float(side),) * dim)


@dataclass(frozen=True)
class PointSet:
    """Points of one lattice realization plus its admissibility constants."""

    points: np.ndarray  # (n, d) float64
    domain: BoxDomain
    r: float
    R: float
    seed: int
    kind: str

    def __post_init__(self):
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=np.float64))
        if pts.ndim != 2 or pts.shape[1] != self.domain.dim:
            raise LatticeError("points must be (n, dim) with dim matching the domain")
        object.__setattr__(self, "points", pts)
        if self.kind not in _KINDS:
            raise LatticeError(f"unknown lattice kind {self.kind!r}")
        if not (self.r > 0 and self.R > 0):
            raise LatticeError("r and R must be positive")

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.domain.dim


@dataclass(frozen=True)
class AdmissibilityReport:
    min_pair_dist: float
    max_cover_dist: float
    pass_hardcore: bool
    pass_covering: bool


def _require(cond: bool, msg: str):
    if not cond:
        raise LatticeError(msg)


# ---------------------------------------------------------------------------
# Random parking (saturated RSA)
# ---------------------------------------------------------------------------

class _HashGrid:
    """Uniform grid over the box with bucket side >= r, for O(1) disc checks."""

    def __init__(self, lo, hi, r, dim):
        self.lo = np.asarray(lo)
        self.r = r
        sides = np.asarray(hi) - self.lo
        self.shape = np.maximum(1, np.floor(sides / r).astype(int))
        self.cell = sides / self.shape
        self.buckets: dict[tuple, list[np.ndarray]] = {}
        self.dim = dim

    def _key(self, p):
        idx = np.clip(((p - self.lo) / self.cell).astype(int), 0, self.shape - 1)
        return tuple(idx)

    def add(self, p):
        self.buckets.setdefault(self._key(p), []).append(p)

    def near(self, p):
        """All accepted points in the 3^d bucket neighborhood of p."""
        key = self._key(p)
        out = []
        if self.dim == 2:
            i0, j0 = key
            for i in (i0 - 1, i0, i0 + 1):
                for j in (j0 - 1, j0, j0 + 1):
                    out.extend(self.buckets.get((i, j), ()))
        else:
            i0, j0, k0 = key
            for i in (i0 - 1, i0, i0 + 1):
                for j in (j0 - 1, j0, j0 + 1):
                    for k in (k0 - 1, k0, k0 + 1):
                        out.extend(self.buckets.get((i, j, k), ()))
        return out

    def min_dist2(self, p):
        pts = self.near(p)
        if not pts:
            return np.inf
        arr = np.asarray(pts)
        d2 = np.sum((arr - p) ** 2, axis=1)
        return float(d2.min())

    def blocked(self, cell_lo, cell_hi, r2):
        """True if one accepted disc of radius r covers the whole cell."""
        center = 0.5 * (cell_lo + cell_hi)
        for q in self.near(center):
            # Farthest cell point from q is a corner: per axis take the
            # larger of the two wall distances.
            far = np.maximum(np.abs(cell_lo - q), np.abs(cell_hi - q))
            if float(far @ far) < r2:
                return True
        return False


def generate_random_parking(domain: BoxDomain, r: float, seed: int) -> PointSet:
    """Saturated random-parking configuration with hard-core distance r.

    At saturation no point of the box lies at distance >= r from every
    accepted point, so the covering bound holds with R = r.
    """
    _require(r > 0, "r must be positive")
    _require(bool(np.all(domain.sides >= 4 * r)), "domain sides must be >= 4r")
    d = domain.dim
    rng = master_rng(seed)
    lo = np.asarray(domain.lo)
    hi = np.asarray(domain.hi)
    grid = _HashGrid(lo, hi, r, d)
    points: list[np.ndarray] = []

    # Base active cells: side r/sqrt(d), clipped to the box.
    base = r / np.sqrt(d)
    counts = np.ceil(domain.sides / base).astype(int)
    step = domain.sides / counts
    cells_lo = (
        lo
        + np.stack(
            np.meshgrid(*[np.arange(c) for c in counts], indexing="ij"), axis=-1
        ).reshape(-1, d)
        * step
    )
    cells = [(cl, cl + step) for cl in cells_lo]
    r2_block = r * r * (1.0 - 1e-12)

    while cells:
        los = np.asarray([c[0] for c in cells])
        his = np.asarray([c[1] for c in cells])
        areas = np.prod(his - los, axis=1)
        cum = np.cumsum(areas)
        ndarts = max(len(cells), 64)
        picks = np.searchsorted(cum, rng.random(ndarts) * cum[-1], side="right")
        picks = np.minimum(picks, len(cells) - 1)
        frac = rng.random((ndarts, d))
        darts = los[picks] + frac * (his[picks] - los[picks])
        for p in darts:
            if grid.min_dist2(p) >= r * r:
                points.append(p.copy())
                grid.add(p)
        nxt = []
        for cl, ch in cells:
            if grid.blocked(cl, ch, r2_block):
                continue
            size = float(np.max(ch - cl))
            if size < _RSA_MIN_CELL * r:
                continue  # unresolved sliver below tolerance
            mid = 0.5 * (cl + ch)
            for corner in np.stack(
                np.meshgrid(*([[0, 1]] * d), indexing="ij"), axis=-1
            ).reshape(-1, d):
                sub_lo = np.where(corner == 0, cl, mid)
                sub_hi = np.where(corner == 0, mid, ch)
                if not grid.blocked(sub_lo, sub_hi, r2_block):
                    nxt.append((sub_lo, sub_hi))
        cells = nxt

    pts = np.asarray(points) if points else np.empty((0, d))
    return PointSet(pts, domain, r=r, R=r, seed=int(seed), kind="parking")


# ---------------------------------------------------------------------------
# Periodic and jittered lattices
# ---------------------------------------------------------------------------

def _grid_points(domain: BoxDomain, spacing: float) -> np.ndarray:
    lo = np.asarray(domain.lo)
    hi = np.asarray(domain.hi)
    axes = []
    for k in range(domain.dim):
        n0 = int(np.ceil(lo[k] / spacing - TOL_GEOM))
        n1 = int(np.floor(hi[k] / spacing + TOL_GEOM))
        axes.append(np.arange(n0, n1 + 1) * spacing)
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def generate_periodic(domain: BoxDomain, spacing: float) -> PointSet:
    """Grid points spacing*Z^d intersected with the closed box."""
    _require(spacing > 0, "spacing must be positive")
    pts = _grid_points(domain, spacing)
    d = domain.dim
    return PointSet(
        pts,
        domain,
        r=spacing,
        R=spacing * np.sqrt(d) / 2 + TOL_GEOM,
        seed=0,
        kind="periodic",
    )


def generate_jittered(
    domain: BoxDomain, spacing: float, jitter: float, seed: int
) -> PointSet:
    """Periodic grid displaced by uniform offsets in [-j*s, j*s]^d.

    jitter < 0.45 keeps the worst-case hard-core distance s*(1 - 2*jitter)
    positive (axis neighbors approach each other by at most 2*j*s along the
    connecting axis).
    """
    _require(spacing > 0, "spacing must be positive")
    _require(0.0 <= jitter < 0.45, "jitter must lie in [0, 0.45)")
    pts = _grid_points(domain, spacing)
    if jitter > 0:
        rng = master_rng(seed)
        pts = pts + (rng.random(pts.shape) * 2.0 - 1.0) * jitter * spacing
        pts = np.clip(pts, np.asarray(domain.lo), np.asarray(domain.hi))
    d = domain.dim
    return PointSet(
        pts,
        domain,
        r=spacing * (1.0 - 2.0 * jitter),
        R=spacing * np.sqrt(d) * (0.5 + jitter) + TOL_GEOM,
        seed=int(seed),
        kind="jittered",
    )


# ---------------------------------------------------------------------------
# Admissibility
# ---------------------------------------------------------------------------

def check_admissibility(ps: PointSet) -> AdmissibilityReport:
    """Measure the hard-core and covering constants of a realization.

    The minimum pairwise distance comes from a k-d tree (no quadratic scan);
    the covering distance is the max over a test grid of pitch <= r/4 of the
    distance to the nearest lattice point.
    """
    _require(len(ps) > 0, "empty point set")
    tree = cKDTree(ps.points)
    if len(ps) == 1:
        min_pair = np.inf
    else:
        dists, _ = tree.query(ps.points, k=2)
        min_pair = float(dists[:, 1].min())

    lo = np.asarray(ps.domain.lo)
    sides = ps.domain.sides
    counts = np.maximum(1, np.ceil(sides / (ps.r / 4)).astype(int))
    axes = [lo[k] + np.arange(counts[k] + 1) * sides[k] / counts[k] for k in range(ps.dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    grid = np.stack([m.ravel() for m in mesh], axis=-1)
    cover, _ = tree.query(grid)
    max_cover = float(cover.max())

    return AdmissibilityReport(
        min_pair_dist=min_pair,
        max_cover_dist=max_cover,
        pass_hardcore=bool(min_pair >= ps.r - TOL_GEOM),
        pass_covering=bool(max_cover < ps.R),
    )


# ---------------------------------------------------------------------------
# Serialization (doubles printed with 17 significant digits)
# ---------------------------------------------------------------------------

def _f(x: float) -> float:
    return float(f"{float(x):.17g}")


def pointset_to_json(ps: PointSet) -> str:
    obj = {
        "dim": ps.dim,
        "lo": [_f(x) for x in ps.domain.lo],
        "hi": [_f(x) for x in ps.domain.hi],
        "r": _f(ps.r),
        "R": _f(ps.R),
        "seed": ps.seed,
        "kind": ps.kind,
        "points": [[_f(x) for x in p] for p in ps.points],
    }
    return json.dumps(obj, separators=(",", ":"))


def pointset_from_json(text: str) -> PointSet:
    try:
        obj = json.loads(text)
        domain = BoxDomain(tuple(obj["lo"]), tuple(obj["hi"]))
        return PointSet(
            np.asarray(obj["points"], dtype=np.float64).reshape(-1, int(obj["dim"])),
            domain,
            r=float(obj["r"]),
            R=float(obj["R"]),
            seed=int(obj["seed"]),
            kind=str(obj["kind"]),
        )
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise LatticeError(f"malformed point-set JSON: {exc}") from exc
