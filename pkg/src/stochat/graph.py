"""Edge sets over lattice realizations: Voronoi neighbors and k-NN.

Voronoi neighbors are pairs whose cells, clipped to the domain box, share a
facet of positive length. Cells are built directly by half-plane clipping of
the box polygon against perpendicular bisectors, which gives neighbor facet
lengths and cell areas from one construction, resolves cocircular
degeneracies (grid diagonals touch at a single corner and are dropped by the
positive-length filter), and keeps every edge shorter than 2R since clipped
cells sit inside B_R.

Edges are stored as ordered pairs, both directions; energy sums iterate
ordered pairs with the 1/2 prefactors so symmetry is structural.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .lattice import TOL_GEOM, PointSet
from .regions import region_mask

__all__ = [
    "EdgeSet",
    "CellTable",
    "GraphError",
    "build_voronoi_edges",
    "build_knn_edges",
    "max_edge_range",
    "voronoi_cell_areas",
    "restrict_to_region",
    "edgeset_to_json",
    "edgeset_from_json",
]

# Defensive cap standing in for the paper-style degree bound; admissible
# lattices stay far below it, so hitting it signals a modeling bug.
MAX_DEGREE_HARD_LIMIT = 40


class GraphError(ValueError):
    """Invalid graph construction input or violated structural bound."""


@dataclass(frozen=True)
class EdgeSet:
    """Symmetric directed edge list with range and degree bounds."""

    pairs: np.ndarray  # (m, 2) int64, both orientations, lexicographically sorted
    M: float
    max_degree: int
    n_points: int
    _adj: tuple = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        pairs = np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2)
        order = np.lexsort((pairs[:, 1], pairs[:, 0]))
        object.__setattr__(self, "pairs", np.ascontiguousarray(pairs[order]))

    @property
    def n_edges(self) -> int:
        """Number of unordered edges."""
        return self.pairs.shape[0] // 2

    def unordered_pairs(self) -> np.ndarray:
        p = self.pairs
        return p[p[:, 0] < p[:, 1]]

    def adjacency(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR-style (offsets, targets) over ordered pairs."""
        if self._adj is None:
            counts = np.bincount(self.pairs[:, 0], minlength=self.n_points)
            offsets = np.concatenate(([0], np.cumsum(counts)))
            object.__setattr__(self, "_adj", (offsets, self.pairs[:, 1].copy()))
        return self._adj

    def degrees(self) -> np.ndarray:
        return np.bincount(self.pairs[:, 0], minlength=self.n_points)


@dataclass(frozen=True)
class CellTable:
    """Voronoi cell areas clipped to the domain box, one per point."""

    areas: np.ndarray


def _symmetric_from_unordered(upairs: np.ndarray) -> np.ndarray:
    if len(upairs) == 0:
        return np.empty((0, 2), dtype=np.int64)
    return np.concatenate([upairs, upairs[:, ::-1]], axis=0)


def _finish_edgeset(upairs: np.ndarray, ps: PointSet, enforce_cap=True) -> EdgeSet:
    pairs = _symmetric_from_unordered(np.asarray(upairs, dtype=np.int64))
    if len(pairs):
        lengths = np.linalg.norm(ps.points[pairs[:, 0]] - ps.points[pairs[:, 1]], axis=1)
        m_range = float(lengths.max()) + TOL_GEOM
        max_deg = int(np.bincount(pairs[:, 0], minlength=len(ps)).max())
    else:
        m_range = TOL_GEOM
        max_deg = 0
    if enforce_cap and max_deg > MAX_DEGREE_HARD_LIMIT:
        raise GraphError(f"degree bound violated: {max_deg} > {MAX_DEGREE_HARD_LIMIT}")
    return EdgeSet(pairs=pairs, M=m_range, max_degree=max_deg, n_points=len(ps))


# ---------------------------------------------------------------------------
# Half-plane cell construction
# ---------------------------------------------------------------------------

def _box_polygon(domain) -> tuple[np.ndarray, np.ndarray]:
    (x0, y0), (x1, y1) = domain.lo, domain.hi
    verts = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=np.float64)
    tags = np.full(4, -1, dtype=np.int64)
    return verts, tags


def _clip_halfplane(verts, tags, m, nrm, tag):
    """Clip a convex tagged polygon by {z: (z - m) . nrm <= 0}."""
    h = (verts - m) @ nrm
    k = len(verts)
    out_v: list = []
    out_t: list = []
    for a in range(k):
        b = (a + 1) % k
        ha, hb = h[a], h[b]
        if ha <= 0.0:
            out_v.append(verts[a])
            out_t.append(tags[a])
            if hb > 0.0:  # leaving: cut point starts an edge along the bisector
                t = ha / (ha - hb)
                out_v.append(verts[a] + t * (verts[b] - verts[a]))
                out_t.append(tag)
        elif hb <= 0.0:  # entering: cut point continues the original edge
            t = ha / (ha - hb)
            out_v.append(verts[a] + t * (verts[b] - verts[a]))
            out_t.append(tags[a])
    if not out_v:
        return np.empty((0, 2)), np.empty(0, dtype=np.int64)
    return np.asarray(out_v), np.asarray(out_t, dtype=np.int64)


def _clipped_cell(ps: PointSet, i: int, cand: np.ndarray):
    """Cell of point i clipped to the box; returns (verts, tags)."""
    verts, tags = _box_polygon(ps.domain)
    xi = ps.points[i]
    for j in cand:
        xj = ps.points[j]
        mid = 0.5 * (xi + xj)
        nrm = xj - xi
        # The bisector cannot reach the current polygon if it lies farther
        # than every vertex.
        d_half = 0.5 * np.linalg.norm(nrm)
        vmax = np.max(np.linalg.norm(verts - xi, axis=1))
        if d_half > vmax + TOL_GEOM:
            continue
        verts, tags = _clip_halfplane(verts, tags, mid, nrm, int(j))
        if len(verts) == 0:
            break
    return verts, tags


def _cells(ps: PointSet):
    """Yield (i, verts, tags) for every point, candidates sorted by distance."""
    tree = cKDTree(ps.points)
    radius = 2.0 * ps.R + 4.0 * TOL_GEOM
    for i in range(len(ps)):
        cand = tree.query_ball_point(ps.points[i], radius)
        cand = [j for j in cand if j != i]
        d2 = np.sum((ps.points[cand] - ps.points[i]) ** 2, axis=1) if cand else []
        order = sorted(range(len(cand)), key=lambda k: (d2[k], cand[k]))
        yield i, *_clipped_cell(ps, i, np.asarray([cand[k] for k in order], dtype=np.int64))


def _facet_lengths(verts, tags) -> dict[int, float]:
    out: dict[int, float] = {}
    k = len(verts)
    for a in range(k):
        t = int(tags[a])
        if t < 0:
            continue
        b = (a + 1) % k
        out[t] = out.get(t, 0.0) + float(np.linalg.norm(verts[b] - verts[a]))
    return out


def build_voronoi_edges(ps: PointSet) -> EdgeSet:
    """Pairs whose box-clipped Voronoi cells share a facet longer than tol."""
    if ps.dim != 2:
        raise GraphError("Voronoi edges are only built in 2D")
    if len(ps) < 3:
        raise GraphError("need at least 3 points")
    upairs = []
    for i, verts, tags in _cells(ps):
        for j, length in _facet_lengths(verts, tags).items():
            # Decide each pair once, from the smaller index's construction.
            if i < j and length > TOL_GEOM:
                upairs.append((i, j))
    return _finish_edgeset(np.asarray(upairs, dtype=np.int64), ps)


def voronoi_cell_areas(ps: PointSet) -> CellTable:
    """Areas of box-clipped Voronoi cells (rasterization / L1 use only)."""
    if ps.dim != 2:
        raise GraphError("Voronoi cells are only built in 2D")
    areas = np.zeros(len(ps))
    for i, verts, _tags in _cells(ps):
        if len(verts) >= 3:
            x, y = verts[:, 0], verts[:, 1]
            areas[i] = 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
    return CellTable(areas=areas)


# ---------------------------------------------------------------------------
# k-NN edges
# ---------------------------------------------------------------------------

def build_knn_edges(ps: PointSet, k: int) -> EdgeSet:
    """Symmetrized k-nearest-neighbor graph, ties broken by smaller index."""
    n = len(ps)
    if not (1 <= k < n):
        raise GraphError("need 1 <= k < number of points")
    tree = cKDTree(ps.points)
    query_k = min(n, k + 9)
    dists, idx = tree.query(ps.points, k=query_k)
    upairs = set()
    for i in range(n):
        cand = [(dists[i, c], int(idx[i, c])) for c in range(query_k) if idx[i, c] != i]
        if query_k < n and len(cand) >= k and cand[-1][0] <= cand[k - 1][0] + TOL_GEOM:
            # Tie shell may extend past the query window: fall back to full sort.
            d_all = np.linalg.norm(ps.points - ps.points[i], axis=1)
            cand = sorted((float(d_all[j]), j) for j in range(n) if j != i)
        else:
            cand.sort()
        for _d, j in cand[:k]:
            upairs.add((min(i, j), max(i, j)))
    return _finish_edgeset(np.asarray(sorted(upairs), dtype=np.int64), ps)


# ---------------------------------------------------------------------------
# Queries and restriction
# ---------------------------------------------------------------------------

def max_edge_range(es: EdgeSet, ps: PointSet) -> float:
    """Exact maximum edge length (0 for an empty edge set)."""
    if len(es.pairs) == 0:
        return 0.0
    lengths = np.linalg.norm(ps.points[es.pairs[:, 0]] - ps.points[es.pairs[:, 1]], axis=1)
    return float(lengths.max())


def restrict_to_region(ps: PointSet, es: EdgeSet, region) -> tuple[np.ndarray, EdgeSet]:
    """Indices inside the region and the induced sub-edge-set.

    The returned index array maps new indices to original ones; the edge set
    is reindexed accordingly. An empty restriction is allowed.
    """
    mask = region_mask(region, ps.points)
    indices = np.flatnonzero(mask)
    remap = -np.ones(len(ps), dtype=np.int64)
    remap[indices] = np.arange(len(indices))
    keep = mask[es.pairs[:, 0]] & mask[es.pairs[:, 1]]
    sub_pairs = remap[es.pairs[keep]]
    if len(sub_pairs):
        max_deg = int(np.bincount(sub_pairs[:, 0], minlength=len(indices)).max())
        lengths = np.linalg.norm(
            ps.points[es.pairs[keep][:, 0]] - ps.points[es.pairs[keep][:, 1]], axis=1
        )
        m_range = float(lengths.max()) + TOL_GEOM
    else:
        max_deg, m_range = 0, TOL_GEOM
    sub = EdgeSet(pairs=sub_pairs, M=m_range, max_degree=max_deg, n_points=len(indices))
    return indices, sub


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def edgeset_to_json(es: EdgeSet) -> str:
    obj = {
        "M": float(f"{es.M:.17g}"),
        "max_degree": es.max_degree,
        "n_points": es.n_points,
        "pairs": [[int(i), int(j)] for i, j in es.unordered_pairs()],
    }
    return json.dumps(obj, separators=(",", ":"))


def edgeset_from_json(text: str) -> EdgeSet:
    try:
        obj = json.loads(text)
        upairs = np.asarray(obj["pairs"], dtype=np.int64).reshape(-1, 2)
        # n_points is our extension; the minimal schema carries only
        # M/max_degree/pairs, in which case trailing isolated vertices are
        # unrecoverable and the vertex count is inferred.
        inferred = int(upairs.max()) + 1 if len(upairs) else 0
        return EdgeSet(
            pairs=_symmetric_from_unordered(upairs),
            M=float(obj["M"]),
            max_degree=int(obj["max_degree"]),
            n_points=int(obj.get("n_points", inferred)),
        )
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise GraphError(f"malformed edge-set JSON: {exc}") from exc
