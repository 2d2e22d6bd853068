"""Finite-size estimators for homogenized bulk and surface densities.

A cell problem lives on a rotated cube inside the lattice domain. Membership
is half-open in the rotated frame, and localized energies sum per site over
cube points with full neighborhoods: fields are defined on the cube plus a
one-range halo and pinned to the reference datum outside the free interior.
With this convention the affine candidate on the integer lattice gives the
bulk estimator the exact value |xi|^2 at every cube size.

The surface estimator is a two-level scheme. The outer level searches binary
jump patterns u in {a, 0} with planar boundary data: planar initialization,
then first-improvement single-site flips in a seeded random scan order, or
exhaustive enumeration when the free-site count is within the configured
budget. The inner level is exact: the zero-bulk constraint forces v = 0 on
every vertex incident to a jump edge, and the remaining v-quadratic is
solved with the equality constraints eliminated. Reported surface densities
are upper bounds for the true finite-volume minimum unless the enumeration
was exhaustive.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from math import fsum

import numpy as np
import scipy.sparse as sp

from .graph import EdgeSet
from .lattice import TOL_GEOM, PointSet
from .regions import frame_from_normal
from .rng import replica_rng
from .solver import SolverError, solve_spd

__all__ = [
    "CubeSpec",
    "JumpDatum",
    "SearchBudget",
    "CellProblemResult",
    "CellProblemError",
    "range_and_degree_bound",
    "bulk_cell_problem",
    "surface_cell_problem",
    "s1_cell_problem",
    "anisotropy_sweep",
    "ell_sweep",
]

NU_TOL = 1e-12
INNER_RTOL = 1e-12
IMPROVE_TOL = 1e-12


class CellProblemError(ValueError):
    """Ill-posed cube, infeasible boundary data, or failed inner solve."""


@dataclass(frozen=True)
class CubeSpec:
    """Rotated cube: center, unit normal nu, side t, boundary-layer width delta."""

    center: tuple[float, ...]
    nu: tuple[float, ...]
    side: float
    delta: float

    def __post_init__(self):
        nu = np.asarray(self.nu, dtype=np.float64)
        if abs(np.linalg.norm(nu) - 1.0) > NU_TOL:
            raise CellProblemError("nu must be a unit vector (within 1e-12)")
        if not self.delta > 0:
            raise CellProblemError("delta must be positive")
        if not self.side > 4.0 * self.delta:
            raise CellProblemError("cube too small: side must exceed 4*delta")


@dataclass(frozen=True)
class JumpDatum:
    """Planar jump of opening a (upper trace) over lower trace b."""

    a: float
    b: float = 0.0


@dataclass(frozen=True)
class SearchBudget:
    """Outer-search knobs: tested flips cap is flips_per_site * free sites;
    instances with at most exhaustive_max_sites free sites are enumerated."""

    flips_per_site: int = 20
    exhaustive_max_sites: int = 0
    seed: int = 0


@dataclass(frozen=True)
class CellProblemResult:
    density: float
    raw_energy: float
    cube: CubeSpec
    candidate: dict
    trace: dict


def range_and_degree_bound(es: EdgeSet) -> float:
    """Range bound enlarged to also bound vertex degrees."""
    return max(es.M, float(es.max_degree))


# ---------------------------------------------------------------------------
# Cube geometry shared by all cell problems
# ---------------------------------------------------------------------------

@dataclass
class _CubeGraph:
    idx: np.ndarray          # reach points (cube + halo), original indices
    local: np.ndarray        # rotated coordinates of reach points
    in_cube: np.ndarray      # bool over reach
    wall_dist: np.ndarray    # side/2 - max|local|, over reach (negative outside)
    upairs: np.ndarray       # unordered pairs, reach-local indices
    cmult: np.ndarray        # per pair: number of endpoints inside the cube
    nbr_off: np.ndarray      # CSR offsets of ordered reach-local adjacency
    nbr_tgt: np.ndarray


def _build_cube_graph(ps: PointSet, es: EdgeSet, cube: CubeSpec) -> _CubeGraph:
    if ps.dim != 2:
        raise CellProblemError("cell problems are implemented in 2D")
    frame = frame_from_normal(cube.nu)
    center = np.asarray(cube.center)
    h = cube.side / 2.0

    # Cube plus halo must stay inside the domain so every cube point keeps
    # its full neighborhood.
    corners = center + np.array([[sx, sy] for sx in (-h, h) for sy in (-h, h)]) @ frame
    lo = np.asarray(ps.domain.lo) + es.M
    hi = np.asarray(ps.domain.hi) - es.M
    if not np.all((corners >= lo - TOL_GEOM) & (corners <= hi + TOL_GEOM)):
        raise CellProblemError("cube (plus one-range halo) must lie inside the domain")

    loc_all = (ps.points - center) @ frame.T
    in_cube_all = np.all((loc_all >= -h) & (loc_all < h), axis=1)
    cube_idx = np.flatnonzero(in_cube_all)
    if len(cube_idx) == 0:
        raise CellProblemError("cube contains no lattice points")

    offsets, targets = es.adjacency()
    halo = set()
    cube_set = set(cube_idx.tolist())
    for i in cube_idx:
        for j in targets[offsets[i]:offsets[i + 1]]:
            if int(j) not in cube_set:
                halo.add(int(j))
    idx = np.concatenate([cube_idx, np.asarray(sorted(halo), dtype=np.int64)])
    pos = -np.ones(len(ps), dtype=np.int64)
    pos[idx] = np.arange(len(idx))

    in_cube = np.zeros(len(idx), dtype=bool)
    in_cube[: len(cube_idx)] = True
    local = loc_all[idx]
    wall = h - np.max(np.abs(local), axis=1)

    keep = (pos[es.pairs[:, 0]] >= 0) & (pos[es.pairs[:, 1]] >= 0)
    lp = pos[es.pairs[keep]]
    up = lp[lp[:, 0] < lp[:, 1]]
    cmult = in_cube[up[:, 0]].astype(np.float64) + in_cube[up[:, 1]].astype(np.float64)
    used = cmult > 0
    up, cmult = up[used], cmult[used]

    # Reach-local ordered adjacency (for cut detection and interface maxima).
    both = np.concatenate([up, up[:, ::-1]])
    order = np.lexsort((both[:, 1], both[:, 0]))
    both = both[order]
    counts = np.bincount(both[:, 0], minlength=len(idx))
    nbr_off = np.concatenate(([0], np.cumsum(counts)))
    return _CubeGraph(idx, local, in_cube, wall, up, cmult, nbr_off, both[:, 1].copy())


def _quadratic_min(cg: _CubeGraph, w_pair: np.ndarray, w_diag: np.ndarray,
                   rhs_diag: np.ndarray, fixed: np.ndarray, values: np.ndarray):
    """Minimize sum_e w_e (x_i-x_j)^2 + sum_i w_diag_i x_i^2 - 2 rhs_i x_i
    over the non-fixed entries; returns the full vector."""
    n = len(cg.idx)
    free = np.flatnonzero(~fixed)
    x = values.copy()
    if len(free) == 0:
        return x
    fpos = -np.ones(n, dtype=np.int64)
    fpos[free] = np.arange(len(free))
    i, j = cg.upairs[:, 0], cg.upairs[:, 1]
    diag = w_diag.copy()
    np.add.at(diag, i, w_pair)
    np.add.at(diag, j, w_pair)
    b = rhs_diag.copy()
    ff = ~fixed[i] & ~fixed[j]
    fi_fixed = ~fixed[i] & fixed[j]
    fj_fixed = fixed[i] & ~fixed[j]
    np.add.at(b, i[fi_fixed], w_pair[fi_fixed] * values[j[fi_fixed]])
    np.add.at(b, j[fj_fixed], w_pair[fj_fixed] * values[i[fj_fixed]])
    rows = np.concatenate([fpos[i[ff]], fpos[j[ff]], np.arange(len(free))])
    cols = np.concatenate([fpos[j[ff]], fpos[i[ff]], np.arange(len(free))])
    vals = np.concatenate([-w_pair[ff], -w_pair[ff], diag[free]])
    A = sp.coo_matrix((vals, (rows, cols)), shape=(len(free), len(free))).tocsr()
    method = "dense" if len(free) <= 600 else "pcg"
    try:
        sol, _res = solve_spd(A, b[free], rtol=INNER_RTOL, method=method)
    except SolverError as exc:
        raise CellProblemError(f"inner quadratic solve failed: {exc}") from exc
    x[free] = sol
    return x


# ---------------------------------------------------------------------------
# Bulk cell problem
# ---------------------------------------------------------------------------

def bulk_cell_problem(ps: PointSet, es: EdgeSet, xi, cube: CubeSpec) -> CellProblemResult:
    """Minimize the per-site bulk energy with affine boundary data <xi, x-c>
    pinned on the delta-layer; density is energy / side^d."""
    if cube.delta < es.M - TOL_GEOM:
        raise CellProblemError("delta must be at least the edge range bound M")
    xi = np.asarray(xi, dtype=np.float64)
    cg = _build_cube_graph(ps, es, cube)
    frame = frame_from_normal(cube.nu)
    datum = cg.local @ (frame @ xi)  # <xi, x - center> in rotated coordinates
    free = cg.in_cube & (cg.wall_dist > cube.delta)
    fixed = ~free

    w_pair = 0.5 * cg.cmult  # (1/2) sum_{i in cube} sum_j (du)^2 as a form
    t0 = time.perf_counter()
    u = _quadratic_min(cg, w_pair, np.zeros(len(cg.idx)), np.zeros(len(cg.idx)), fixed, datum)
    raw = _pair_energy(cg, w_pair, u)
    raw_affine = _pair_energy(cg, w_pair, datum)
    wall_ms = 1000.0 * (time.perf_counter() - t0)

    d = ps.dim
    return CellProblemResult(
        density=raw / cube.side ** d,
        raw_energy=raw,
        cube=cube,
        candidate={
            "kind": "affine-dirichlet",
            "xi": tuple(float(x) for x in xi),
            "affine_energy": raw_affine,
            "n_free": int(free.sum()),
        },
        trace={"wall_ms": wall_ms},
    )


def _pair_energy(cg: _CubeGraph, w_pair: np.ndarray, x: np.ndarray) -> float:
    dx = x[cg.upairs[:, 0]] - x[cg.upairs[:, 1]]
    return fsum(w_pair * dx * dx)


# ---------------------------------------------------------------------------
# Surface cell problem
# ---------------------------------------------------------------------------

def _planar_pattern(cg: _CubeGraph) -> np.ndarray:
    """1 on the positive-nu side, 0 otherwise (reach-local)."""
    return (cg.local[:, 0] > 0).astype(np.int8)


def _cut_sites(cg: _CubeGraph, pattern: np.ndarray) -> np.ndarray:
    """In-cube sites incident to a jump edge (full neighborhoods)."""
    i, j = cg.upairs[:, 0], cg.upairs[:, 1]
    jump = pattern[i] != pattern[j]
    cut = np.zeros(len(cg.idx), dtype=bool)
    cut[i[jump]] = True
    cut[j[jump]] = True
    return cut & cg.in_cube


class _SurfaceProblem:
    """Inner v-solve and energy for a fixed cube; pattern varies outside."""

    def __init__(self, ps, es, cube, beta, w_well_scale=1.0, w_pair_scale=1.0):
        if cube.delta < es.M - TOL_GEOM:
            raise CellProblemError("delta must be at least the edge range bound M")
        self.cg = _build_cube_graph(ps, es, cube)
        self.cube = cube
        self.m_v = es.M
        cg = self.cg
        self.u_free = cg.in_cube & (cg.wall_dist > cube.delta)
        self.v_pinned_layer = ~cg.in_cube | (cg.wall_dist <= self.m_v)
        self.v_datum = (np.abs(cg.local[:, 0]) > self.m_v).astype(np.float64)
        self.w_well = 0.5 * beta * w_well_scale
        self.w_pair_form = 0.25 * beta * w_pair_scale * cg.cmult
        self.well_diag = np.where(cg.in_cube, self.w_well, 0.0)

    def feasible(self, cut: np.ndarray) -> bool:
        bad = cut & self.v_pinned_layer & (self.v_datum > 0.5)
        return not bool(bad.any())

    def solve_v(self, cut: np.ndarray) -> np.ndarray:
        cg = self.cg
        fixed = self.v_pinned_layer | cut
        values = self.v_datum.copy()
        values[cut] = 0.0
        v = _quadratic_min(cg, self.w_pair_form, self.well_diag, self.well_diag, fixed, values)
        viol = max(float(-v.min()), float(v.max() - 1.0), 0.0)
        if viol > 1e-6:
            raise CellProblemError(f"inner v-solve left [0,1] by {viol:g}")
        return np.clip(v, 0.0, 1.0)

    def energy(self, v: np.ndarray) -> float:
        cg = self.cg
        well = self.w_well * fsum((v[cg.in_cube] - 1.0) ** 2)
        dv = v[cg.upairs[:, 0]] - v[cg.upairs[:, 1]]
        return well + fsum(self.w_pair_form * dv * dv)

    def evaluate(self, pattern: np.ndarray):
        """(energy, v, cut) for a pattern, or None if infeasible."""
        cut = _cut_sites(self.cg, pattern)
        if not self.feasible(cut):
            return None
        v = self.solve_v(cut)
        return self.energy(v), v, cut


def _flip_search(prob, pattern0, objective, budget: SearchBudget):
    """First-improvement single-site flips over free sites, or exhaustive
    enumeration when the free-site count fits the budget.

    objective(pattern) returns a float or None (infeasible). Returns
    (pattern, value, info).
    """
    free_sites = np.flatnonzero(prob.u_free)
    n_free = len(free_sites)
    pattern = pattern0.copy()
    value = objective(pattern)
    if value is None:
        raise CellProblemError("infeasible boundary data: planar datum violates the v-layer")
    evals = 1
    accepted = 0
    kind = "planar"

    if 0 < n_free <= budget.exhaustive_max_sites:
        shifts = np.arange(n_free)
        for code in range(2 ** n_free):
            bits = ((code >> shifts) & 1).astype(np.int8)
            cand = pattern0.copy()
            cand[free_sites] = bits
            val = objective(cand)
            evals += 1
            if val is not None and val < value - IMPROVE_TOL:
                value = val
                pattern = cand
        return pattern, value, {"kind": "exhaustive", "evals": evals, "flips_accepted": 0,
                                "n_free": n_free}

    max_evals = budget.flips_per_site * max(n_free, 1)
    rng = replica_rng(budget.seed, 0)
    improved = True
    passes = 0
    while improved and evals < max_evals:
        improved = False
        passes += 1
        for s in rng.permutation(free_sites):
            if evals >= max_evals:
                break
            pattern[s] ^= 1
            val = objective(pattern)
            evals += 1
            if val is not None and val < value - IMPROVE_TOL:
                value = val
                accepted += 1
                improved = True
                kind = "planar+flips"
            else:
                pattern[s] ^= 1
    return pattern, value, {"kind": kind, "evals": evals, "flips_accepted": accepted,
                            "n_free": n_free, "passes": passes}


def surface_cell_problem(
    ps: PointSet,
    es: EdgeSet,
    jump: JumpDatum,
    cube: CubeSpec,
    budget: SearchBudget = SearchBudget(),
    beta: float = 1.0,
    ell: float = 1.0,
    on_candidate=None,
) -> CellProblemResult:
    """Estimate the surface density for a planar jump of normal cube.nu.

    The returned value is an upper bound for the finite-volume minimum
    (exact when the enumeration was exhaustive); it does not depend on the
    jump opening since only the jump pattern enters the constraint set.
    """
    if jump.a == jump.b:
        kind_note = "no-jump baseline"
    else:
        kind_note = None
    if ell <= 0:
        raise CellProblemError("ell must be positive")
    prob = _SurfaceProblem(ps, es, cube, beta, w_well_scale=ell, w_pair_scale=1.0 / ell)

    t0 = time.perf_counter()
    pattern0 = _planar_pattern(prob.cg) if jump.a != jump.b else np.zeros(len(prob.cg.idx), np.int8)

    cache: dict = {}

    def objective(pattern):
        key = pattern.tobytes()
        if key not in cache:
            out = prob.evaluate(pattern)
            cache[key] = None if out is None else out[0]
            if out is not None and on_candidate is not None:
                on_candidate(pattern, out[0], out[1], prob)
        return cache[key]

    pattern, value, info = _flip_search(prob, pattern0, objective, budget)
    wall_ms = 1000.0 * (time.perf_counter() - t0)
    d = ps.dim
    candidate = {
        "kind": info["kind"],
        "heuristic_upper_bound": info["kind"] != "exhaustive",
        "jump_a": float(jump.a),
        "jump_b": float(jump.b),
        "ell": float(ell),
        "flips_accepted": info["flips_accepted"],
        "n_free": info["n_free"],
    }
    if kind_note:
        candidate["note"] = kind_note
    return CellProblemResult(
        density=value / cube.side ** (d - 1),
        raw_energy=value,
        cube=cube,
        candidate=candidate,
        trace={"evals": info["evals"], "wall_ms": wall_ms},
    )


# ---------------------------------------------------------------------------
# Spin interface problem (s1)
# ---------------------------------------------------------------------------

class _SpinProblem:
    def __init__(self, ps, es, cube):
        if cube.delta < es.M - TOL_GEOM:
            raise CellProblemError("delta must be at least the edge range bound M")
        self.cg = _build_cube_graph(ps, es, cube)
        self.u_free = self.cg.in_cube & (self.cg.wall_dist > cube.delta)

    def interface_value(self, pattern: np.ndarray, alpha: float = 1.0) -> float:
        """I_alpha of the spin field w = 2*pattern - 1 (per-site max)."""
        cut = _cut_sites(self.cg, pattern)
        return 0.25 * alpha * 2.0 * float(cut.sum())


def s1_cell_problem(
    ps: PointSet,
    es: EdgeSet,
    nu,
    cube: CubeSpec,
    budget: SearchBudget = SearchBudget(),
) -> CellProblemResult:
    """Minimize the unit interface energy over spin fields with planar data."""
    nu = np.asarray(nu, dtype=np.float64)
    if np.linalg.norm(nu - np.asarray(cube.nu)) > 1e-9:
        cube = CubeSpec(cube.center, tuple(nu), cube.side, cube.delta)
    prob = _SpinProblem(ps, es, cube)
    t0 = time.perf_counter()
    pattern0 = _planar_pattern(prob.cg)

    def objective(pattern):
        return prob.interface_value(pattern)

    pattern, value, info = _flip_search(prob, pattern0, objective, budget)
    wall_ms = 1000.0 * (time.perf_counter() - t0)
    d = ps.dim
    return CellProblemResult(
        density=value / cube.side ** (d - 1),
        raw_energy=value,
        cube=cube,
        candidate={
            "kind": info["kind"],
            "heuristic_upper_bound": info["kind"] != "exhaustive",
            "flips_accepted": info["flips_accepted"],
            "n_free": info["n_free"],
            "pattern": pattern,
        },
        trace={"evals": info["evals"], "wall_ms": wall_ms},
    )


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

def direction_set(count: int) -> np.ndarray:
    """count equally spaced unit vectors with angles in [0, pi)."""
    if count < 2:
        raise CellProblemError("need at least 2 directions")
    ang = np.arange(count) * np.pi / count
    return np.stack([np.cos(ang), np.sin(ang)], axis=1)


def _sweep_row(kind, seed, nu, t, ell, res: CellProblemResult) -> dict:
    return {
        "lattice_kind": kind,
        "seed": int(seed),
        "nu_x": float(nu[0]),
        "nu_y": float(nu[1]),
        "t": float(t),
        "ell": float(ell),
        "density": res.density,
        "raw_energy": res.raw_energy,
        "candidate_kind": res.candidate["kind"],
        "flips_accepted": int(res.candidate.get("flips_accepted", 0)),
        "wall_ms": float(res.trace.get("wall_ms", 0.0)),
    }


def _replica_lattice(kind, t, seed, r, spacing, jitter, margin):
    from .graph import build_voronoi_edges
    from .lattice import BoxDomain, generate_jittered, generate_periodic, generate_random_parking

    # Rotated cubes reach t*sqrt(2) corner to corner; margin covers the halo.
    pad = 0.5 * t * (np.sqrt(2.0) - 1.0) + margin
    dom = BoxDomain.square(t + 2 * pad)
    if kind == "parking":
        ps = generate_random_parking(dom, r, seed)
    elif kind == "periodic":
        ps = generate_periodic(dom, spacing)
    elif kind == "jittered":
        ps = generate_jittered(dom, spacing, jitter, seed)
    else:
        raise CellProblemError(f"unknown lattice kind {kind!r}")
    return ps, build_voronoi_edges(ps)


def _anisotropy_replica(args):
    (kind, t, rep_seed, r, spacing, jitter, margin, beta, budget_flips, directions, delta) = args
    from .rng import replica_seed

    ps, es = _replica_lattice(kind, t, rep_seed, r, spacing, jitter, margin)
    mid = 0.5 * (np.asarray(ps.domain.lo) + np.asarray(ps.domain.hi))
    if kind in ("periodic", "jittered"):
        # Center the cube on a lattice site, as in the origin-centered cubes
        # of the homogenization formulas.
        mid = np.round(mid / spacing) * spacing
    center = tuple(mid)
    dlt = es.M if delta is None else delta
    rows = []
    for k, nu in enumerate(directions):
        cube = CubeSpec(center, tuple(nu), float(t), float(dlt))
        budget = SearchBudget(flips_per_site=budget_flips, seed=replica_seed(rep_seed, k))
        res = surface_cell_problem(ps, es, JumpDatum(a=1.0), cube, budget, beta=beta)
        rows.append(_sweep_row(kind, rep_seed, nu, t, 1.0, res))
    return rows


def anisotropy_sweep(
    kind: str,
    directions: np.ndarray,
    t: float,
    replicas: int,
    *,
    r: float = 1.0,
    spacing: float = 1.0,
    jitter: float = 0.2,
    seed: int = 0,
    beta: float = 1.0,
    delta: float | None = None,
    budget_flips: int = 20,
    margin: float = 4.0,
    workers: int | None = None,
) -> tuple[list[dict], dict]:
    """Surface-density estimates per (direction, replica) plus spread summary.

    Returns (rows, summary) where summary holds per-direction means/stds, the
    max/min ratio of direction means and their coefficient of variation.
    """
    directions = np.asarray(directions, dtype=np.float64)
    if directions.ndim != 2 or len(directions) < 2:
        raise CellProblemError("need at least 2 directions")
    if replicas < 1:
        raise CellProblemError("need at least 1 replica")
    from .rng import replica_seed

    tasks = [
        (kind, t, replica_seed(seed, rep) if kind != "periodic" else 0,
         r, spacing, jitter, margin, beta, budget_flips, directions, delta)
        for rep in range(replicas)
    ]
    rows: list[dict] = []
    if workers is not None and workers > 1 and len(tasks) > 1:
        import multiprocessing as mp

        # fork avoids re-importing __main__, which breaks for stdin scripts;
        # results are keyed by explicit seeds so scheduling cannot matter.
        method = "fork" if "fork" in mp.get_all_start_methods() else "spawn"
        with mp.get_context(method).Pool(min(workers, len(tasks))) as pool:
            for batch in pool.map(_anisotropy_replica, tasks):
                rows.extend(batch)
    else:
        for task in tasks:
            rows.extend(_anisotropy_replica(task))

    rows.sort(key=lambda q: (q["seed"], q["nu_x"], q["nu_y"]))
    means, stds = [], []
    for k in range(len(directions)):
        vals = np.asarray([
            q["density"] for q in rows
            if abs(q["nu_x"] - directions[k, 0]) < 1e-12 and abs(q["nu_y"] - directions[k, 1]) < 1e-12
        ])
        means.append(float(vals.mean()))
        stds.append(float(vals.std()))
    means_arr = np.asarray(means)
    summary = {
        "direction_means": means,
        "direction_stds": stds,
        "ratio_max_min": float(means_arr.max() / means_arr.min()),
        "cov": float(means_arr.std() / means_arr.mean()),
    }
    return rows, summary


def ell_sweep(
    ps: PointSet,
    es: EdgeSet,
    nu,
    cube: CubeSpec,
    ell_values,
    budget: SearchBudget = SearchBudget(),
    beta: float = 1.0,
) -> tuple[list[dict], dict]:
    """Surface density at mesh-to-eps ratios ell, with the two-sided bracket
    beta*ell*s1 <= phi_ell <= beta*(ell + M/ell)*s1 and candidate-level
    inequality margins (weak-membrane lower bound on every evaluated pair,
    interface upper bound on the planar construction)."""
    ell_values = [float(x) for x in ell_values]
    if any(l <= 0 for l in ell_values):
        raise CellProblemError("ell values must be positive")
    nu = np.asarray(nu, dtype=np.float64)
    if np.linalg.norm(nu - np.asarray(cube.nu)) > 1e-9:
        cube = replace(cube, nu=tuple(nu))
    m_bound = range_and_degree_bound(es)

    s1 = s1_cell_problem(ps, es, nu, cube, budget)
    s1_hat = s1.density
    w_planar = _planar_pattern(_build_cube_graph(ps, es, cube))

    rows: list[dict] = []
    diag = {"s1_hat": s1_hat, "m_bound": m_bound, "per_ell": []}
    for ell in ell_values:
        margins: list[float] = []

        def on_candidate(pattern, value, v, prob, _ell=ell, _margins=margins):
            # Zero-bulk pairs: total coarse-mesh energy is the surface part;
            # compare with the weak-membrane energy of u at alpha=beta*ell.
            g_val = _weak_membrane_cube(prob.cg, pattern, beta * _ell)
            _margins.append(value - g_val)

        res = surface_cell_problem(ps, es, JumpDatum(a=1.0), cube, budget,
                                   beta=beta, ell=ell, on_candidate=on_candidate)
        # Planar construction: v = 0 exactly on sites incident to a spin flip
        # of the planar field (the rule is global, halo included).
        prob = _SurfaceProblem(ps, es, cube, beta, w_well_scale=ell, w_pair_scale=1.0 / ell)
        i, j = prob.cg.upairs[:, 0], prob.cg.upairs[:, 1]
        jump = w_planar[i] != w_planar[j]
        cut_all = np.zeros(len(prob.cg.idx), dtype=bool)
        cut_all[i[jump]] = True
        cut_all[j[jump]] = True
        v_constr = np.ones(len(prob.cg.idx))
        v_constr[cut_all] = 0.0
        f_s_ell = prob.energy(v_constr)
        i_upper = 0.25 * beta * (ell + m_bound / ell) * 2.0 * float((cut_all & prob.cg.in_cube).sum())
        row = _sweep_row(ps.kind, ps.seed, nu, cube.side, ell, res)
        rows.append(row)
        diag["per_ell"].append({
            "ell": ell,
            "density": res.density,
            "bracket_lo": beta * ell * s1_hat,
            "bracket_hi": beta * (ell + m_bound / ell) * s1_hat,
            "min_pair_margin": min(margins) if margins else 0.0,
            "planar_surface_energy": f_s_ell,
            "planar_interface_bound": i_upper,
        })
    return rows, diag


def _weak_membrane_cube(cg: _CubeGraph, pattern: np.ndarray, alpha: float) -> float:
    """Per-site weak-membrane energy of the binary field over the cube."""
    u = pattern.astype(np.float64)
    i, j = cg.upairs[:, 0], cg.upairs[:, 1]
    du2 = (u[i] - u[j]) ** 2
    s = np.zeros(len(cg.idx))
    np.add.at(s, i, du2)
    np.add.at(s, j, du2)
    t = s[cg.in_cube]
    return 0.5 * fsum(t / (1.0 + t / alpha))
