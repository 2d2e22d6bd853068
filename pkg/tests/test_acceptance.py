"""Acceptance suite: one test per criterion, each printing a PASS line with
its measured quantities. Tolerances are pinned here, not configurable."""

import time
from pathlib import Path

import numpy as np
import pytest

from stochat.cellprob import (
    CubeSpec,
    JumpDatum,
    SearchBudget,
    anisotropy_sweep,
    bulk_cell_problem,
    direction_set,
    ell_sweep,
    surface_cell_problem,
)
from stochat.energy import (
    EnergyParams,
    bulk_energy,
    closed_form_v,
    surface_energy,
    total_energy,
    truncate_field,
    weak_membrane_energy,
)
from stochat.graph import build_voronoi_edges
from stochat.lattice import BoxDomain, generate_periodic, generate_random_parking
from stochat.solver import alternating_minimize, solve_u_step, solve_v_step

from conftest import make_random_instance
from test_cellprob import centered_cube, oracle_surface_min

GOLDEN = Path(__file__).parent / "golden"


def report(num, text):
    print(f"\nACCEPTANCE {num}: PASS — {text}")


@pytest.fixture(scope="module")
def grid26():
    ps = generate_periodic(BoxDomain.square(26.0), 1.0)
    return ps, build_voronoi_edges(ps)


def test_criterion_1_weak_membrane_identity():
    """min_v [bulk + well] equals the weak-membrane energy; the closed-form
    v attains it (1e-10 relative, 100 instances, < 10 s)."""
    t0 = time.time()
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(100):
        ps, es, u, _ = make_random_instance(rng, n_side=int(rng.integers(3, 6)))
        assert len(ps) <= 50
        p = EnergyParams(eps=float(rng.uniform(0.3, 2.0)), beta=float(rng.uniform(0.3, 3.0)))
        # Exact v-solve of the diagonal quadratic bulk + well.
        s = np.zeros(len(ps))
        du = u[es.pairs[:, 0]] - u[es.pairs[:, 1]]
        np.add.at(s, es.pairs[:, 0], du * du)
        c_b = p.eps ** (ps.dim - 2)
        c_w = p.beta * p.eps ** (ps.dim - 1)
        v_star = np.clip(c_w / (c_b * s + c_w), 0.0, 1.0)
        attained = bulk_energy(ps, es, u, v_star, p) + surface_energy(ps, es, v_star, p)[0]
        target = weak_membrane_energy(ps, es, u, p, alpha=p.beta)
        rel = abs(attained - target) / max(abs(target), 1e-300)
        worst = max(worst, rel)
        assert rel <= 1e-10
        v_cf = closed_form_v(ps, es, u, p)
        att_cf = bulk_energy(ps, es, u, v_cf, p) + surface_energy(ps, es, v_cf, p)[0]
        assert abs(att_cf - target) / max(abs(target), 1e-300) <= 1e-10
    elapsed = time.time() - t0
    assert elapsed < 10.0
    report(1, f"weak-membrane identity on 100 instances, worst rel err {worst:.2e}, {elapsed:.1f}s")


def test_criterion_2_sandwich_inequalities():
    """total(gamma=0) >= weak membrane at alpha=beta, and the edge-vs-well
    bound, on 1000 random (u, v) pairs (< 5 s)."""
    t0 = time.time()
    rng = np.random.default_rng(202)
    checked = 0
    for _ in range(20):
        ps, es, _, _ = make_random_instance(rng, n_side=4)
        p = EnergyParams(eps=float(rng.uniform(0.4, 1.6)), beta=float(rng.uniform(0.3, 2.5)))
        for _ in range(50):
            u = rng.normal(size=len(ps))
            v = rng.random(len(ps))
            total = total_energy(ps, es, u, v, p).total
            g = weak_membrane_energy(ps, es, u, p, alpha=p.beta)
            assert total >= g - 1e-10
            dv = v[es.pairs[:, 0]] - v[es.pairs[:, 1]]
            assert float(np.sum(dv ** 2)) <= 2 * es.max_degree * float(np.sum((v - 1) ** 2)) + 1e-10
            checked += 1
    elapsed = time.time() - t0
    assert checked == 1000 and elapsed < 5.0
    report(2, f"sandwich + edge-vs-well on {checked} pairs, {elapsed:.1f}s")


def test_criterion_3_truncation_monotonicity():
    """F(T_k u, v) <= F(u, v) + 1e-12 on 100 instances x 5 levels."""
    rng = np.random.default_rng(303)
    for _ in range(100):
        ps, es, u, v = make_random_instance(rng, n_side=4)
        p = EnergyParams(eps=float(rng.uniform(0.5, 1.5)), beta=float(rng.uniform(0.3, 2.0)))
        base = total_energy(ps, es, u, v, p).total
        for k in rng.uniform(0.0, 3.0, size=5):
            assert total_energy(ps, es, truncate_field(u, k), v, p).total <= base + 1e-12
    report(3, "truncation monotonicity on 100 instances x 5 levels")


def test_criterion_4_bulk_exactness(grid26):
    """Z^2 bulk density at xi=e1, t=16 equals 1.0 +- 1e-8; quadratic-form
    identities to 1e-8 (< 30 s). Oracle: the affine candidate contributes
    (1/2) sum over the four unit directions <xi, dir>^2 = |xi|^2 per site."""
    t0 = time.time()
    ps, es = grid26
    cube = centered_cube(ps, es, 16.0)
    res = bulk_cell_problem(ps, es, [1.0, 0.0], cube)
    assert abs(res.density - 1.0) <= 1e-8

    def dens(xi):
        return bulk_cell_problem(ps, es, xi, cube).density

    xi = np.array([0.8, -0.4])
    eta = np.array([0.1, 0.9])
    assert abs(dens(1.5 * xi) - 2.25 * dens(xi)) <= 1e-8
    assert abs(dens(xi + eta) + dens(xi - eta) - 2 * dens(xi) - 2 * dens(eta)) <= 1e-8
    elapsed = time.time() - t0
    assert elapsed < 30.0
    report(4, f"bulk density(e1, t=16) = {res.density:.12f}, identities to 1e-8, {elapsed:.1f}s")


def test_criterion_5_surface_oracle_equivalence():
    """Exhaustive-budget heuristic equals brute-force enumeration with exact
    inner solves on 20 tiny instances (< 2 min)."""
    t0 = time.time()
    instances = []
    grid13 = generate_periodic(BoxDomain.square(13.0), 1.0)
    diag = (np.sqrt(0.5), np.sqrt(0.5))
    for nu in [(1.0, 0.0), (0.0, 1.0), diag, (-np.sqrt(0.5), np.sqrt(0.5))]:
        instances.append((grid13, 5.0, nu, 0.0))
    for seed, nu in [(0, (0.0, 1.0)), (2, (1.0, 0.0)), (3, (0.0, 1.0)), (5, diag),
                     (6, (1.0, 0.0)), (7, (0.0, 1.0)), (8, diag), (9, (1.0, 0.0))]:
        ps = generate_random_parking(BoxDomain.square(16.0), 1.0, seed)
        instances.append((ps, None, nu, 0.0))
    # Shifted sides and off-lattice centers vary the membership pattern.
    for t, nu, cshift in [(4.7, (1.0, 0.0), 0.0), (4.7, (0.0, 1.0), 0.0),
                          (4.5, diag, 0.0), (5.3, diag, 0.0),
                          (5.0, (1.0, 0.0), 0.3), (5.0, (0.0, 1.0), 0.3),
                          (4.8, diag, 0.2), (5.1, diag, 0.1)]:
        instances.append((grid13, t, nu, cshift))

    assert len(instances) == 20
    n_exhaustive = 0
    for ps, t, nu, cshift in instances:
        es = build_voronoi_edges(ps)
        side = t if t is not None else 4 * es.M + 0.05
        mid = 0.5 * (np.asarray(ps.domain.lo) + np.asarray(ps.domain.hi)) + cshift
        cube = CubeSpec(tuple(mid), nu, side, float(es.M))
        expect, n_free = oracle_surface_min(ps, es, cube, beta=1.0)
        assert n_free <= 12
        res = surface_cell_problem(
            ps, es, JumpDatum(a=1.0), cube, SearchBudget(exhaustive_max_sites=12, seed=7)
        )
        assert res.candidate["kind"] == "exhaustive"
        assert abs(res.raw_energy - expect) <= 1e-10
        n_exhaustive += 1
    elapsed = time.time() - t0
    assert elapsed < 120.0
    report(5, f"oracle equivalence on {n_exhaustive} tiny instances, {elapsed:.1f}s")


def test_criterion_6_jump_opening_independence(grid26):
    """phi(a=1) equals phi(a=7) exactly on 10 instances."""
    ps26, es26 = grid26
    cases = []
    for t in (12.0, 16.0):
        for nu in [(1.0, 0.0), (0.0, 1.0), (np.sqrt(0.5), np.sqrt(0.5))]:
            cases.append((ps26, es26, t, nu))
    for seed in (1, 2, 3, 4):
        ps = generate_random_parking(BoxDomain.square(24.0), 1.0, seed)
        cases.append((ps, build_voronoi_edges(ps), 14.0, (1.0, 0.0)))
    assert len(cases) == 10
    for ps, es, t, nu in cases:
        cube = centered_cube(ps, es, t, nu=nu)
        d1 = surface_cell_problem(ps, es, JumpDatum(a=1.0), cube, SearchBudget(seed=3)).density
        d7 = surface_cell_problem(ps, es, JumpDatum(a=7.0), cube, SearchBudget(seed=3)).density
        assert d1 == d7
    report(6, "jump-opening independence exact on 10 instances")


def test_criterion_7_anisotropy_contrast():
    """Periodic max/min ratio >= 1.2 at t=24 (16 directions); random parking
    CoV of direction means <= 0.10 with CoV(t=24) <= CoV(t=12) on a shared
    seed set (< 15 min on <= 8 cores)."""
    import os

    t0 = time.time()
    workers = min(8, os.cpu_count() or 1)
    dirs = direction_set(16)

    _, per = anisotropy_sweep("periodic", dirs, 24.0, 1, seed=0, workers=1)
    assert per["ratio_max_min"] >= 1.2

    _, p24 = anisotropy_sweep("parking", dirs, 24.0, 8, seed=2024, workers=workers)
    _, p12 = anisotropy_sweep("parking", dirs, 12.0, 8, seed=2024, workers=workers)
    assert p24["cov"] <= 0.10
    assert p24["cov"] <= p12["cov"]
    elapsed = time.time() - t0
    assert elapsed < 900.0
    report(
        7,
        f"periodic ratio {per['ratio_max_min']:.3f} >= 1.2; parking CoV(24) "
        f"{p24['cov']:.4f} <= 0.10 and <= CoV(12) {p12['cov']:.4f}, {elapsed:.0f}s",
    )


def test_criterion_8_ell_sweep_bounds(grid26):
    """Coarse-mesh inequalities for ell in {1,2,4,8} on Z^2: every evaluated
    feasible pair dominates its weak-membrane energy, planar constructions
    stay below the interface bound, and phi_ell/ell moves <= 30% from ell=4
    to ell=8 (< 5 min)."""
    t0 = time.time()
    ps, es = grid26
    cube = centered_cube(ps, es, 16.0)
    _, diag = ell_sweep(ps, es, (1.0, 0.0), cube, [1.0, 2.0, 4.0, 8.0], SearchBudget(seed=8))
    for d in diag["per_ell"]:
        assert d["min_pair_margin"] >= -1e-10
        assert d["planar_surface_energy"] <= d["planar_interface_bound"] + 1e-10
    by_ell = {d["ell"]: d["density"] for d in diag["per_ell"]}
    r4, r8 = by_ell[4.0] / 4.0, by_ell[8.0] / 8.0
    change = abs(r8 - r4) / r4
    assert change <= 0.30
    elapsed = time.time() - t0
    assert elapsed < 300.0
    report(8, f"ell-sweep inequalities hold; phi_ell/ell change 4->8 is {change:.1%}, {elapsed:.1f}s")


def test_criterion_9_solver_descent_and_stationarity():
    """Nonincreasing energy traces on 20 problems; finite-difference
    directional derivatives at both returned steps >= -1e-8."""
    rng = np.random.default_rng(909)
    for _ in range(20):
        ps, es, u0, v0 = make_random_instance(rng, n_side=4)
        v0 = np.clip(v0, 0.0, 1.0)
        g = rng.random(len(ps))
        p = EnergyParams(
            eps=float(rng.uniform(0.5, 1.5)),
            beta=float(rng.uniform(0.3, 2.0)),
            gamma=float(rng.uniform(0.05, 1.0)),
        )
        _, _, trace = alternating_minimize(ps, es, u0, v0, p, g=g, max_iter=50)
        slack = 1e-10 * max(1.0, abs(trace.energy_per_iter[0]))
        assert np.all(np.diff(trace.energy_per_iter) <= slack)

    ps, es, _, _ = make_random_instance(np.random.default_rng(11), n_side=5)
    rng2 = np.random.default_rng(12)
    g = rng2.random(len(ps))
    v_fix = rng2.random(len(ps))
    p = EnergyParams(eps=0.9, beta=1.1, gamma=0.4)
    u_star, _ = solve_u_step(ps, es, v_fix, p, g=g)
    v_star, _ = solve_v_step(ps, es, u_star, p)

    def full(u, v):
        return total_energy(ps, es, u, np.clip(v, 0, 1), p, g).total

    e_u = full(u_star, v_fix)
    e_v = full(u_star, v_star)
    h = 1e-6
    for _ in range(100):
        d = rng2.normal(size=len(ps))
        d /= np.linalg.norm(d)
        assert (full(u_star + h * d, v_fix) - e_u) / h >= -1e-8 * max(1, abs(e_u))
        # Feasible directions for the box-constrained v step.
        dv = np.where(v_star >= 1.0, -np.abs(d), np.where(v_star <= 0.0, np.abs(d), d))
        assert (full(u_star, v_star + h * dv) - e_v) / h >= -1e-8 * max(1, abs(e_v))
    report(9, "descent on 20 problems; 100 directional derivatives per step >= -1e-8")


def test_criterion_10_determinism_and_round_trips(tmp_path):
    """Byte-identical reruns, PGM round-trip error <= 1/255, and stable
    JSON/CSV golden files (timing column normalized)."""
    from stochat.cli import main
    from stochat.imaging import GrayImage, read_pgm, write_pgm
    from test_cli import make_step_image, strip_wall_ms

    # PGM round trip.
    rng = np.random.default_rng(10)
    img = GrayImage(9, 7, rng.random((7, 9)))
    f = tmp_path / "rt.pgm"
    for binary in (True, False):
        write_pgm(img, f, binary=binary)
        assert np.abs(read_pgm(f).pixels - img.pixels).max() <= 1.0 / 255 + 1e-12

    # Byte-identical segmentation rerun.
    src = tmp_path / "in.pgm"
    make_step_image(str(src), 20, 20)
    blobs = []
    for tag in ("1", "2"):
        u, v = tmp_path / f"u{tag}.pgm", tmp_path / f"v{tag}.pgm"
        assert main(["segment", "--image", str(src), "--out-u", str(u), "--out-v", str(v),
                     "--lattice", "parking", "--seed", "31", "--beta", "0.2",
                     "--gamma", "0.5"]) == 0
        blobs.append(u.read_bytes() + v.read_bytes())
    assert blobs[0] == blobs[1]

    # Golden lattice/graph JSON and sweep CSV.
    pts, edges, csv = tmp_path / "pts.json", tmp_path / "edges.json", tmp_path / "sweep.csv"
    assert main(["gen-lattice", "--lattice", "parking", "--size", "10", "--r", "1",
                 "--seed", "12", "--out", str(pts)]) == 0
    assert main(["build-graph", "--points", str(pts), "--out", str(edges)]) == 0
    assert main(["anisotropy", "--t", "6", "--nu-count", "4", "--replicas", "1",
                 "--lattice", "periodic", "--seed", "0", "--out", str(csv), "--no-fig"]) == 0
    assert pts.read_text(encoding="utf-8") == (GOLDEN / "lattice.json").read_text(encoding="utf-8")
    assert edges.read_text(encoding="utf-8") == (GOLDEN / "edges.json").read_text(encoding="utf-8")
    got = strip_wall_ms(csv.read_text(encoding="utf-8"))
    want = strip_wall_ms((GOLDEN / "sweep.csv").read_text(encoding="utf-8"))
    assert got == want
    report(10, "determinism, PGM round trip, and golden files stable")
