"""Command-line front-end.

Subcommands cover lattice/graph generation, PGM segmentation, cell problems,
and the anisotropy / mesh-ratio sweeps. Every command validates its
configuration before touching the filesystem and fails with a one-line
machine-parsable error; exit codes: 0 success, 2 config error, 3 numerical
failure, 4 I/O error. STOCHAT_THREADS caps the worker count for sweeps.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import cellprob, graph, imaging, lattice, report, solver
from .energy import EnergyError, EnergyParams

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


class ConfigError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


@dataclass
class RunConfig:
    """Validated per-command parameters mirrored from flags."""

    command: str
    options: dict

    def __getattr__(self, name):
        try:
            return self.options[name]
        except KeyError as exc:
            raise AttributeError(name) from exc


def _vector(text: str, name: str) -> np.ndarray:
    try:
        parts = [float(x) for x in text.split(",")]
    except ValueError as exc:
        raise ConfigError(f"{name} must be comma-separated numbers: {exc}") from exc
    if len(parts) != 2:
        raise ConfigError(f"{name} must have exactly 2 components")
    return np.asarray(parts)


def _unit(text: str, name: str) -> np.ndarray:
    v = _vector(text, name)
    n = np.linalg.norm(v)
    if n == 0:
        raise ConfigError(f"{name} must be nonzero")
    return v / n


def _workers(requested: int | None) -> int:
    cap = os.environ.get("STOCHAT_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    if limit < 1:
        raise ConfigError("STOCHAT_THREADS must be a positive integer")
    return max(1, min(requested or limit, limit))


def _load_pointset(path) -> lattice.PointSet:
    with open(path, "r", encoding="utf-8") as fh:
        return lattice.pointset_from_json(fh.read())


def _load_edgeset(path) -> graph.EdgeSet:
    with open(path, "r", encoding="utf-8") as fh:
        return graph.edgeset_from_json(fh.read())


def _generate(cfg) -> lattice.PointSet:
    dom = lattice.BoxDomain.square(cfg["size"], cfg.get("dim", 2))
    kind = cfg["lattice"]
    if kind == "parking":
        return lattice.generate_random_parking(dom, cfg["r"], cfg["seed"])
    if kind == "periodic":
        return lattice.generate_periodic(dom, cfg["spacing"])
    if kind == "jittered":
        return lattice.generate_jittered(dom, cfg["spacing"], cfg["jitter"], cfg["seed"])
    raise ConfigError(f"unknown lattice kind {kind!r}")


def _lattice_graph_from_flags(ns, t: float) -> tuple[lattice.PointSet, graph.EdgeSet, tuple]:
    """Generate (or load) the lattice and edges for a cell-problem command."""
    if ns.points:
        ps = _load_pointset(ns.points)
        es = _load_edgeset(ns.edges_file) if ns.edges_file else graph.build_voronoi_edges(ps)
        mid = 0.5 * (np.asarray(ps.domain.lo) + np.asarray(ps.domain.hi))
        return ps, es, tuple(mid)
    pad = 0.5 * t * (np.sqrt(2.0) - 1.0) + 4.0 * max(ns.r, ns.spacing)
    dom = lattice.BoxDomain.square(t + 2 * pad)
    if ns.lattice == "parking":
        ps = lattice.generate_random_parking(dom, ns.r, ns.seed)
    elif ns.lattice == "periodic":
        ps = lattice.generate_periodic(dom, ns.spacing)
    else:
        ps = lattice.generate_jittered(dom, ns.spacing, ns.jitter, ns.seed)
    mid = 0.5 * (np.asarray(dom.lo) + np.asarray(dom.hi))
    if ns.lattice in ("periodic", "jittered"):
        mid = np.round(mid / ns.spacing) * ns.spacing
    if ns.edges == "knn":
        es = graph.build_knn_edges(ps, ns.k)
    else:
        es = graph.build_voronoi_edges(ps)
    return ps, es, tuple(mid)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _cmd_gen_lattice(ns) -> int:
    cfg = RunConfig("gen-lattice", vars(ns))
    if ns.lattice in ("periodic", "jittered") and ns.spacing <= 0:
        raise ConfigError("--spacing must be positive")
    if ns.lattice == "parking" and ns.r <= 0:
        raise ConfigError("--r must be positive")
    ps = _generate(cfg.options)
    text = lattice.pointset_to_json(ps)
    with open(ns.out, "w", encoding="utf-8") as fh:
        fh.write(text + "\n")
    print(f"wrote {ns.out}: {len(ps)} points, kind={ps.kind}")
    return EXIT_OK


def _cmd_build_graph(ns) -> int:
    ps = _load_pointset(ns.points)
    if ns.edges == "knn":
        if ns.k is None:
            raise ConfigError("--k is required for --edges knn")
        es = graph.build_knn_edges(ps, ns.k)
    else:
        es = graph.build_voronoi_edges(ps)
    with open(ns.out, "w", encoding="utf-8") as fh:
        fh.write(graph.edgeset_to_json(es) + "\n")
    print(f"wrote {ns.out}: {es.n_edges} edges, M={es.M:.6g}, max_degree={es.max_degree}")
    return EXIT_OK


def _cmd_check(ns) -> int:
    ps = _load_pointset(ns.points)
    rep = lattice.check_admissibility(ps)
    out = {
        "min_pair_dist": rep.min_pair_dist,
        "max_cover_dist": rep.max_cover_dist,
        "pass_hardcore": rep.pass_hardcore,
        "pass_covering": rep.pass_covering,
    }
    ok = rep.pass_hardcore and rep.pass_covering
    if ns.edges_file:
        es = _load_edgeset(ns.edges_file)
        sym = set(map(tuple, es.pairs.tolist()))
        symmetric = all((j, i) in sym for i, j in sym)
        max_edge = graph.max_edge_range(es, ps)
        out["edges_symmetric"] = symmetric
        out["max_edge_range"] = max_edge
        out["range_bound_ok"] = bool(max_edge < es.M)
        out["degree_bound_ok"] = bool(es.max_degree <= graph.MAX_DEGREE_HARD_LIMIT)
        ok = ok and symmetric and out["range_bound_ok"] and out["degree_bound_ok"]
    out["pass"] = bool(ok)
    print(json.dumps(out))
    return EXIT_OK if ok else EXIT_NUMERIC


def _cmd_segment(ns) -> int:
    try:
        img = imaging.read_pgm(ns.image)
    except FileNotFoundError as exc:
        raise exc
    params = EnergyParams(eps=ns.eps, beta=ns.beta, gamma=ns.gamma, ell=ns.ell)
    # The lattice domain matches the image aspect exactly by construction.
    dom = lattice.BoxDomain((0.0, 0.0), (float(img.width), float(img.height)))
    if ns.lattice == "parking":
        ps = lattice.generate_random_parking(dom, ns.r, ns.seed)
    elif ns.lattice == "periodic":
        ps = lattice.generate_periodic(dom, ns.spacing)
    else:
        ps = lattice.generate_jittered(dom, ns.spacing, ns.jitter, ns.seed)
    if ns.edges == "knn":
        es = graph.build_knn_edges(ps, ns.k)
    else:
        es = graph.build_voronoi_edges(ps)
    g = imaging.sample_image_to_lattice(img, ps, stretch=ns.stretch)
    u0 = g.copy()
    v0 = np.ones(len(ps))
    u, v, trace = solver.alternating_minimize(
        ps, es, u0, v0, params, g=g, tol=ns.tol, max_iter=ns.max_iter
    )
    u_img = imaging.rasterize_field(u, ps, img.width, img.height, stretch=ns.stretch)
    v_img = imaging.rasterize_field(v, ps, img.width, img.height, stretch=ns.stretch)
    imaging.write_pgm(u_img, ns.out_u, binary=not ns.ascii)
    imaging.write_pgm(v_img, ns.out_v, binary=not ns.ascii)
    if ns.out_csv:
        with open(ns.out_csv, "w", encoding="utf-8") as fh:
            fh.write("iter,total_energy\n")
            for k, e in enumerate(trace.energy_per_iter):
                fh.write(f"{k},{e:.17g}\n")
    if ns.fig:
        report.save_segment_figure(u_img, v_img, img, ns.fig)
    print(
        f"segment: {trace.iterations} iterations, converged={trace.converged}, "
        f"final energy {trace.energy_per_iter[-1]:.8g}, mean v {float(np.mean(v)):.4f}"
    )
    return EXIT_OK


def _cmd_cellprob_bulk(ns) -> int:
    ps, es, center = _lattice_graph_from_flags(ns, ns.t)
    delta = ns.delta if ns.delta is not None else es.M
    cube = cellprob.CubeSpec(center, tuple(_unit(ns.nu, "--nu")), ns.t, float(delta))
    xi = _vector(ns.xi, "--xi")
    res = cellprob.bulk_cell_problem(ps, es, xi, cube)
    nu = np.asarray(cube.nu)
    row = {
        "lattice_kind": ps.kind,
        "seed": ps.seed,
        "nu_x": nu[0],
        "nu_y": nu[1],
        "t": ns.t,
        "ell": 1.0,
        "density": res.density,
        "raw_energy": res.raw_energy,
        "candidate_kind": res.candidate["kind"],
        "flips_accepted": 0,
        "wall_ms": res.trace["wall_ms"],
    }
    report.write_csv([row], ns.out)
    print(f"bulk density {res.density:.12g} (raw {res.raw_energy:.12g}) -> {ns.out}")
    return EXIT_OK


def _cmd_cellprob_surface(ns) -> int:
    ps, es, center = _lattice_graph_from_flags(ns, ns.t)
    delta = ns.delta if ns.delta is not None else es.M
    nu = _unit(ns.nu, "--nu")
    cube = cellprob.CubeSpec(center, tuple(nu), ns.t, float(delta))
    budget = cellprob.SearchBudget(
        flips_per_site=ns.budget, exhaustive_max_sites=ns.exhaustive_max, seed=ns.seed
    )
    res = cellprob.surface_cell_problem(
        ps, es, cellprob.JumpDatum(a=ns.a), cube, budget, beta=ns.beta
    )
    row = {
        "lattice_kind": ps.kind,
        "seed": ps.seed,
        "nu_x": nu[0],
        "nu_y": nu[1],
        "t": ns.t,
        "ell": 1.0,
        "density": res.density,
        "raw_energy": res.raw_energy,
        "candidate_kind": res.candidate["kind"],
        "flips_accepted": res.candidate["flips_accepted"],
        "wall_ms": res.trace["wall_ms"],
    }
    report.write_csv([row], ns.out)
    print(f"surface density {res.density:.12g} ({res.candidate['kind']}) -> {ns.out}")
    return EXIT_OK


def _cmd_anisotropy(ns) -> int:
    if ns.nu_count < 2:
        raise ConfigError("--nu-count must be at least 2")
    if ns.replicas < 1:
        raise ConfigError("--replicas must be at least 1")
    directions = cellprob.direction_set(ns.nu_count)
    workers = _workers(ns.workers)
    rows, summary = cellprob.anisotropy_sweep(
        ns.lattice,
        directions,
        ns.t,
        ns.replicas,
        r=ns.r,
        spacing=ns.spacing,
        jitter=ns.jitter,
        seed=ns.seed,
        beta=ns.beta,
        budget_flips=ns.budget,
        workers=workers,
    )
    report.write_csv(rows, ns.out)
    fig_path = None if ns.no_fig else (ns.fig or os.path.splitext(ns.out)[0] + ".png")
    if fig_path:
        report.save_anisotropy_figure(rows, fig_path, title=f"{ns.lattice}, t={ns.t:g}")
    print(
        f"anisotropy {ns.lattice} t={ns.t:g}: ratio={summary['ratio_max_min']:.4f} "
        f"cov={summary['cov']:.4f} -> {ns.out}"
    )
    return EXIT_OK


def _cmd_ell_sweep(ns) -> int:
    ells = [float(x) for x in ns.ell.split(",") if x]
    if not ells:
        raise ConfigError("--ell must list at least one value")
    ps, es, center = _lattice_graph_from_flags(ns, ns.t)
    delta = ns.delta if ns.delta is not None else es.M
    nu = _unit(ns.nu, "--nu")
    cube = cellprob.CubeSpec(center, tuple(nu), ns.t, float(delta))
    budget = cellprob.SearchBudget(flips_per_site=ns.budget, seed=ns.seed)
    rows, diag = cellprob.ell_sweep(ps, es, nu, cube, ells, budget, beta=ns.beta)
    report.write_csv(rows, ns.out)
    fig_path = None if ns.no_fig else (ns.fig or os.path.splitext(ns.out)[0] + ".png")
    if fig_path:
        report.save_ell_figure(diag["per_ell"], fig_path, title=f"{ps.kind}, t={ns.t:g}")
    worst = min(d["min_pair_margin"] for d in diag["per_ell"])
    print(
        f"ell-sweep: s1={diag['s1_hat']:.6g}, worst pair margin {worst:.3g} -> {ns.out}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_lattice_flags(p, with_files=True):
    p.add_argument("--lattice", choices=["parking", "periodic", "jittered"], default="parking")
    p.add_argument("--r", type=float, default=1.0, help="hard-core distance (parking)")
    p.add_argument("--spacing", type=float, default=1.0, help="grid spacing (periodic/jittered)")
    p.add_argument("--jitter", type=float, default=0.2, help="jitter fraction (jittered)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--edges", choices=["voronoi", "knn"], default="voronoi")
    p.add_argument("--k", type=int, default=9, help="neighbor count for knn edges")
    if with_files:
        p.add_argument("--points", default=None, help="load lattice JSON instead of generating")
        p.add_argument("--edges-file", default=None, help="load edge-set JSON")


def build_parser() -> _Parser:
    parser = _Parser(prog="stochat", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-lattice", help="generate a lattice realization")
    p.add_argument("--lattice", choices=["parking", "periodic", "jittered"], required=True)
    p.add_argument("--size", type=float, required=True, help="square domain side")
    p.add_argument("--dim", type=int, choices=[2, 3], default=2)
    p.add_argument("--r", type=float, default=1.0)
    p.add_argument("--spacing", type=float, default=1.0)
    p.add_argument("--jitter", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_lattice)

    p = sub.add_parser("build-graph", help="build an edge set for a lattice file")
    p.add_argument("--points", required=True)
    p.add_argument("--edges", choices=["voronoi", "knn"], default="voronoi")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_build_graph)

    p = sub.add_parser("check", help="admissibility and invariant self-test")
    p.add_argument("--points", required=True)
    p.add_argument("--edges-file", default=None)
    p.set_defaults(func=_cmd_check)

    p = sub.add_parser("segment", help="AT segmentation of a PGM image")
    p.add_argument("--image", required=True)
    p.add_argument("--out-u", required=True)
    p.add_argument("--out-v", required=True)
    p.add_argument("--out-csv", default=None, help="energy trace CSV")
    p.add_argument("--fig", default=None, help="overview PNG path")
    p.add_argument("--ascii", action="store_true", help="write P2 instead of P5")
    p.add_argument("--stretch", action="store_true")
    p.add_argument("--eps", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=0.05)
    p.add_argument("--ell", type=float, default=1.0)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=200)
    _add_lattice_flags(p, with_files=False)
    p.set_defaults(func=_cmd_segment)

    p = sub.add_parser("cellprob-bulk", help="bulk cell problem")
    p.add_argument("--xi", required=True, help="gradient direction, e.g. 1,0")
    p.add_argument("--nu", default="1,0", help="cube orientation")
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--out", required=True)
    _add_lattice_flags(p)
    p.set_defaults(func=_cmd_cellprob_bulk)

    p = sub.add_parser("cellprob-surface", help="surface cell problem")
    p.add_argument("--nu", required=True)
    p.add_argument("--a", type=float, default=1.0, help="jump opening")
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--budget", type=int, default=20)
    p.add_argument("--exhaustive-max", type=int, default=0)
    p.add_argument("--out", required=True)
    _add_lattice_flags(p)
    p.set_defaults(func=_cmd_cellprob_surface)

    p = sub.add_parser("anisotropy", help="direction sweep of the surface density")
    p.add_argument("--nu-count", type=int, default=16)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--replicas", type=int, default=1)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--budget", type=int, default=20)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--fig", default=None, help="figure path (default: next to --out)")
    p.add_argument("--no-fig", action="store_true", help="skip figure rendering")
    _add_lattice_flags(p, with_files=False)
    p.set_defaults(func=_cmd_anisotropy)

    p = sub.add_parser("ell-sweep", help="mesh-ratio sweep of the surface density")
    p.add_argument("--ell", required=True, help="comma list, e.g. 1,2,4,8")
    p.add_argument("--nu", required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--budget", type=int, default=20)
    p.add_argument("--out", required=True)
    p.add_argument("--fig", default=None, help="figure path (default: next to --out)")
    p.add_argument("--no-fig", action="store_true", help="skip figure rendering")
    _add_lattice_flags(p)
    p.set_defaults(func=_cmd_ell_sweep)

    return parser


def main(argv=None) -> int:
    try:
        ns = build_parser().parse_args(argv)
        return ns.func(ns)
    except (solver.SolverError, cellprob.CellProblemError) as exc:
        print(f"error: numerical: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, imaging.ImageError) as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, lattice.LatticeError, graph.GraphError, EnergyError, ValueError) as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
