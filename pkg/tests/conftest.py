import numpy as np
import pytest

from stochat.graph import EdgeSet, build_voronoi_edges
from stochat.lattice import BoxDomain, PointSet, generate_periodic, generate_random_parking


@pytest.fixture(scope="session")
def parking20():
    ps = generate_random_parking(BoxDomain.square(20.0), 1.0, 7)
    return ps, build_voronoi_edges(ps)


@pytest.fixture(scope="session")
def parking8():
    ps = generate_random_parking(BoxDomain.square(8.0), 1.0, 11)
    return ps, build_voronoi_edges(ps)


@pytest.fixture(scope="session")
def grid3x3():
    ps = generate_periodic(BoxDomain.square(2.0), 1.0)
    return ps, build_voronoi_edges(ps)


def make_pair_graph():
    """Two points joined by one symmetric edge."""
    ps = PointSet(
        np.array([[0.0, 0.0], [1.0, 0.0]]),
        BoxDomain((0.0, -1.0), (1.0, 1.0)),
        r=1.0,
        R=1.5,
        seed=0,
        kind="periodic",
    )
    es = EdgeSet(pairs=np.array([[0, 1], [1, 0]]), M=1.0 + 1e-9, max_degree=1, n_points=2)
    return ps, es


def make_random_instance(rng, n_side=6):
    """Small jittered lattice with Voronoi edges and random fields."""
    from stochat.lattice import generate_jittered

    ps = generate_jittered(BoxDomain.square(float(n_side)), 1.0, 0.3, int(rng.integers(2**31)))
    es = build_voronoi_edges(ps)
    u = rng.normal(size=len(ps))
    v = rng.random(len(ps))
    return ps, es, u, v
