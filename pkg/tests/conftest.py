import numpy as np
import pytest

from rppmarket.network import parse_case


def two_bus_doc(capacity=5.0, load=10.0):
    """Bus 0 (cheap unit) exports to bus 1 (expensive unit, load, RPP).

    Hand solution with c = 2 and capacity 5: the 0->1 line binds,
    q = (5, 3), prices (1.5, 5.6), line multiplier 4.1.
    """
    return {
        "buses": [{"id": 0, "load_da": 0.0}, {"id": 1, "load_da": load}],
        "lines": [{"id": 0, "from": 0, "to": 1, "susceptance": 10.0, "capacity": capacity}],
        "da_generators": [
            {"id": 0, "bus": 0, "alpha": 0.1, "beta": 1.0},
            {"id": 1, "bus": 1, "alpha": 0.2, "beta": 5.0},
        ],
        "rt_generators": [
            {"id": 0, "bus": 0, "alpha": 0.4, "beta": 2.0, "da_id": 0},
            {"id": 1, "bus": 1, "alpha": 0.6, "beta": 3.0},
        ],
        "rpps": [{"id": 0, "bus": 1, "mean": 2.0, "std": 0.5}],
    }


def triangle_doc(capacity=100.0):
    """Three buses, equal susceptances; injection at bus 1 withdrawn at slack 0
    splits 2/3 on the direct line and 1/3 through bus 2."""
    return {
        "buses": [{"id": 0, "load_da": 0.0}, {"id": 1, "load_da": 0.0}, {"id": 2, "load_da": 9.0}],
        "lines": [
            {"id": 0, "from": 0, "to": 1, "susceptance": 1.0, "capacity": capacity},
            {"id": 1, "from": 1, "to": 2, "susceptance": 1.0, "capacity": capacity},
            {"id": 2, "from": 0, "to": 2, "susceptance": 1.0, "capacity": capacity},
        ],
        "da_generators": [
            {"id": 0, "bus": 0, "alpha": 0.1, "beta": 1.0},
            {"id": 1, "bus": 1, "alpha": 0.1, "beta": 2.0},
        ],
        "rt_generators": [{"id": 0, "bus": 2, "alpha": 0.5, "beta": 4.0}],
        "rpps": [{"id": 0, "bus": 2, "mean": 3.0, "std": 0.6}],
    }


def one_bus_doc(mean=10.0, std=2.0, n_rpps=1):
    """Single bus: no lines, prices equal system marginal cost."""
    return {
        "buses": [{"id": 0, "load_da": 50.0}],
        "lines": [],
        "da_generators": [{"id": 0, "bus": 0, "alpha": 0.1, "beta": 2.0}],
        "rt_generators": [{"id": 0, "bus": 0, "alpha": 0.3, "beta": 4.0}],
        "rpps": [{"id": k, "bus": 0, "mean": mean, "std": std} for k in range(n_rpps)],
    }


def random_case_doc(rng: np.random.Generator) -> dict:
    """Connected random network: 2-5 buses, 1-4 units per stage, 1-3 RPPs."""
    n = int(rng.integers(2, 6))
    edges = [(int(rng.integers(0, i)), i) for i in range(1, n)]
    for a in range(n):
        for b in range(a + 1, n):
            if (a, b) not in edges and rng.random() < 0.3:
                edges.append((a, b))
    loads = rng.uniform(0, 30, n)
    n_da, n_rt, k = int(rng.integers(1, 5)), int(rng.integers(1, 5)), int(rng.integers(1, 4))
    return {
        "buses": [{"id": i, "load_da": float(loads[i])} for i in range(n)],
        "lines": [
            {"id": i, "from": a, "to": b, "susceptance": float(rng.uniform(1, 20)),
             "capacity": float(rng.uniform(2, 40))}
            for i, (a, b) in enumerate(edges)
        ],
        "da_generators": [
            {"id": i, "bus": int(rng.integers(0, n)), "alpha": float(rng.uniform(0.02, 0.5)),
             "beta": float(rng.uniform(1, 20))} for i in range(n_da)
        ],
        "rt_generators": [
            {"id": j, "bus": int(rng.integers(0, n)), "alpha": float(rng.uniform(0.05, 1.0)),
             "beta": float(rng.uniform(5, 30)), **({"da_id": j} if j < n_da and rng.random() < 0.3 else {})}
            for j in range(n_rt)
        ],
        "rpps": [
            {"id": i, "bus": int(rng.integers(0, n)), "mean": float(rng.uniform(2, 20)),
             "std": float(rng.uniform(0, 3))} for i in range(k)
        ],
    }


@pytest.fixture
def two_bus():
    return parse_case(two_bus_doc())


@pytest.fixture
def triangle():
    return parse_case(triangle_doc())


@pytest.fixture
def one_bus():
    return parse_case(one_bus_doc())
