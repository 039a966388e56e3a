import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from sharegnn.graph import Dataset, Graph

settings.register_profile(
    "default", max_examples=50, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def cycle(n, label=0, target=0):
    return Graph.from_edges(n, [(i, (i + 1) % n) for i in range(n)], np.full(n, label), target=target)


def two_triangles(label=0, target=0):
    return Graph.from_edges(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)], np.full(6, label), target=target)


def claw(target=0):
    return Graph.from_edges(4, [(0, 1), (0, 2), (0, 3)], np.zeros(4), target=target)


def complete(n):
    return Graph.from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)], np.zeros(n))


def random_graph(rng, n, p, num_labels=3, edge_labels=0, target=0):
    iu = np.triu_indices(n, 1)
    mask = rng.random(iu[0].size) < p
    edges = np.stack([iu[0][mask], iu[1][mask]], axis=1)
    elab = rng.integers(0, edge_labels, size=len(edges)) if edge_labels else None
    return Graph.from_edges(n, edges, rng.integers(0, num_labels, size=n), elab, target=target)


@st.composite
def graphs(draw, min_nodes=1, max_nodes=12, num_labels=3, edge_labels=0):
    n = draw(st.integers(min_nodes, max_nodes))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    mask = draw(st.lists(st.booleans(), min_size=len(pairs), max_size=len(pairs)))
    edges = [p for p, keep in zip(pairs, mask) if keep]
    labels = draw(st.lists(st.integers(0, num_labels - 1), min_size=n, max_size=n))
    elab = None
    if edge_labels:
        elab = draw(st.lists(st.integers(0, edge_labels - 1), min_size=len(edges), max_size=len(edges)))
    return Graph.from_edges(n, edges, labels, elab)


@st.composite
def graphs_with_permutation(draw, **kw):
    g = draw(graphs(**kw))
    perm = draw(st.permutations(list(range(g.num_nodes))))
    return g, np.array(perm, dtype=np.int64)


def dataset_of(graph_list, name="toy", num_classes=None):
    if num_classes is None:
        num_classes = max(int(g.target) for g in graph_list) + 1
    return Dataset(list(graph_list), name, "classification", num_classes)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
