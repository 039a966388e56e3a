import networkx as nx
import numpy as np
import pytest
from hypothesis import given

from conftest import claw, complete, cycle, graphs, graphs_with_permutation, random_graph
from oracles import MOTIFS, brute_motif_count, brute_simple_cycles, dense_adjacency
from sharegnn.counting import (
    BENCHMARK_KINDS,
    SubstructureKind,
    clique_participation,
    count_substructures,
    count_vector,
    cycle_participation,
    enumerate_cycles,
    maximal_cliques,
    node_participation,
)
from sharegnn.errors import ContractViolation
from sharegnn.graph import Graph, Permutation, apply_permutation

KIND_NAMES = ["triangle", "tailed_triangle", "star3", "cycle4", "cycle5", "cycle6"]


def counts(g):
    return dict(zip(KIND_NAMES, count_vector(g).astype(int).tolist()))


class TestKnownGraphs:
    def test_k4(self):
        c = counts(complete(4))
        assert c["triangle"] == 4
        assert c["tailed_triangle"] == 12
        assert c["cycle4"] == 3

    def test_c5(self):
        c = counts(cycle(5))
        assert c == {"triangle": 0, "tailed_triangle": 0, "star3": 0, "cycle4": 0, "cycle5": 1, "cycle6": 0}

    def test_claw(self):
        c = counts(claw())
        assert c == {"triangle": 0, "tailed_triangle": 0, "star3": 1, "cycle4": 0, "cycle5": 0, "cycle6": 0}

    def test_kind_parsing(self):
        assert SubstructureKind.parse("cycle5") == SubstructureKind("cycle", 5)
        assert str(SubstructureKind("induced_cycle", 4)) == "induced_cycle4"
        with pytest.raises(ContractViolation):
            SubstructureKind("cycle", 7)
        with pytest.raises(ContractViolation):
            SubstructureKind("square")

    def test_induced_cycles_exclude_chords(self):
        # a 4-cycle with one chord: two triangles, one simple 4-cycle, no chordless 4-cycle
        g = Graph.from_edges(4, [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)], np.zeros(4))
        assert count_substructures(g, SubstructureKind("cycle", 4)) == 1
        assert count_substructures(g, SubstructureKind("induced_cycle", 4)) == 0


class TestOracles:
    def test_triangles_match_trace_on_random_graphs(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            n = int(rng.integers(1, 31))
            g = random_graph(rng, n, float(rng.uniform(0.05, 0.5)))
            a = dense_adjacency(g).astype(np.float64)
            assert count_substructures(g, SubstructureKind("triangle")) == round(np.trace(a @ a @ a) / 6)

    def test_all_six_against_exhaustive_enumeration(self):
        rng = np.random.default_rng(11)
        for _ in range(30):
            g = random_graph(rng, int(rng.integers(4, 13)), 0.3)
            a = dense_adjacency(g)
            assert counts(g) == {k: brute_motif_count(a, k) for k in MOTIFS}

    @given(graphs(max_nodes=9))
    def test_cycles_against_vertex_order_enumeration(self, g):
        a = dense_adjacency(g)
        cyc = enumerate_cycles(g, 6)
        for length in range(3, 7):
            assert cyc[length].shape[0] == brute_simple_cycles(a, length)

    @given(graphs(max_nodes=10))
    def test_cycles_against_networkx(self, g):
        h = nx.Graph()
        h.add_nodes_from(range(g.num_nodes))
        h.add_edges_from(g.edges.tolist())
        want = {L: 0 for L in range(3, 8)}
        for c in nx.simple_cycles(h, length_bound=7):
            if len(c) >= 3:
                want[len(c)] += 1
        got = {L: arr.shape[0] for L, arr in enumerate_cycles(g, 7).items()}
        assert got == want

    @given(graphs(max_nodes=10))
    def test_induced_cycles_are_chordless(self, g):
        a = dense_adjacency(g)
        simple = enumerate_cycles(g, 6)
        induced = enumerate_cycles(g, 6, induced=True)
        for length in range(3, 7):
            chordless = [
                c for c in simple[length].tolist()
                if a[np.ix_(c, c)].sum() == 2 * length
            ]
            assert sorted(map(sorted, chordless)) == sorted(map(sorted, induced[length].tolist()))

    @given(graphs_with_permutation(max_nodes=10))
    def test_counts_permutation_invariant(self, gp):
        g, perm = gp
        h = apply_permutation(g, Permutation(perm))
        assert np.array_equal(count_vector(g), count_vector(h))
        for kind in BENCHMARK_KINDS:
            assert np.array_equal(node_participation(h, kind), node_participation(g, kind)[perm])


class TestParticipation:
    def test_triangle_participation_sums(self):
        g = complete(4)
        assert node_participation(g, SubstructureKind("triangle")).tolist() == [3, 3, 3, 3]

    def test_star_participation_on_claw(self):
        assert node_participation(claw(), SubstructureKind("star3")).tolist() == [1, 1, 1, 1]

    @given(graphs(max_nodes=9))
    def test_participation_totals(self, g):
        # each occurrence contributes once per node it contains
        sizes = {"triangle": 3, "tailed_triangle": 4, "star3": 4}
        for name, k in sizes.items():
            kind = SubstructureKind(name)
            assert node_participation(g, kind).sum() == k * count_substructures(g, kind)
        for L in (4, 5, 6):
            kind = SubstructureKind("cycle", L)
            assert node_participation(g, kind).sum() == L * count_substructures(g, kind)

    def test_cycle_participation_columns(self):
        rows = cycle_participation(cycle(5), 6, 3)
        assert rows.shape == (5, 4)
        assert rows[:, 2].tolist() == [1] * 5 and rows[:, [0, 1, 3]].sum() == 0


class TestCliques:
    @given(graphs(max_nodes=11))
    def test_maximal_cliques_match_networkx(self, g):
        h = nx.Graph()
        h.add_nodes_from(range(g.num_nodes))
        h.add_edges_from(g.edges.tolist())
        want = sorted(tuple(sorted(c)) for c in nx.find_cliques(h))
        assert maximal_cliques(g) == want

    def test_participation_clips_large_cliques(self):
        g = complete(5)
        out = clique_participation(g, 3)
        assert out[:, 2].tolist() == [1] * 5 and out[:, :2].sum() == 0
