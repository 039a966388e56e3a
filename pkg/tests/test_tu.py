from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import graphs
from sharegnn.errors import DataError, ParseError
from sharegnn.graph import Dataset, Graph
from sharegnn.tu import TUParseStats, parse_tu_dataset, write_tu_dataset

DATA_ROOT = Path(__file__).resolve().parents[1] / "data"


def write_fixture(root: Path):
    # graph 1: triangle on nodes 1..3 with label 1; graph 2: edge 4-5 with label 0
    (root / "T_A.txt").write_text("1, 2\n2, 1\n2, 3\n3, 2\n1, 3\n3, 1\n4, 5\n5, 4\n")
    (root / "T_graph_indicator.txt").write_text("1\n1\n1\n2\n2\n")
    (root / "T_graph_labels.txt").write_text("1\n0\n")


class TestParse:
    def test_three_file_fixture(self, tmp_path):
        write_fixture(tmp_path)
        ds = parse_tu_dataset(tmp_path, "T")
        assert len(ds) == 2
        assert [g.num_nodes for g in ds.graphs] == [3, 2]
        assert ds.targets.tolist() == [1, 0]
        assert ds.graphs[0].num_edges == 3 and ds.graphs[1].num_edges == 1
        # no node label file: default label 0
        assert all(np.all(g.node_labels == 0) for g in ds.graphs)

    def test_empty_directory_names_missing_file(self, tmp_path):
        with pytest.raises(ParseError, match="DS_A.txt"):
            parse_tu_dataset(tmp_path, "DS")

    def test_dangling_index_reports_line(self, tmp_path):
        write_fixture(tmp_path)
        (tmp_path / "T_A.txt").write_text("1, 2\n2, 1\n2, 9\n")
        with pytest.raises(ParseError, match=r"T_A.txt:3"):
            parse_tu_dataset(tmp_path, "T")

    def test_parse_error_is_data_error(self):
        assert issubclass(ParseError, DataError)

    def test_asymmetric_edges_symmetrised_and_counted(self, tmp_path):
        write_fixture(tmp_path)
        (tmp_path / "T_A.txt").write_text("1, 2\n2, 3\n3, 1\n4, 5\n5, 4\n")
        stats = TUParseStats()
        ds = parse_tu_dataset(tmp_path, "T", stats)
        assert stats.asymmetric_edges == 3
        assert ds.graphs[0].num_edges == 3
        assert set(ds.graphs[0].adjacency[0]) == {1, 2}

    def test_targets_remapped_to_dense_range(self, tmp_path):
        write_fixture(tmp_path)
        (tmp_path / "T_graph_labels.txt").write_text("-1\n1\n")
        ds = parse_tu_dataset(tmp_path, "T")
        assert ds.targets.tolist() == [0, 1] and ds.num_classes == 2

    def test_node_and_edge_labels(self, tmp_path):
        write_fixture(tmp_path)
        (tmp_path / "T_node_labels.txt").write_text("6\n6\n8\n1\n1\n")
        (tmp_path / "T_edge_labels.txt").write_text("0\n0\n1\n1\n2\n2\n0\n0\n")
        ds = parse_tu_dataset(tmp_path, "T")
        assert ds.graphs[0].node_labels.tolist() == [6, 6, 8]
        assert ds.graphs[0].edge_label_lookup[(1, 2)] == 1
        assert ds.graphs[0].edge_label_lookup[(0, 2)] == 2

    def test_regression_attributes(self, tmp_path):
        write_fixture(tmp_path)
        (tmp_path / "T_graph_labels.txt").unlink()
        (tmp_path / "T_graph_attributes.txt").write_text("0.5\n-1.25\n")
        ds = parse_tu_dataset(tmp_path, "T")
        assert ds.task == "regression"
        assert ds.targets[:, 0].tolist() == [0.5, -1.25]


class TestRoundTrip:
    @settings(max_examples=25)
    @given(st.lists(graphs(max_nodes=8, edge_labels=3), min_size=1, max_size=5), st.data())
    def test_write_then_parse(self, tmp_path_factory, glist, data):
        targets = data.draw(st.lists(st.integers(0, 2), min_size=len(glist), max_size=len(glist)))
        classes = sorted(set(targets))
        glist = [Graph.from_edges(g.num_nodes, g.edges, g.node_labels, g.edge_labels, classes.index(t))
                 for g, t in zip(glist, targets)]
        ds = Dataset(glist, "R", "classification", len(classes))
        root = tmp_path_factory.mktemp("tu")
        write_tu_dataset(ds, root)
        back = parse_tu_dataset(root, "R")
        assert back == ds
        assert back.targets.tolist() == ds.targets.tolist()


@pytest.mark.skipif(not (DATA_ROOT / "DHFR" / "DHFR_A.txt").is_file(), reason="DHFR files not present under data/")
def test_dhfr_statistics():
    ds = parse_tu_dataset(DATA_ROOT / "DHFR", "DHFR")
    assert len(ds) == 756
    assert ds.num_classes == 2
    assert abs(np.mean([g.num_nodes for g in ds.graphs]) - 42.4) <= 0.1
