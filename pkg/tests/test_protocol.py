import json
from collections import Counter

import numpy as np
import pytest

from conftest import dataset_of, random_graph
from sharegnn.errors import ConfigError
from sharegnn.graph import Graph, Split
from sharegnn.model import ModelCfg
from sharegnn.preprocess import preprocess
from sharegnn.protocol import (
    ProtocolCfg,
    evaluate_protocol,
    generate_splits,
    load_split_file,
    resolve_splits,
    stratified_folds,
)
from sharegnn.training import TrainCfg


def majority_dataset(rng, n=80):
    """Class = the label held by at least 70% of the nodes."""
    graphs = []
    while len(graphs) < n:
        g = random_graph(rng, int(rng.integers(5, 10)), 0.3, num_labels=2)
        counts = np.bincount(g.node_labels, minlength=2)
        if counts.max() >= 0.7 * g.num_nodes:
            graphs.append(Graph.from_edges(g.num_nodes, g.edges, g.node_labels, target=int(counts[1] > counts[0])))
    return dataset_of(graphs, num_classes=2)


def model_cfg(labeling="raw"):
    return ModelCfg.from_dict({
        "encoder": [{"heads": [{"labeling": labeling, "distances": [0], "activation": "tanh"}]}],
        "decoder": [{"labeling": labeling, "m": 2, "activation": "identity"}],
        "init": "uniform(-0.1,0.1)",
    })


TCFG = TrainCfg(learning_rate=0.1, batch_size=8, max_epochs=30, early_stop_patience=10)


class TestSplits:
    def test_stratified_balance(self):
        y = np.array([0] * 50 + [1] * 30 + [2] * 20)
        folds = stratified_folds(y, 10, 0)
        assert sorted(np.concatenate(folds).tolist()) == list(range(100))
        for f in folds:
            assert Counter(y[f].tolist()) == {0: 5, 1: 3, 2: 2}

    def test_regression_folds_sizes(self):
        folds = stratified_folds(np.zeros(23), 5, 1, classification=False)
        assert sorted(len(f) for f in folds) == [4, 4, 5, 5, 5]

    @pytest.mark.parametrize("kind", ["fair", "standard", "holdout"])
    def test_generated_splits(self, rng, kind):
        ds = majority_dataset(rng, 40)
        splits = generate_splits(ds, ProtocolCfg(kind=kind, folds=5))
        assert len(splits) == (1 if kind == "holdout" else 5)
        for s in splits:
            parts = [s.train, s.test] + ([s.validation] if s.validation is not None else [])
            flat = [i for p in parts for i in p]
            assert len(flat) == len(set(flat)) == 40
            assert (s.validation is None) == (kind == "standard")
        tests = [i for s in splits for i in s.test]
        if kind != "holdout":
            assert sorted(tests) == list(range(40))

    def test_fair_validation_is_next_fold(self, rng):
        ds = majority_dataset(rng, 30)
        splits = generate_splits(ds, ProtocolCfg(folds=3))
        assert splits[0].validation == splits[1].test
        assert splits[2].validation == splits[0].test

    def test_split_file(self, rng, tmp_path):
        ds = majority_dataset(rng, 10)
        path = tmp_path / "s.json"
        path.write_text(json.dumps([{"train": [0, 1, 2, 3], "validation": [4, 5], "test": [6, 7, 8, 9]}]))
        splits = resolve_splits(ds, ProtocolCfg(splits=str(path)))
        assert splits == [Split((0, 1, 2, 3), (6, 7, 8, 9), (4, 5))]

    @pytest.mark.parametrize("content", ['[{"train": [0, 1], "test": [1]}]', '[{"train": [0, 42], "test": [1]}]',
                                         '{"train": [0]}', "not json", '[{"test": [1]}]'])
    def test_bad_split_files(self, tmp_path, content):
        path = tmp_path / "s.json"
        path.write_text(content)
        with pytest.raises(ConfigError):
            load_split_file(path, 10)
        with pytest.raises(ConfigError):
            load_split_file(tmp_path / "missing.json", 10)

    def test_fair_needs_validation(self, rng, tmp_path):
        ds = majority_dataset(rng, 10)
        path = tmp_path / "s.json"
        path.write_text(json.dumps([{"train": [0, 1, 2], "test": [3]}]))
        with pytest.raises(ConfigError):
            resolve_splits(ds, ProtocolCfg(splits=str(path)))
        assert len(resolve_splits(ds, ProtocolCfg(kind="standard", splits=str(path)))) == 1

    @pytest.mark.parametrize("bad", [{"kind": "bootstrap"}, {"folds": 1}, {"repeats": 0}, {"shuffle": True}])
    def test_bad_protocol(self, bad):
        with pytest.raises(ConfigError):
            ProtocolCfg.from_dict(bad)


class TestEvaluation:
    def test_separable_dataset_perfect(self, rng):
        ds = majority_dataset(rng)
        prep = preprocess(ds, ["raw"], 0)
        long_run = TrainCfg(learning_rate=0.1, batch_size=8, max_epochs=150, early_stop_patience=None)
        grid = [("a", model_cfg(), long_run)]
        report = evaluate_protocol(ds, prep, grid, ProtocolCfg(folds=4, repeats=1))
        assert report["metric"] == "accuracy" and report["num_splits"] == 4
        assert report["test_mean"] == 1.0

    def test_fair_selects_better_config(self, rng):
        ds = majority_dataset(rng, 60)
        prep = preprocess(ds, ["raw", "degree"], 0)
        # "a" only ever sees degrees, never the node labels the class depends on
        grid = [("a", model_cfg("degree"), TCFG), ("b", model_cfg("raw"), TCFG)]
        report = evaluate_protocol(ds, prep, grid, ProtocolCfg(folds=3, repeats=2))
        assert report["selected"] == 1
        scores = [c["selection_score"] for c in report["configs"]]
        assert scores[1] > scores[0]
        assert len(report["configs"][0]["runs"]) == 6

    def test_tie_breaks_on_fingerprint(self, rng):
        ds = majority_dataset(rng, 30)
        prep = preprocess(ds, ["raw"], 0)
        grid = [("zz", model_cfg(), TCFG), ("aa", model_cfg(), TCFG)]
        report = evaluate_protocol(ds, prep, grid, ProtocolCfg(folds=3, repeats=1))
        assert report["configs"][0]["selection_score"] == report["configs"][1]["selection_score"]
        assert report["selected"] == 1

    def test_standard_picks_best_mean_epoch(self, rng):
        ds = majority_dataset(rng, 30)
        prep = preprocess(ds, ["raw"], 0)
        report = evaluate_protocol(ds, prep, [("a", model_cfg(), TCFG)], ProtocolCfg(kind="standard", folds=3))
        entry = report["configs"][0]
        assert 1 <= entry["epoch"] <= TCFG.max_epochs
        assert entry["test_mean"] == pytest.approx(entry["selection_score"])

    def test_parallel_equals_serial(self, rng):
        ds = majority_dataset(rng, 30)
        prep = preprocess(ds, ["raw", "degree"], 0)
        grid = [("a", model_cfg("degree"), TCFG), ("b", model_cfg("raw"), TCFG)]
        proto = ProtocolCfg(folds=3, repeats=1)
        assert evaluate_protocol(ds, prep, grid, proto, jobs=1) == evaluate_protocol(ds, prep, grid, proto, jobs=2)

    def test_empty_grid(self, rng):
        ds = majority_dataset(rng, 10)
        with pytest.raises(ConfigError):
            evaluate_protocol(ds, preprocess(ds, ["raw"], 0), [], ProtocolCfg())
