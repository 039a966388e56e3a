from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import cycle, dataset_of, graphs_with_permutation, random_graph, two_triangles
from sharegnn.errors import ConfigError, ContractViolation
from sharegnn.graph import Graph, Permutation, apply_permutation
from sharegnn.labels import compute_labels
from sharegnn.model import ModelCfg, build_model
from sharegnn.preprocess import preprocess


def make_cfg(**over):
    cfg = {
        "encoder": [{"heads": [{"labeling": "wl(depth=1)", "distances": [0, 1, 2], "activation": "tanh"},
                               {"labeling": "degree", "distances": [1, 3], "width": 2, "activation": "tanh"}],
                     "combiner": {"width": 3, "activation": "tanh"}},
                    {"heads": [{"labeling": "raw", "distances": [0, 2], "activation": "leaky_relu"}]}],
        "decoder": [{"labeling": "wl(depth=1)", "m": 2, "activation": "tanh"},
                    {"labeling": "degree", "m": 1, "activation": "identity"}],
        "decoder_combiner": {"width": 4, "activation": "tanh"},
        "readout": [{"width": 2}],
        "init": "uniform(-0.5,0.5)",
    }
    cfg.update(over)
    return ModelCfg.from_dict(cfg)


def compiled(graph_list, cfg, seed=0, num_classes=2):
    ds = dataset_of(graph_list, num_classes=num_classes)
    prep = preprocess(ds, cfg.labelings(), cfg.max_distance())
    return build_model(ds, prep, cfg, seed=seed)


class TestPermutation:
    @given(graphs_with_permutation(min_nodes=1, max_nodes=10), st.integers(0, 1000))
    @settings(max_examples=60)
    def test_encoder_equivariant_and_model_invariant(self, data, seed):
        g, order = data
        perm = Permutation(order)
        h = apply_permutation(g, perm)
        model = compiled([g, h], make_cfg(), seed=seed)
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(g.num_nodes, 1))
        ex = model.encode([0], x)
        eh = model.encode([1], perm.apply_rows(x))
        assert np.max(np.abs(eh - perm.apply_rows(ex))) < 1e-12
        out = model.forward([0, 1])
        assert np.max(np.abs(out[0] - out[1])) < 1e-12

    def test_message_matrix_permutes(self, rng):
        g = random_graph(rng, 9, 0.3)
        perm = Permutation(rng.permutation(9))
        model = compiled([g, apply_permutation(g, perm)], make_cfg())
        a, b = model.encoder_matrix(0), model.encoder_matrix(1)
        m = perm.mapping
        assert np.array_equal(b, a[np.ix_(m, m)])


def histogram_cfg(labeling="raw"):
    # one encoder head that only keeps x (self weight 1), then the counting decoder
    return ModelCfg.from_dict({
        "encoder": [{"heads": [{"labeling": labeling, "distances": [0], "bias": False, "activation": "identity"}]}],
        "decoder": [{"labeling": labeling, "m": 1, "activation": "identity"}],
        "init": "constant(1.0)",
    })


def decoder_construction(model, label_id):
    """Pooling vector 1 for ``label_id``, 0 for every other label."""
    name = model.dec_heads[0].pool_name
    wmap = model.node_maps[name]
    model.pool[name][...] = 0.0
    model.pool[name][int(wmap.index_of([label_id])[0])] = 1.0


class TestExpressivity:
    def test_two_thirds_example(self):
        g = Graph.from_edges(3, [(0, 1), (1, 2)], [0, 0, 1])
        model = compiled([g], histogram_cfg(), num_classes=1)
        decoder_construction(model, 0)
        assert model.forward([0])[0, 0] == pytest.approx(2.0 / 3.0)

    def test_label_histograms_separate_random_pairs(self, rng):
        separated = 0
        for _ in range(100):
            g = random_graph(rng, int(rng.integers(2, 9)), 0.4, num_labels=3)
            h = random_graph(rng, int(rng.integers(2, 9)), 0.4, num_labels=3)
            ids = compute_labels([g, h], "raw")
            ca, cb = Counter(ids[0].tolist()), Counter(ids[1].tolist())
            fa = {k: v / g.num_nodes for k, v in ca.items()}
            fb = {k: v / h.num_nodes for k, v in cb.items()}
            differing = [lab for lab in set(fa) | set(fb) if fa.get(lab, 0) != fb.get(lab, 0)]
            if not differing:
                continue
            model = compiled([g, h], histogram_cfg(), num_classes=1)
            decoder_construction(model, differing[0])
            out = model.forward([0, 1])
            assert abs(out[0, 0] - out[1, 0]) > 1e-9
            separated += 1
        assert separated > 80

    def test_proportional_histograms_are_a_limit_of_mean_pooling(self):
        # [a, b] and [a, a, b, b] differ in counts but not in frequencies
        g = Graph.from_edges(2, [(0, 1)], [0, 1])
        h = Graph.from_edges(4, [(0, 1), (2, 3)], [0, 0, 1, 1])
        model = compiled([g, h], histogram_cfg(), num_classes=1)
        for lab in (0, 1):
            decoder_construction(model, lab)
            out = model.forward([0, 1])
            assert out[0, 0] == out[1, 0]

    def test_hexagon_vs_triangles(self):
        cfg = ModelCfg.from_dict({
            "encoder": [{"heads": [{"labeling": "raw", "distances": [3], "bias": False, "activation": "identity"}]}],
            "decoder": [{"labeling": "raw", "m": 1, "activation": "identity"}],
            "init": "constant(1.0)",
        })
        model = compiled([cycle(6), two_triangles()], cfg, num_classes=1)
        out = model.forward([0, 1])
        assert abs(out[0, 0] - out[1, 0]) > 1e-6


class TestModelBehaviour:
    def test_single_node_graph(self):
        g = Graph.from_edges(1, [], [0])
        cfg = ModelCfg.from_dict({
            "encoder": [{"heads": [{"labeling": "raw", "distances": [0], "activation": "identity"}]}],
            "decoder": [{"labeling": "raw", "m": 2, "activation": "identity"}],
            "init": "constant(0.5)",
        })
        model = compiled([g], cfg)
        model.pool["dec.h0.bias"][...] = [[0.1], [0.2]]
        out = model.forward([0])
        # encoder: 0.5 * 1 = 0.5; decoder: 0.5 * 0.5 / 1 + bias
        assert out[0].tolist() == pytest.approx([0.35, 0.45])

    def test_untrained_outputs_deterministic(self, rng):
        gs = [random_graph(rng, 7, 0.3, target=i % 2) for i in range(6)]
        a = compiled(gs, make_cfg(init="constant(0.001)")).forward(range(6))
        b = compiled(gs, make_cfg(init="constant(0.001)")).forward(range(6))
        assert np.all(np.isfinite(a)) and np.array_equal(a, b)

    def test_batch_equals_single_graphs(self, rng):
        gs = [random_graph(rng, int(rng.integers(2, 9)), 0.3) for _ in range(5)]
        model = compiled(gs, make_cfg())
        joint = model.forward(range(5))
        for i in range(5):
            assert np.allclose(joint[i], model.forward([i])[0], atol=1e-13)

    def test_batch_gradient_is_sum(self, rng):
        gs = [random_graph(rng, int(rng.integers(3, 9)), 0.3) for _ in range(4)]
        model = compiled(gs, make_cfg())
        up = rng.normal(size=(4, 2))
        model.pool.zero_grad()
        model.forward(range(4))
        model.backward(up)
        joint = {k: v.copy() for k, v in model.pool.grads.items()}
        total = {k: np.zeros_like(v) for k, v in joint.items()}
        for i in range(4):
            model.pool.zero_grad()
            model.forward([i])
            model.backward(up[i:i + 1])
            for k in total:
                total[k] += model.pool.grads[k]
        for k in joint:
            assert np.allclose(joint[k], total[k], atol=1e-12)

    def test_full_model_gradient(self, rng):
        gs = [random_graph(rng, int(rng.integers(8, 13)), 0.3, num_labels=2) for _ in range(2)]
        model = compiled(gs, make_cfg(input_labeling="raw", input_dense={"width": 2, "activation": "tanh"}))
        up = rng.normal(size=(2, 2))

        def loss():
            return float(np.sum(up * model.forward([0, 1])))

        model.pool.zero_grad()
        loss()
        model.backward(up)
        eps = 1e-6
        for name in model.pool.names():
            vals = model.pool[name]
            for idx in np.ndindex(vals.shape):
                old = vals[idx]
                vals[idx] = old + eps
                hi = loss()
                vals[idx] = old - eps
                lo = loss()
                vals[idx] = old
                num = (hi - lo) / (2 * eps)
                ana = model.pool.grads[name][idx]
                assert abs(num - ana) <= 1e-5 * max(1.0, abs(num)), name

    def test_one_hot_input(self):
        g = Graph.from_edges(3, [(0, 1), (1, 2)], [0, 2, 1])
        model = compiled([g], make_cfg(input_labeling="raw", input_dense={"width": 2}))
        x = model.initial_features([0])
        # raw values 0, 2, 1 get ids in order of first appearance
        assert x.tolist() == [[1, 0, 0], [0, 1, 0], [0, 0, 1]]

    def test_pruned_table_equals_zeroed_weights(self, rng):
        gs = [random_graph(rng, 10, 0.3) for _ in range(6)]
        base = {"encoder": [{"heads": [{"labeling": "degree", "distances": [0, 1, 2], "activation": "tanh"}]}],
                "decoder": [{"labeling": "raw", "m": 2}], "init": "uniform(-0.5,0.5)"}
        full = compiled(gs, ModelCfg.from_dict(base), seed=3)
        heads = [dict(base["encoder"][0]["heads"][0], prune_min=4)]
        pruned = compiled(gs, ModelCfg.from_dict({**base, "encoder": [{"heads": heads}]}), seed=3)
        table_full = full.tables["enc0.h0.msg"]
        table_pruned = pruned.tables["enc0.h0.msg"]
        assert len(table_pruned) < len(table_full)
        kept = table_full.index_rows(table_pruned.keys)
        w = np.zeros(len(table_full))
        w[kept] = full.pool["enc0.h0.msg"][kept]
        pruned.pool["enc0.h0.msg"][...] = w[kept]
        full.pool["enc0.h0.msg"][...] = w
        for name in full.pool.names():
            if name != "enc0.h0.msg":
                pruned.pool[name][...] = full.pool[name]
        assert np.max(np.abs(full.forward(range(6)) - pruned.forward(range(6)))) < 1e-12

    def test_outside_distance_has_no_effect(self, rng):
        g = Graph.from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4)], [0, 0, 0, 0, 0])
        cfg = ModelCfg.from_dict({
            "encoder": [{"heads": [{"labeling": "raw", "distances": [0, 1], "activation": "identity"}]}],
            "decoder": [{"labeling": "raw", "m": 1}], "init": "uniform(-1,1)"})
        model = compiled([g], cfg, num_classes=1)
        x = rng.normal(size=(5, 1))
        a = model.encode([0], x)
        x[4] += 10.0
        b = model.encode([0], x)
        assert a[0, 0] == b[0, 0] and a[1, 0] == b[1, 0]

    def test_output_width_mismatch(self):
        with pytest.raises(ConfigError):
            compiled([cycle(4)], make_cfg(), num_classes=3)

    def test_missing_labeling(self):
        ds = dataset_of([cycle(4)], num_classes=2)
        cfg = make_cfg()
        prep = preprocess(ds, ["raw"], 3)
        with pytest.raises(ConfigError):
            build_model(ds, prep, cfg)

    def test_bad_configs(self):
        with pytest.raises(ConfigError):
            make_cfg(decoder=[])
        with pytest.raises(ConfigError):
            make_cfg(init="gaussian")
        with pytest.raises(ConfigError):
            ModelCfg.from_dict({"encoder": [{"heads": [{"activation": "swish"}]}], "decoder": [{}]})
        with pytest.raises(ConfigError):
            ModelCfg.from_dict({"encoder": [], "decoder": [{"m": 0}]})
        with pytest.raises(ConfigError):
            ModelCfg.from_dict({"encoder": [], "decoder": [{}], "colour": 1})

    def test_cfg_round_trip(self):
        cfg = make_cfg()
        assert ModelCfg.from_dict(cfg.to_dict()) == cfg
        assert cfg.max_distance() == 3
        assert cfg.labelings() == ["wl(depth=1,edges=0,init=raw)", "degree", "raw"]

    def test_backward_before_forward(self):
        model = compiled([cycle(4)], make_cfg())
        with pytest.raises(ContractViolation):
            model.backward(np.zeros((1, 2)))
        with pytest.raises(ContractViolation):
            model.forward([7])

    def test_noise_needs_rng(self):
        model = compiled([cycle(4)], make_cfg())
        with pytest.raises(ContractViolation):
            model.forward([0], noise_std=0.5)
        a = model.forward([0], noise_std=0.5, noise_rng=np.random.default_rng(1))
        b = model.forward([0], noise_std=0.5, noise_rng=np.random.default_rng(1))
        assert np.array_equal(a, b)
