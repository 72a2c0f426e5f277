import numpy as np
import pytest

from mhn import diffgrad as dg
from mhn.diffgrad import Tensor
from mhn.metapath import Metapath
from mhn.model import (ForwardTrace, MHNModel, ModelConfig, ModelParams,
                       UnreachableNodeError, aggregate_metapaths,
                       encode_neighbors, fuse_bfs_dfs, graph_digest,
                       load_checkpoint, multihead_self_attention, output_layer,
                       read_embeddings_tsv, save_checkpoint,
                       write_embeddings_tsv)

UIU = Metapath(id="UIU", node_types=("U", "I", "U"), edge_types=("ui", "ui"))


def small_config(**kw):
    base = dict(embedding_dim=6, heads=2, n_instances=4, max_retries=40, seed=0)
    base.update(kw)
    return ModelConfig(**base)


class TestBaseEmbedding:
    def test_zero_inputs_give_zero(self, toy):
        cfg = small_config()
        m = MHNModel(toy.graph, toy.metapaths, cfg)
        gid = toy.graph.index("user1")
        m.params["embed.table"].data[gid] = 0.0
        m.params["attr.U"].data[:] = 0.0
        np.testing.assert_allclose(m.base_embedding(gid).data, np.zeros(6))

    def test_mean_of_identical_vectors(self, toy):
        cfg = small_config()
        m = MHNModel(toy.graph, toy.metapaths, cfg)
        gid = toy.graph.index("user2")
        x = toy.graph.features_of(gid)
        v = np.arange(6.0)
        m.params["embed.table"].data[gid] = v
        # pick attr.U rows so that W_A x == v
        m.params["attr.U"].data[:] = 0.0
        m.params["attr.U"].data[:, 0] = v / x[0]
        m.params["attr.U"].data[:, 1] = 0.0
        np.testing.assert_allclose(m.base_embedding(gid).data, v, atol=1e-12)

    def test_hand_case_d2(self):
        # one typed node with 2-d attributes; W_e row [2,0], W_A = I, x = [0,2]
        from mhn.hetgraph import Schema, build_graph
        schema = Schema.from_dict({
            "node_types": [{"name": "U", "feature_dim": 2},
                           {"name": "I", "feature_dim": None}],
            "edge_types": [{"name": "ui", "src": "U", "dst": "I", "undirected": True}],
        })
        g = build_graph(schema, [("u", "U", np.array([0.0, 2.0])),
                                 ("i", "I", None)], [("u", "i", "ui")])
        mp = Metapath(id="UI", node_types=("U", "I"), edge_types=("ui",))
        m = MHNModel(g, [mp], small_config(embedding_dim=2))
        m.params["embed.table"].data[0] = [2.0, 0.0]
        m.params["attr.U"].data[:] = np.eye(2)
        np.testing.assert_allclose(m.base_embedding(0).data, [1.0, 1.0])

    def test_type_without_attributes_uses_id_row(self):
        from mhn.hetgraph import Schema, build_graph
        schema = Schema.from_dict({
            "node_types": [{"name": "U", "feature_dim": None},
                           {"name": "I", "feature_dim": None}],
            "edge_types": [{"name": "ui", "src": "U", "dst": "I", "undirected": True}],
        })
        g = build_graph(schema, [("u", "U", None), ("i", "I", None)],
                        [("u", "i", "ui")])
        m = MHNModel(g, [UIU], small_config())
        np.testing.assert_array_equal(m.base_embedding(0).data,
                                      m.params["embed.table"].data[0])


class TestEncoders:
    def test_mean(self):
        out = encode_neighbors([Tensor([1.0, 0.0]), Tensor([0.0, 1.0])],
                               Tensor([1.0, 1.0]), "mean")
        np.testing.assert_allclose(out.data, [0.5, 0.5])

    def test_weighted_single_neighbor_is_identity(self):
        v = Tensor([0.3, -0.7])
        out = encode_neighbors([v], Tensor([1.0, 2.0]), "weighted")
        np.testing.assert_allclose(out.data, v.data)

    def test_nonlinear_relu_hand_case(self):
        out = encode_neighbors([Tensor([1.0, -1.0])], Tensor([0.0, 0.0]),
                               "nonlinear", weight=Tensor(np.eye(2)),
                               nonlinearity="relu")
        np.testing.assert_allclose(out.data, [1.0, 0.0])

    def test_empty_set_encodes_to_zero(self):
        out = encode_neighbors([], Tensor(np.ones(4)), "mean")
        np.testing.assert_allclose(out.data, np.zeros(4))

    def test_weighted_equals_mean_when_logits_equal(self):
        vecs = [Tensor([1.0, 2.0]), Tensor([3.0, -1.0]), Tensor([0.5, 0.5])]
        h_u = Tensor([0.0, 0.0])  # all scores zero
        a = encode_neighbors(vecs, h_u, "weighted")
        b = encode_neighbors(vecs, h_u, "mean")
        np.testing.assert_allclose(a.data, b.data, atol=1e-12)


class TestFusion:
    def test_identical_inputs_give_half_half(self):
        v = Tensor([0.2, 0.4])
        out, alpha = fuse_bfs_dfs(Tensor([1.0, 1.0]), v, Tensor(v.data.copy()))
        np.testing.assert_allclose(alpha.data, [0.5, 0.5])
        np.testing.assert_allclose(out.data, v.data)

    def test_orthogonal_target_gives_midpoint(self):
        out, alpha = fuse_bfs_dfs(Tensor([0.0, 0.0]), Tensor([1.0, 0.0]),
                                  Tensor([0.0, 1.0]))
        np.testing.assert_allclose(alpha.data, [0.5, 0.5])
        np.testing.assert_allclose(out.data, [0.5, 0.5])

    def test_hand_softmax_case(self):
        out, alpha = fuse_bfs_dfs(Tensor([1.0, 0.0]), Tensor([1.0, 0.0]),
                                  Tensor([0.0, 1.0]))
        e = np.exp(1.0)
        a1 = e / (e + 1.0)
        np.testing.assert_allclose(alpha.data, [a1, 1 - a1], atol=1e-12)
        np.testing.assert_allclose(out.data, [a1, 1 - a1], atol=1e-12)


class TestAggregation:
    def test_single_metapath(self):
        v = Tensor([0.1, 0.9])
        out, beta = aggregate_metapaths([v], Tensor([1.0, 1.0]))
        np.testing.assert_allclose(beta.data, [1.0])
        np.testing.assert_allclose(out.data, v.data)

    def test_zero_query_gives_uniform(self):
        vs = [Tensor([1.0, 0.0]), Tensor([0.0, 1.0]), Tensor([1.0, 1.0])]
        out, beta = aggregate_metapaths(vs, Tensor([0.0, 0.0]))
        np.testing.assert_allclose(beta.data, np.full(3, 1 / 3))
        np.testing.assert_allclose(out.data, np.mean([v.data for v in vs], axis=0))

    def test_hand_case(self):
        vs = [Tensor([1.0, 0.0]), Tensor([0.0, 1.0])]
        _, beta = aggregate_metapaths(vs, Tensor([1.0, 0.0]))
        e = np.exp(1.0)
        np.testing.assert_allclose(beta.data, [e / (e + 1), 1 / (e + 1)], atol=1e-12)

    def test_empty_raises(self):
        with pytest.raises(UnreachableNodeError):
            aggregate_metapaths([], Tensor([1.0]))


class TestMultihead:
    def test_single_row_attention_is_one(self):
        h = Tensor(np.array([[0.3, 0.7]]))
        wq = Tensor(np.random.default_rng(0).normal(size=(2, 2)))
        wk = Tensor(np.random.default_rng(1).normal(size=(2, 2)))
        wv = Tensor(np.eye(2))
        out, attn = multihead_self_attention(h, [(wq, wk, wv)])
        np.testing.assert_allclose(attn[0], [[1.0]])
        np.testing.assert_allclose(out.data, h.data[0])

    def test_zero_projections_give_uniform_attention(self):
        h = Tensor(np.random.default_rng(2).normal(size=(3, 4)))
        zero = Tensor(np.zeros((4, 2)))
        wv = Tensor(np.random.default_rng(3).normal(size=(4, 2)))
        wv2 = Tensor(np.random.default_rng(4).normal(size=(4, 2)))
        out, attn = multihead_self_attention(
            h, [(zero, zero, wv), (Tensor(np.zeros((4, 2))), Tensor(np.zeros((4, 2))), wv2)])
        for a in attn:
            np.testing.assert_allclose(a, np.full((3, 3), 1 / 3), atol=1e-12)
        v_cat = np.hstack([h.data @ wv.data, h.data @ wv2.data])
        np.testing.assert_allclose(out.data, v_cat.mean(axis=0), atol=1e-12)

    def test_two_row_single_head_matches_numpy(self):
        hd = np.array([[1.0, 0.5], [-0.5, 2.0]])
        wq = np.array([[0.2, -0.1], [0.4, 0.3]])
        wk = np.array([[-0.3, 0.6], [0.1, 0.2]])
        wv = np.eye(2)
        out, attn = multihead_self_attention(
            Tensor(hd), [(Tensor(wq), Tensor(wk), Tensor(wv))])
        q, k = hd @ wq, hd @ wk
        scores = q @ k.T / np.sqrt(2)
        e = np.exp(scores - scores.max(axis=1, keepdims=True))
        a = e / e.sum(axis=1, keepdims=True)
        np.testing.assert_allclose(attn[0], a, atol=1e-12)
        np.testing.assert_allclose(out.data, (a @ hd).mean(axis=0), atol=1e-12)


class TestOutputLayer:
    def test_zero_weight_sigmoid(self):
        out = output_layer(Tensor([1.0, -1.0]), Tensor(np.zeros((2, 2))), "sigmoid")
        np.testing.assert_allclose(out.data, [0.5, 0.5])

    def test_zero_weight_relu(self):
        out = output_layer(Tensor([1.0, -1.0]), Tensor(np.zeros((2, 2))), "relu")
        np.testing.assert_allclose(out.data, [0.0, 0.0])

    def test_relu_identity(self):
        out = output_layer(Tensor([-1.0, 2.0]), Tensor(np.eye(2)), "relu")
        np.testing.assert_allclose(out.data, [0.0, 2.0])

    def test_sigmoid_hand_case(self):
        out = output_layer(Tensor([1.0, 1.0]),
                           Tensor(np.array([[1.0, 1.0], [0.0, 1.0]])), "sigmoid")
        sig = lambda x: 1 / (1 + np.exp(-x))
        np.testing.assert_allclose(out.data, [sig(2.0), sig(1.0)], atol=1e-12)


class TestForward:
    def test_toy_trace(self, toy):
        m = MHNModel(toy.graph, toy.metapaths, small_config())
        z, trace = m.forward("user1", phase="eval")
        g = toy.graph
        t = trace.per_metapath["UIIU"]
        assert {g.node_id(v) for v in t.bfs} == {"item1", "item3"}
        assert {g.node_id(v) for v in t.dfs} <= {"item2", "user2", "item4", "user3"}
        assert z.shape == (6,)
        assert trace.beta == {"UIIU": 1.0}

    def test_unreachable_node_errors(self, toy):
        from mhn.hetgraph import build_graph
        g = toy.graph
        nodes = [(i, g.node_type(i), g.features_of(i)) for i in g.node_ids]
        g2 = build_graph(g.schema, nodes, [])  # no edges at all
        m = MHNModel(g2, toy.metapaths, small_config())
        with pytest.raises(UnreachableNodeError, match="unreachable"):
            m.forward("user1", phase="eval")

    def test_type_without_metapath_errors(self, toy):
        m = MHNModel(toy.graph, toy.metapaths, small_config())
        with pytest.raises(UnreachableNodeError, match="no metapath"):
            m.forward("item1", phase="eval")

    def test_frozen_samples_are_deterministic(self, toy):
        m = MHNModel(toy.graph, toy.metapaths, small_config())
        samples = m.sample_node("user1", phase=3)
        z1, _ = m.forward("user1", samples=samples)
        z2, _ = m.forward("user1", samples=samples)
        assert (z1.data == z2.data).all()

    def test_same_phase_same_output(self, toy):
        m = MHNModel(toy.graph, toy.metapaths, small_config())
        z1, _ = m.forward("user1", phase=7)
        z2, _ = m.forward("user1", phase=7)
        assert (z1.data == z2.data).all()

    def test_metapath_permutation_invariance(self, toy):
        mps = [toy.metapaths[0], UIU]
        cfg = small_config(seed=5)
        m1 = MHNModel(toy.graph, mps, cfg)
        m2 = MHNModel(toy.graph, list(reversed(mps)), cfg, params=m1.params)
        z1, t1 = m1.forward("user1", phase=1)
        z2, t2 = m2.forward("user1", phase=1)
        np.testing.assert_allclose(z1.data, z2.data, atol=1e-12)
        assert t1.beta == pytest.approx(t2.beta)

    def test_alpha_beta_are_simplex_weights(self, toy):
        mps = [toy.metapaths[0], UIU]
        for seed in range(30):
            m = MHNModel(toy.graph, mps, small_config(seed=seed))
            _, trace = m.forward("user1", phase=seed)
            betas = np.array(list(trace.beta.values()))
            assert (betas >= 0).all()
            assert abs(betas.sum() - 1.0) < 1e-12
            for t in trace.per_metapath.values():
                if t.active:
                    a = np.array(t.alpha)
                    assert (a >= 0).all()
                    assert abs(a.sum() - 1.0) < 1e-12

    def test_query_scaling_keeps_argmax(self, toy):
        mps = [toy.metapaths[0], UIU]
        m = MHNModel(toy.graph, mps, small_config(seed=2))
        samples = m.sample_node("user1", phase=0)
        _, t1 = m.forward("user1", samples=samples)
        m.params["fusion.q"].data *= 7.5
        _, t2 = m.forward("user1", samples=samples)
        ids = list(t1.beta)
        assert max(ids, key=t1.beta.get) == max(ids, key=t2.beta.get)

    def test_uniform_logits_give_mean_of_vectors(self, toy):
        mps = [toy.metapaths[0], UIU]
        m = MHNModel(toy.graph, mps, small_config(seed=3))
        m.params["fusion.q"].data[:] = 0.0
        samples = m.sample_node("user1", phase=0)
        _, trace = m.forward("user1", samples=samples)
        betas = np.array(list(trace.beta.values()))
        np.testing.assert_allclose(betas, 0.5, atol=1e-12)

    def test_forward_gradients_pass_check(self, toy, toy_labels):
        # toy-scale gradient check with frozen samples through the whole stack
        m = MHNModel(toy.graph, toy.metapaths, small_config(encoder="weighted"))
        samples = m.sample_node("user1", phase=0)

        def fn():
            z, _ = m.forward("user1", samples=samples)
            return dg.sum_all(dg.mul(z, Tensor(np.linspace(0.5, 1.0, 6))))

        report = dg.grad_check(fn, m.params.tensors, h=1e-5, tol=1e-3)
        assert report.passed, str(report)

    def test_multihead_forward_runs(self, toy):
        cfg = small_config(fusion="multi-head-self-attention", heads=3)
        m = MHNModel(toy.graph, toy.metapaths + [UIU], cfg)
        z, trace = m.forward("user1", phase=0)
        assert z.shape == (6,)
        assert trace.beta is None
        for a in trace.head_attention:
            np.testing.assert_allclose(a.sum(axis=1), 1.0, atol=1e-12)


class TestConfig:
    def test_heads_must_divide_dim(self):
        with pytest.raises(ValueError, match="divide"):
            ModelConfig(embedding_dim=10, heads=4,
                        fusion="multi-head-self-attention").validate()

    def test_bad_encoder(self):
        with pytest.raises(ValueError):
            ModelConfig(encoder="fancy").validate()

    def test_defaults_are_valid(self):
        cfg = ModelConfig()
        cfg.validate()
        assert cfg.embedding_dim == 200
        assert cfg.heads == 8


class TestPersistence:
    def test_checkpoint_roundtrip_bit_exact(self, tmp_path, toy):
        m = MHNModel(toy.graph, toy.metapaths, small_config(seed=11))
        path = tmp_path / "model.mhn"
        save_checkpoint(m, path, meta={"note": "test"})
        m2, meta = load_checkpoint(path, toy.graph)
        assert meta == {"note": "test"}
        assert set(m2.params.names()) == set(m.params.names())
        for name in m.params.names():
            assert (m2.params[name].data == m.params[name].data).all()
        assert m2.config == m.config
        assert m2.metapaths == m.metapaths

    def test_checkpoint_graph_mismatch(self, tmp_path, toy):
        m = MHNModel(toy.graph, toy.metapaths, small_config())
        path = tmp_path / "model.mhn"
        save_checkpoint(m, path)
        from mhn.hetgraph import build_graph
        g = toy.graph
        nodes = [(i, g.node_type(i), g.features_of(i)) for i in g.node_ids]
        other = build_graph(g.schema, nodes + [("extra", "U", np.zeros(2))], [])
        with pytest.raises(ValueError, match="nodes"):
            load_checkpoint(path, other)

    def test_digest_changes_with_nodes(self, toy):
        from mhn.hetgraph import build_graph
        g = toy.graph
        nodes = [(i, g.node_type(i), g.features_of(i)) for i in g.node_ids]
        same = build_graph(g.schema, nodes, [])
        assert graph_digest(g) == graph_digest(same)
        renamed = build_graph(g.schema, [("zz",) + n[1:] for n in nodes[:1]] + nodes[1:], [])
        assert graph_digest(g) != graph_digest(renamed)

    def test_embeddings_tsv_roundtrip(self, tmp_path, toy):
        m = MHNModel(toy.graph, toy.metapaths, small_config())
        emb = m.embed_nodes(phase="eval", base_fallback=True)
        path = tmp_path / "embeddings.tsv"
        write_embeddings_tsv(emb, toy.graph, path)
        loaded = read_embeddings_tsv(path)
        assert len(loaded) == len(emb)
        for gid, vec in emb.items():
            np.testing.assert_array_equal(loaded[toy.graph.node_id(gid)], vec)


def test_embed_nodes_worker_count_invariant(toy):
    m = MHNModel(toy.graph, toy.metapaths, small_config(seed=4))
    a = m.embed_nodes(phase="eval", workers=1)
    b = m.embed_nodes(phase="eval", workers=4)
    assert set(a) == set(b)
    for gid in a:
        assert (a[gid] == b[gid]).all()


def test_embed_nodes_base_fallback(toy):
    m = MHNModel(toy.graph, toy.metapaths, small_config())
    with_fallback = m.embed_nodes(phase="eval", base_fallback=True)
    without = m.embed_nodes(phase="eval", base_fallback=False)
    items = {toy.graph.index(f"item{j}") for j in range(1, 5)}
    assert items <= set(with_fallback)
    assert not (items & set(without))
