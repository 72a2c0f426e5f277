import numpy as np
import pytest

from conftest import random_typed_graph
from mhn import synth
from mhn.hetgraph import (GraphFormatError, Schema, build_graph, load_edge_list,
                          load_graph, load_graph_dir, load_labels, load_schema,
                          validate, write_graph, write_labels, write_schema)


@pytest.fixture
def toy7_dir(tmp_path, toy):
    synth.write_dataset(toy, tmp_path)
    return tmp_path


def test_toy_loads_as_heterogeneous(toy7_dir):
    g = load_graph_dir(toy7_dir)
    assert len(g.schema.node_types) == 2
    assert len(g.schema.edge_types) == 2
    assert g.num_nodes_of("U") == 3
    assert g.num_nodes_of("I") == 4


def test_empty_edge_file_gives_nodes_only(tmp_path, toy7_dir):
    (toy7_dir / "edges.tsv").write_text("# no edges\n")
    g = load_graph_dir(toy7_dir)
    assert g.num_nodes == 7
    assert g.neighbors("user1", "ui") == []


def test_duplicate_node_id_names_offender(tmp_path, toy7_dir):
    nodes = (toy7_dir / "nodes.tsv").read_text()
    first = nodes.splitlines()[0]
    (toy7_dir / "nodes.tsv").write_text(nodes + first + "\n")
    with pytest.raises(GraphFormatError, match="user1"):
        load_graph_dir(toy7_dir)


def test_neighbors_toy(toy):
    g = toy.graph
    got = {g.node_id(v) for v in g.neighbors("user1", "ui")}
    assert got == {"item1", "item3"}


def test_neighbors_isolated_node():
    schema = Schema.from_dict({
        "node_types": [{"name": "A", "feature_dim": None},
                       {"name": "B", "feature_dim": None}],
        "edge_types": [{"name": "ab", "src": "A", "dst": "B", "undirected": True}],
    })
    g = build_graph(schema, [("x", "A", None), ("y", "B", None)], [])
    assert g.neighbors("x", "ab") == []


def test_undirected_symmetry(toy):
    g = toy.graph
    assert g.index("item2") in g.neighbors("item1", "ii")
    assert g.index("item1") in g.neighbors("item2", "ii")


def test_directed_edge_is_one_way():
    schema = Schema.from_dict({
        "node_types": [{"name": "A", "feature_dim": None},
                       {"name": "B", "feature_dim": None}],
        "edge_types": [{"name": "ab", "src": "A", "dst": "B", "undirected": False}],
    })
    g = build_graph(schema, [("x", "A", None), ("y", "B", None)], [("x", "y", "ab")])
    assert g.neighbors("x", "ab") == [g.index("y")]
    assert g.neighbors("y", "ab") == []


def test_validate_toy_hand_counts(toy):
    rep = validate(toy.graph)
    assert rep.node_counts == {"U": 3, "I": 4}
    assert rep.edge_counts == {"ui": 4, "ii": 2}
    assert rep.heterogeneous
    assert rep.isolated_nodes == 0


def test_validate_single_node_warns(caplog):
    schema = Schema.from_dict({
        "node_types": [{"name": "A", "feature_dim": None}],
        "edge_types": [{"name": "aa", "src": "A", "dst": "A", "undirected": True}],
    })
    import logging
    with caplog.at_level(logging.WARNING):
        g = build_graph(schema, [("only", "A", None)], [])
    assert "not heterogeneous" in caplog.text
    rep = validate(g)
    assert not rep.heterogeneous
    assert rep.isolated_nodes == 1


def test_validate_counts_match_edge_lists():
    for seed in range(5):
        g = random_typed_graph(seed, max_nodes=30)
        rep = validate(g)
        for et in g.schema.edge_types:
            assert rep.edge_counts[et.name] == len(g.edges[et.name])


def test_table_shaped_schema_is_heterogeneous():
    schema = Schema.from_dict({
        "node_types": [{"name": t, "feature_dim": None} for t in "UIV"],
        "edge_types": [{"name": n, "src": s, "dst": d, "undirected": True}
                       for n, s, d in [("ui", "U", "I"), ("iv", "I", "V"),
                                       ("uv", "U", "V"), ("ii", "I", "I")]],
    })
    g = build_graph(schema, [("a", "U", None), ("b", "I", None), ("c", "V", None)],
                    [("a", "b", "ui")])
    assert validate(g).heterogeneous


def test_roundtrip_write_then_load(tmp_path):
    for seed in (0, 3):
        g = random_typed_graph(seed, max_nodes=25)
        write_graph(g, tmp_path / "nodes.tsv", tmp_path / "edges.tsv")
        write_schema(g.schema, tmp_path / "schema.json")
        g2 = load_graph(tmp_path / "nodes.tsv", tmp_path / "edges.tsv",
                        load_schema(tmp_path / "schema.json"))
        assert g2.node_ids == g.node_ids
        assert g2.node_type_names == g.node_type_names
        assert g2.edges == g.edges
        assert set(g2.features) == set(g.features)
        for t in g.features:
            np.testing.assert_array_equal(g2.features[t], g.features[t])


def test_roundtrip_preserves_features(tmp_path, toy):
    write_graph(toy.graph, tmp_path / "nodes.tsv", tmp_path / "edges.tsv")
    g2 = load_graph(tmp_path / "nodes.tsv", tmp_path / "edges.tsv", toy.graph.schema)
    np.testing.assert_array_equal(g2.features["U"], toy.graph.features["U"])
    np.testing.assert_array_equal(g2.features["I"], toy.graph.features["I"])


def test_neighbors_agree_with_edge_scan():
    for seed in range(8):
        g = random_typed_graph(seed, max_nodes=50)
        for et in g.schema.edge_types:
            for node in range(g.num_nodes):
                expected = []
                for s, d in g.edges[et.name]:
                    if s == node:
                        expected.append(d)
                    if et.undirected and d == node:
                        expected.append(s)
                assert g.neighbors(node, et.name) == sorted(expected), \
                    f"seed {seed} node {node} et {et.name}"


def test_malformed_line_reports_line_number(tmp_path, toy7_dir):
    (toy7_dir / "edges.tsv").write_text("# comment\nuser1 item1 ui\n")
    with pytest.raises(GraphFormatError, match=":2"):
        load_graph_dir(toy7_dir)


def test_feature_dimension_mismatch(tmp_path, toy7_dir):
    lines = (toy7_dir / "nodes.tsv").read_text().splitlines()
    lines[0] = "user1\tU\t1.0,2.0,3.0"  # U expects 2 features
    (toy7_dir / "nodes.tsv").write_text("\n".join(lines) + "\n")
    with pytest.raises(GraphFormatError, match="expected 2 features"):
        load_graph_dir(toy7_dir)


def test_dangling_edge_endpoint(tmp_path, toy7_dir):
    with open(toy7_dir / "edges.tsv", "a") as fh:
        fh.write("user1\tghost\tui\n")
    with pytest.raises(GraphFormatError, match="ghost"):
        load_graph_dir(toy7_dir)


def test_signature_mismatch(tmp_path, toy7_dir):
    with open(toy7_dir / "edges.tsv", "a") as fh:
        fh.write("user1\tuser2\tui\n")
    with pytest.raises(GraphFormatError, match="signature"):
        load_graph_dir(toy7_dir)


def test_unknown_type_errors(tmp_path, toy7_dir):
    with open(toy7_dir / "nodes.tsv", "a") as fh:
        fh.write("weird\tW\n")
    with pytest.raises(GraphFormatError, match="unknown type"):
        load_graph_dir(toy7_dir)


def test_parallel_edges_are_kept():
    schema = Schema.from_dict({
        "node_types": [{"name": "A", "feature_dim": None}],
        "edge_types": [{"name": "aa", "src": "A", "dst": "A", "undirected": True},
                       {"name": "bb", "src": "A", "dst": "A", "undirected": True}],
    })
    g = build_graph(schema, [("x", "A", None), ("y", "A", None)],
                    [("x", "y", "aa"), ("x", "y", "aa")])
    assert len(g.edges["aa"]) == 2
    assert g.neighbors("x", "aa") == [g.index("y")] * 2


class TestLabels:
    def test_roundtrip(self, tmp_path, toy):
        write_labels(toy.labels, tmp_path / "labels.tsv")
        table = load_labels(tmp_path / "labels.tsv", toy.graph)
        assert table.num_classes == 2
        assert table.labels[toy.graph.index("user3")] == 1

    def test_non_dense_classes_rejected(self, tmp_path, toy):
        write_labels({"user1": 0, "user2": 2}, tmp_path / "labels.tsv")
        with pytest.raises(GraphFormatError, match="dense"):
            load_labels(tmp_path / "labels.tsv", toy.graph)

    def test_unknown_node_rejected(self, tmp_path, toy):
        write_labels({"nobody": 0}, tmp_path / "labels.tsv")
        with pytest.raises(GraphFormatError, match="nobody"):
            load_labels(tmp_path / "labels.tsv", toy.graph)


def test_load_edge_list(tmp_path, toy):
    path = tmp_path / "some_edges.tsv"
    path.write_text("user1\titem1\tui\n# comment\nitem1\titem2\tii\n")
    rows = load_edge_list(path, toy.graph)
    g = toy.graph
    assert rows == [(g.index("user1"), g.index("item1"), "ui"),
                    (g.index("item1"), g.index("item2"), "ii")]
    path.write_text("user1\tnope\tui\n")
    with pytest.raises(GraphFormatError):
        load_edge_list(path, toy.graph)
