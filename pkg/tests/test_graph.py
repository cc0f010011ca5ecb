import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import all_simple_paths, path_cost
from soundphylo.graph import (
    IntermediatePath,
    PhoneGraph,
    build_graph,
    expert_path_recall,
    path_stats,
    read_path_dump,
    shortest_paths,
    write_path_dump,
)
from soundphylo.model import FeatureEditModel
from soundphylo.phonology import NULL, UnknownPhoneError, fed


def random_graph(n, seed):
    rng = np.random.default_rng(seed)
    W = rng.uniform(0.1, 10.0, size=(n, n))
    np.fill_diagonal(W, 0.0)
    labels = tuple(chr(ord("a") + i) for i in range(n))
    return PhoneGraph(labels, W, "fed-ablation", 15.0, 10.0, 1.0, {x: x for x in labels})


@pytest.fixture(scope="module")
def fed_graph(table):
    return build_graph(None, table)


class TestPath:
    def test_str_and_endpoints(self):
        p = IntermediatePath.from_phones(("p", "f", "h"))
        assert str(p) == "p>f>h"
        assert p.proto == "p" and p.reflex == "h" and p.n_edges == 2
        assert p.total_cost == 2.0

    def test_repeated_phone_rejected(self):
        with pytest.raises(ValueError):
            IntermediatePath.from_phones(("p", "p"))

    def test_cost_arity(self):
        with pytest.raises(ValueError):
            IntermediatePath(("p", "f"), (), 0.0)


class TestBuild:
    def test_null_node_last(self, fed_graph):
        assert fed_graph.nodes[-1] == NULL
        assert fed_graph.nodes.count(NULL) == 1

    def test_weights_are_fed(self, fed_graph, table):
        for a, b in [("t", "d"), ("p", "a"), ("s", "ʃ")]:
            assert fed_graph.weight(a, b) == pytest.approx(fed(table, a, b))

    def test_null_ratio(self, fed_graph):
        assert fed_graph.weight(NULL, "a") == pytest.approx(15 * fed_graph.base_cost)
        assert fed_graph.weight("a", NULL) == pytest.approx(10 * fed_graph.base_cost)

    def test_read_only(self, fed_graph):
        with pytest.raises(ValueError):
            fed_graph.weights[0, 1] = 3.0

    def test_dwfed_needs_model(self, table):
        with pytest.raises(ValueError):
            build_graph(None, table, mode="dwfed")

    def test_dwfed_zero_model(self, table):
        g = build_graph(FeatureEditModel.zeros(24), table)
        assert g.mode == "dwfed"
        n = int((table.encode("t") != table.encode("k")).sum())
        assert g.weight("t", "k") == pytest.approx(0.5 * n)

    def test_unknown_phone(self, fed_graph):
        with pytest.raises(UnknownPhoneError):
            fed_graph.index("ʘ↓")

    def test_extra_phones_win_ties(self, table):
        g = build_graph(None, table, extra_phones=["t"])
        assert g.nodes[0] == "t"

    def test_positive_off_diagonal(self, fed_graph):
        W = fed_graph.weights
        off = ~np.eye(W.shape[0], dtype=bool)
        assert (W[off] > 0).all()
        assert (np.diag(W) == 0).all()


class TestShortestPaths:
    def test_adjacent_pair_is_direct(self, fed_graph):
        assert str(shortest_paths(fed_graph, "t", "d")[0]) == "t>d"

    def test_identity(self, fed_graph):
        p = shortest_paths(fed_graph, "t", "t")[0]
        assert p.n_edges == 0 and p.total_cost == 0

    def test_no_null_transit(self, fed_graph):
        for a, b in [("p", "h"), ("k", "a"), ("s", "r"), ("a", "u")]:
            for p in shortest_paths(fed_graph, a, b, k=3):
                assert NULL not in p.phones[1:-1]

    def test_deletion_reaches_null(self, fed_graph):
        p = shortest_paths(fed_graph, "t", NULL)[0]
        assert p.reflex == NULL

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000), st.integers(0, 5), st.integers(0, 5))
    def test_yen_matches_enumeration(self, seed, s, t):
        g = random_graph(6, seed)
        W = g.weights
        costs = sorted(path_cost(W, p) for p in all_simple_paths(6, s, t))
        got = shortest_paths(g, g.nodes[s], g.nodes[t], k=5)
        assert len({p.phones for p in got}) == len(got)
        assert [p.total_cost for p in got] == pytest.approx(costs[: len(got)])
        assert len(got) == min(5, len(costs))

    def test_ties_broken_by_phone_sequence(self):
        W = np.array([[0, 1, 1, 5], [9, 0, 9, 1], [9, 9, 0, 1], [9, 9, 9, 0]], dtype=float)
        labels = ("a", "c", "b", "d")
        g = PhoneGraph(labels, W, "fed-ablation", 15.0, 10.0, 1.0, {x: x for x in labels})
        assert [str(p) for p in shortest_paths(g, "a", "d", k=2)] == ["a>b>d", "a>c>d"]

    def test_bad_k(self, fed_graph):
        with pytest.raises(ValueError):
            shortest_paths(fed_graph, "t", "d", k=0)


class TestStats:
    def test_path_stats(self):
        ps = [
            IntermediatePath.from_phones(("p", "f", "h")),
            IntermediatePath.from_phones(("p", "h")),
            IntermediatePath.from_phones(("p", "h")),
            IntermediatePath.from_phones(("t", "d")),
            IntermediatePath.from_phones(("k",), ()),
        ]
        avg_paths, avg_edges = path_stats(ps)
        assert avg_paths == pytest.approx(1.5)
        assert avg_edges == pytest.approx(4 / 3)

    def test_recall(self):
        exp = {1: [IntermediatePath.from_phones(("p", "f", "h"))], 2: [IntermediatePath.from_phones(("k", "x", "ɣ", "h"))]}
        pred = {1: [IntermediatePath.from_phones(("p", "f", "h"))], 2: [IntermediatePath.from_phones(("k", "x", "h"))]}
        assert expert_path_recall(pred, exp) == pytest.approx(2 / 3)

    def test_recall_mismatched_ids(self):
        with pytest.raises(ValueError):
            expert_path_recall({1: []}, {2: [IntermediatePath.from_phones(("p", "f", "h"))]})


class TestDump:
    def test_round_trip(self, tmp_path):
        rows = [(1, IntermediatePath.from_phones(("p", "f", "h"), (0.1, 0.25))), ("x7", IntermediatePath.from_phones(("t", "d")))]
        f = tmp_path / "paths.tsv"
        write_path_dump(rows, f)
        back = read_path_dump(f)
        assert [(c, p) for c, p, _ in back] == rows

    def test_minimal_columns(self, tmp_path):
        f = tmp_path / "p.tsv"
        f.write_text("corr_id\tproto\treflex\tpath\n3\tp\th\tp>f>h\n", encoding="utf-8")
        (cid, p, line), = read_path_dump(f)
        assert cid == 3 and p.edge_costs == (1.0, 1.0) and line == 2

    def test_endpoint_mismatch_reports_line(self, tmp_path):
        f = tmp_path / "p.tsv"
        f.write_text("corr_id\tproto\treflex\tpath\n3\tp\th\tp>f\n", encoding="utf-8")
        with pytest.raises(ValueError, match=":2"):
            read_path_dump(f)
