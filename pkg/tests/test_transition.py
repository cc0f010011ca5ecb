import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from soundphylo.graph import IntermediatePath, write_path_dump
from soundphylo.phonology import NULL, fed
from soundphylo.transition import (
    Correspondence,
    build_matrix,
    direct_paths,
    load_correspondences,
    load_expert_paths,
    write_correspondences,
    write_matrix,
)

P = IntermediatePath.from_phones


def corr(proto="p", **reflexes):
    return Correspondence(1, proto, reflexes)


class TestCorrespondence:
    def test_load(self, tmp_path, table):
        f = tmp_path / "c.tsv"
        f.write_text("id\tproto\tA\tB\tC\n1\tp\tf\th\t-\n2\tt\td\t∅\tt\n", encoding="utf-8")
        cs = load_correspondences(f, table)
        assert cs[0].reflexes == {"A": "f", "B": "h", "C": None}
        assert cs[1].reflexes["B"] == NULL
        assert cs[0].distinct_reflexes() == ["f", "h"]

    def test_round_trip(self, tmp_path):
        cs = [Correspondence(1, "p", {"A": "f", "B": None, "C": "p"})]
        f = tmp_path / "c.tsv"
        write_correspondences(cs, ["A", "B", "C"], f)
        assert load_correspondences(f) == cs

    @pytest.mark.parametrize(
        "body, line",
        [
            ("1\tp\tf\n", ":2"),
            ("1\tp\tf\th\n1\tt\td\tt\n", ":3"),
            ("1\tp\tf\t-\n", ":2"),
            ("1\tp\tʘ↓\th\n", ":2"),
        ],
    )
    def test_errors_report_line(self, tmp_path, table, body, line):
        f = tmp_path / "c.tsv"
        f.write_text("id\tproto\tA\tB\n" + body, encoding="utf-8")
        with pytest.raises(ValueError, match=line):
            load_correspondences(f, table)

    def test_bad_header(self, tmp_path):
        f = tmp_path / "c.tsv"
        f.write_text("proto\tid\tA\tB\n", encoding="utf-8")
        with pytest.raises(ValueError, match="header"):
            load_correspondences(f)


class TestBuildMatrix:
    def test_unit_edges_chain(self):
        c = corr(A="f", B="h")
        m = build_matrix(c, [P(("p", "f", "h"))])
        assert m.states == ("p", "f", "h")
        assert m("p", "f") == 1 and m("p", "h") == 2 and m("f", "h") == 1
        assert m("h", "p") == m.penalty == 2000.0
        assert m("p", "p") == 0

    def test_weighted(self):
        c = corr(A="f", B="h")
        m = build_matrix(c, [P(("p", "f", "h"), (0.25, 0.5)), P(("p", "h"), (2.0,))], mode="aiscp-weighted")
        assert m("p", "h") == 0.75
        assert m.penalty == 1000.0

    def test_explicit_penalty(self):
        m = build_matrix(corr(A="f", B="p"), [P(("p", "f"))], penalty=7.0)
        assert m("f", "p") == 7.0

    def test_unreached_reflex_is_a_state(self):
        m = build_matrix(corr(A="f", B="h"), [P(("p", "f"))])
        assert "h" in m.states
        assert m("p", "h") == m.penalty

    def test_wrong_endpoint(self):
        with pytest.raises(ValueError):
            build_matrix(corr(A="f", B="h"), [P(("t", "f"))])

    def test_no_paths(self):
        with pytest.raises(ValueError):
            build_matrix(corr(A="f", B="h"), [])

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            build_matrix(corr(A="f", B="h"), [P(("p", "f"))], mode="nope")

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_closure_is_shortest_path(self, seed):
        # random path sets over a small alphabet; compare with brute force walks
        rng = np.random.default_rng(seed)
        alphabet = ["f", "h", "x", "s", "z"]
        paths = []
        for _ in range(int(rng.integers(1, 4))):
            mid = list(rng.permutation(alphabet)[: int(rng.integers(0, 3))])
            end = str(rng.choice(["h", "z"]))
            seq = ["p"] + [m for m in mid if m != end] + [end]
            paths.append(P(seq, rng.uniform(0.1, 3, len(seq) - 1)))
        c = corr(A="h", B="z")
        m = build_matrix(c, paths, mode="aiscp-weighted")
        edges = {}
        for p in paths:
            for (a, b), w in zip(zip(p.phones, p.phones[1:]), p.edge_costs):
                edges[a, b] = min(edges.get((a, b), math.inf), w)
        states = m.states
        for a, b in itertools.product(states, repeat=2):
            best = 0.0 if a == b else math.inf
            others = [s for s in states if s not in (a, b)]
            for r in range(len(others) + 1):
                for mid in itertools.permutations(others, r):
                    seq = (a, *mid, b)
                    if a == b:
                        continue
                    cost = sum(edges.get(e, math.inf) for e in zip(seq, seq[1:]))
                    best = min(best, cost)
            expected = best if math.isfinite(best) else m.penalty
            assert m(a, b) == pytest.approx(expected)


class TestDirectPaths:
    def test_single_edges(self, table):
        ps = direct_paths(corr(A="f", B="p"), table)
        assert [str(p) for p in ps] == ["p>f", "p"]
        assert ps[0].total_cost == pytest.approx(fed(table, "p", "f"))


class TestIO:
    def test_expert_paths_dedup(self, tmp_path, table):
        f = tmp_path / "e.tsv"
        write_path_dump([(1, P(("p", "f", "h"))), (1, P(("p", "f", "h"))), (2, P(("t", "d")))], f)
        got = load_expert_paths(f, table)
        assert {k: [str(p) for p in v] for k, v in got.items()} == {1: ["p>f>h"], 2: ["t>d"]}

    def test_expert_paths_empty(self, tmp_path):
        f = tmp_path / "e.tsv"
        f.write_text("corr_id\tproto\treflex\tpath\n", encoding="utf-8")
        with pytest.raises(ValueError):
            load_expert_paths(f)

    def test_write_matrix(self, tmp_path):
        m = build_matrix(corr(A="f", B="h"), [P(("p", "f", "h"))])
        f = tmp_path / "m.tsv"
        write_matrix(m, f)
        lines = f.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "# corr_id=1\tmode=expert-unit-edges\tpenalty=2000.0"
        assert lines[1] == "\tp\tf\th"
        assert lines[2].split("\t") == ["p", "0.0", "1.0", "2.0"]
