import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import all_rooted_trees, oracle_quartet
from soundphylo.trees import (
    NewickError,
    RootedTree,
    butterflies,
    classify_quartet,
    gqd,
    majority_consensus,
    parse_newick,
    read_newick_file,
    render_ascii,
)

LABELS5 = ["A", "B", "C", "D", "E"]
ALL5 = [RootedTree.from_nested(t) for t in all_rooted_trees(LABELS5)]


def random_tree(labels, rng):
    """Random rooted tree by repeated merging, with occasional multifurcations."""
    nodes = list(labels)
    while len(nodes) > 1:
        k = 3 if len(nodes) >= 3 and rng.random() < 0.2 else 2
        picked = rng.sample(range(len(nodes)), k)
        merged = tuple(nodes[i] for i in picked)
        nodes = [n for i, n in enumerate(nodes) if i not in picked] + [merged]
    return RootedTree.from_nested(nodes[0])


class TestNewick:
    def test_parse_and_canonical(self):
        t = parse_newick("((C,A),(B,D));")
        assert t.newick() == "((A,C),(B,D));"
        assert t.leaves == ["A", "B", "C", "D"]

    def test_branch_lengths_and_labels_ignored(self):
        t = parse_newick("((A:0.1,B:2)ab:0.5,C);")
        assert t.newick() == "((A,B),C);"

    def test_quoted(self):
        t = parse_newick("('Old Irish',B);")
        assert "Old Irish" in t.leaf_set
        assert parse_newick(t.newick()) == t

    def test_unary_suppressed(self):
        assert parse_newick("(((A,B)),C);").newick() == "((A,B),C);"

    @pytest.mark.parametrize("text", ["((A,B);", "(A,B));", "(A,B)", "(A,A);", "(A,B);x", ""])
    def test_malformed(self, text):
        with pytest.raises(NewickError):
            parse_newick(text)

    def test_round_trip_all_shapes(self):
        assert len(ALL5) == 236
        for t in ALL5:
            assert parse_newick(t.newick()) == t

    def test_distinct_shapes(self):
        assert len({t.newick() for t in ALL5}) == 236

    def test_read_file(self, tmp_path):
        f = tmp_path / "t.nwk"
        f.write_text("(A,B);\n((A,B),C);\n", encoding="utf-8")
        assert [t.newick() for t in read_newick_file(f)] == ["(A,B);", "((A,B),C);"]

    def test_ascii(self):
        assert render_ascii(parse_newick("((B,A),C);")) == "+\n  +\n    A\n    B\n  C"


class TestClades:
    def test_clades(self):
        t = parse_newick("(((A,B),C),(D,E));")
        assert t.clades() == {frozenset("AB"), frozenset("ABC"), frozenset("DE")}
        assert t.is_binary()

    @pytest.mark.parametrize("t", ALL5[::7])
    def test_from_clades_inverse(self, t):
        assert RootedTree.from_clades(t.leaves, t.clades()) == t

    def test_incompatible(self):
        with pytest.raises(ValueError):
            RootedTree.from_clades("ABCD", [frozenset("AB"), frozenset("BC")])

    def test_mrca(self):
        t = parse_newick("(((A,B),C),(D,E));")
        assert t.clusters()[t.mrca(["A", "C"])] == frozenset("ABC")


class TestQuartets:
    @pytest.mark.parametrize(
        "text, kind, pairing",
        [
            ("((A,B),(C,D));", "butterfly", ("AB", "CD")),
            ("(((A,B),C),D);", "butterfly", ("AB", "CD")),
            ("((A,B),C,D);", "butterfly", ("AB", "CD")),
            ("((A,B,C),D);", "butterfly", ("ABC", "D")),
            ("(A,B,C,D);", "star", None),
        ],
    )
    def test_hand_cases(self, text, kind, pairing):
        c = classify_quartet(parse_newick(text), "ABCD")
        assert c.kind == kind
        if pairing:
            assert c.pairing == frozenset(frozenset(g) for g in pairing)

    def test_all_shapes_against_oracle(self):
        for t in ALL5:
            for q in itertools.combinations(LABELS5, 4):
                kind, pairing = oracle_quartet(t.to_nested(), q)
                c = classify_quartet(t, q)
                assert (c.kind, c.pairing) == (kind, pairing), (t, q)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10**9))
    def test_random_trees_against_oracle(self, seed):
        rng = random.Random(seed)
        labels = [f"L{i}" for i in range(rng.randint(4, 9))]
        t = random_tree(labels, rng)
        for q in rng.sample(list(itertools.combinations(labels, 4)), min(10, len(list(itertools.combinations(labels, 4))))):
            kind, pairing = oracle_quartet(t.to_nested(), q)
            c = classify_quartet(t, q)
            assert (c.kind, c.pairing) == (kind, pairing)

    def test_bad_quartet(self):
        t = parse_newick("((A,B),(C,D));")
        with pytest.raises(ValueError):
            classify_quartet(t, "AABC")
        with pytest.raises(KeyError):
            classify_quartet(t, "ABCZ")


class TestGqd:
    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10**9))
    def test_self_distance_zero(self, seed):
        rng = random.Random(seed)
        t = random_tree([f"L{i}" for i in range(rng.randint(4, 10))], rng)
        assert gqd(t, t) == 0.0

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10**9))
    def test_range(self, seed):
        rng = random.Random(seed)
        labels = [f"L{i}" for i in range(rng.randint(4, 9))]
        g, h = random_tree(labels, rng), random_tree(labels, rng)
        if butterflies(g):
            assert 0.0 <= gqd(h, g) <= 1.0

    def test_star_hypothesis(self):
        g = parse_newick("((A,B),(C,D));")
        assert gqd(parse_newick("(A,B,C,D);"), g) == 1.0

    def test_unresolved_hypothesis_can_match(self):
        assert gqd(parse_newick("((A,B),C,D);"), parse_newick("((A,B),(C,D));")) == 0.0

    def test_conflict(self):
        assert gqd(parse_newick("((A,C),(B,D));"), parse_newick("((A,B),(C,D));")) == 1.0

    def test_leaf_mismatch(self):
        with pytest.raises(ValueError):
            gqd(parse_newick("((A,B),(C,E));"), parse_newick("((A,B),(C,D));"))

    def test_counts_share(self):
        g = parse_newick("(((A,B),C),(D,E));")
        h = parse_newick("(((A,B),D),(C,E));")
        bg = butterflies(g)
        bh = butterflies(h)
        shared = sum(bh.get(q) == p for q, p in bg.items())
        assert gqd(h, g) == pytest.approx(1 - shared / len(bg))


class TestConsensus:
    def test_majority(self):
        trees = [parse_newick(s) for s in ["((A,B),(C,D));", "((A,B),C,D);", "((A,C),(B,D));"]]
        assert majority_consensus(trees).newick() == "((A,B),C,D);"

    def test_identical(self):
        t = parse_newick("(((A,B),C),(D,E));")
        assert majority_consensus([t, t, t]) == t

    def test_half_is_not_majority(self):
        trees = [parse_newick("((A,B),(C,D));"), parse_newick("((A,C),(B,D));")]
        assert majority_consensus(trees).newick() == "(A,B,C,D);"

    def test_leaf_mismatch(self):
        with pytest.raises(ValueError):
            majority_consensus([parse_newick("(A,B);"), parse_newick("(A,C);")])
