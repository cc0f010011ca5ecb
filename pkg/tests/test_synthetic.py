import pytest

from soundphylo.cli import main
from soundphylo.parsimony import PackedCharacters, all_binary_trees, sankoff_characters, tree_to_nested
from soundphylo.synthetic import make_family
from soundphylo.transition import build_matrix
from soundphylo.trees import parse_newick


def test_bundled_data_matches_generator(tmp_path, synthetic_dir):
    assert main(["synth", "--out-dir", str(tmp_path)]) == 0
    for f in sorted(synthetic_dir.iterdir()):
        assert (tmp_path / f.name).read_bytes() == f.read_bytes(), f.name


def test_default_family_shape():
    fam = make_family()
    assert len(fam.languages) == 8
    assert fam.gold.is_binary()
    assert len(fam.correspondences) == len(fam.gold.clades())


def test_each_clade_carries_one_innovation():
    fam = make_family(n_languages=6, seed=2)
    innovating = {frozenset(l for l, r in c.reflexes.items() if r != c.proto) for c in fam.correspondences}
    assert innovating == fam.gold.clades()


def test_gold_is_unique_optimum():
    fam = make_family(n_languages=6, seed=5)
    mats = {c.id: build_matrix(c, fam.expert_paths[c.id]) for c in fam.correspondences}
    packed = PackedCharacters(sankoff_characters(fam.correspondences, mats), fam.languages)
    gold = tree_to_nested(fam.gold, fam.languages)
    scores = {t: packed.score(t) for t in all_binary_trees(6)}
    best = min(scores.values())
    assert scores[gold] == best
    assert [t for t, s in scores.items() if s == best] == [gold]


def test_extra_characters_nest():
    fam = make_family(n_languages=8, n_characters=12, seed=1)
    assert len(fam.correspondences) == 12
    for c in fam.correspondences[len(fam.gold.clades()):]:
        assert len(set(c.reflexes.values())) == 3


def test_seeded():
    a, b = make_family(seed=3), make_family(seed=3)
    assert a.gold == b.gold
    assert a.correspondences == b.correspondences and a.cognates == b.cognates


def test_too_few():
    with pytest.raises(ValueError):
        make_family(n_languages=3)
    with pytest.raises(ValueError):
        make_family(n_languages=8, n_characters=2)


def test_default_gold_tree():
    assert make_family().gold == parse_newick("((((L1,L2),L3),(L5,L7)),(L4,(L6,L8)));")
