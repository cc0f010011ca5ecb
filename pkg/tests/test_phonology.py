import itertools
import unicodedata

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from soundphylo.phonology import (
    NULL,
    FeatureTableError,
    UnknownPhoneError,
    decode_one_hot,
    encode,
    fed,
    fed_aligned,
    load_feature_table,
    one_hot,
)

HEADER = "phone,a,b,c\n"


def write(tmp_path, text, name="f.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def count_diff(rows, a, b):
    return sum(rows[a][k] != rows[b][k] for k in rows[a] if k != "phone")


class TestLoad:
    def test_shipped_table_shape(self, table):
        assert table.n_features == 24
        assert len(encode(table, "t")) == 24

    def test_pruned_policy(self, table):
        inv = set(table.inventory)
        nfd = lambda p: unicodedata.normalize("NFD", p)
        assert nfd("t̪ʰ") in inv
        assert "tʰ" in inv and "tː" in inv and "tˀ" in inv
        assert nfd("t̻") not in inv
        assert nfd("t̻") in table
        assert nfd("ẽ") not in inv and nfd("ẽ") in table

    def test_full_policy_keeps_everything(self, table):
        full = table.with_policy("full")
        assert set(full.inventory) == set(full.phones)

    def test_row_parse(self, tmp_path):
        t = load_feature_table(write(tmp_path, HEADER + "t,-,+,0\n"))
        assert list(t.encode("t")) == [-1, 1, 0]
        assert t.feature_names == ("a", "b", "c")

    def test_duplicate_phone(self, tmp_path):
        with pytest.raises(FeatureTableError, match="'p'"):
            load_feature_table(write(tmp_path, HEADER + "p,-,+,0\np,+,+,0\n"))

    def test_wrong_arity_reports_line(self, tmp_path):
        with pytest.raises(FeatureTableError, match=":3"):
            load_feature_table(write(tmp_path, HEADER + "p,-,+,0\nb,-,+\n"))

    def test_unknown_cell_reports_line(self, tmp_path):
        with pytest.raises(FeatureTableError, match=":2"):
            load_feature_table(write(tmp_path, HEADER + "p,-,x,0\n"))

    def test_bad_header(self, tmp_path):
        with pytest.raises(FeatureTableError):
            load_feature_table(write(tmp_path, "ipa,a\np,+\n"))

    def test_nfd_normalization(self, tmp_path):
        t = load_feature_table(write(tmp_path, HEADER + "\u00e3,-,+,0\n"))
        assert "a\u0303" in t
        assert "\u00e3" in t
        assert t.phones == ["a\u0303"]


class TestEncode:
    def test_voicing(self, table):
        v = table.feature_index("voi")
        assert encode(table, "d")[v] == 1
        assert encode(table, "t")[v] == -1

    def test_deterministic(self, table):
        assert np.array_equal(encode(table, "p"), encode(table, "p"))

    def test_unknown(self, table):
        with pytest.raises(UnknownPhoneError) as e:
            encode(table, "ʘ↓")
        assert e.value.phone == "ʘ↓"


class TestOneHot:
    def test_layout(self):
        assert list(one_hot(np.array([-1]))) == [1, 0, 0]
        assert list(one_hot(np.array([0]))) == [0, 1, 0]
        assert list(one_hot(np.array([1]))) == [0, 0, 1]

    def test_full_width(self, table):
        bits = one_hot(encode(table, "t"))
        assert bits.shape == (72,)
        assert bits.sum() == 24
        assert (bits.reshape(24, 3).sum(axis=1) == 1).all()

    @given(st.lists(st.sampled_from([-1, 0, 1]), min_size=1, max_size=30))
    def test_round_trip(self, values):
        v = np.array(values)
        assert np.array_equal(decode_one_hot(one_hot(v)), v)

    @given(
        st.lists(st.sampled_from([-1, 0, 1]), min_size=5, max_size=5),
        st.lists(st.sampled_from([-1, 0, 1]), min_size=5, max_size=5),
    )
    def test_injective(self, a, b):
        if a != b:
            assert not np.array_equal(one_hot(np.array(a)), one_hot(np.array(b)))


class TestFed:
    def test_t_d_from_raw_rows(self, table, raw_rows):
        assert count_diff(raw_rows, "t", "d") == 1
        assert fed(table, "t", "d") == 1 / 24

    def test_t_k_ratio(self, table, raw_rows):
        # the shipped table separates t and k on five features; four of them are
        # polarity flips (+/-) and one goes from - to "not applicable"
        n = count_diff(raw_rows, "t", "k")
        assert n == 5
        assert fed(table, "t", "k") == pytest.approx(n * fed(table, "t", "d"))
        flips = sum(
            {raw_rows["t"][k], raw_rows["k"][k]} == {"+", "-"} for k in raw_rows["t"] if k != "phone"
        )
        assert flips == 4

    def test_identity(self, table):
        assert fed(table, "p", "p") == 0

    def test_null(self, table):
        assert fed(table, NULL, "a") == 1.0
        assert fed(table, "a", NULL) == 1.0
        assert fed(table, NULL, NULL) == 0.0

    def test_unknown(self, table):
        with pytest.raises(UnknownPhoneError):
            fed(table, "p", "ʘ↓")

    def test_metric_on_subset(self, table):
        phones = ["p", "b", "t", "d", "k", "ɡ", "s", "a", "i", "m"]
        for a, b in itertools.product(phones, repeat=2):
            assert fed(table, a, b) == fed(table, b, a)
            assert 0 <= fed(table, a, b) <= 1
        for a, b, c in itertools.product(phones, repeat=3):
            assert fed(table, a, c) <= fed(table, a, b) + fed(table, b, c) + 1e-12

    @settings(max_examples=200)
    @given(st.data())
    def test_bounded(self, table, data):
        inv = table.inventory
        a = data.draw(st.sampled_from(inv))
        b = data.draw(st.sampled_from(inv))
        assert 0 <= fed(table, a, b) <= 1
        assert fed(table, a, b) == fed(table, b, a)


class TestFedAligned:
    def test_consonants_unpenalized(self, table):
        assert fed_aligned(table, "t", "d") == fed(table, "t", "d")

    def test_vowel_consonant_penalty(self, table):
        assert fed_aligned(table, "a", "t") == fed(table, "a", "t") + 1.0

    def test_argmin(self, table, raw_rows):
        # costs from the raw rows: d differs in 1 feature, k in 5, a is a vowel
        costs = {x: count_diff(raw_rows, "t", x) / 24 for x in ("d", "k", "a")}
        costs["a"] += 1.0
        assert min(costs, key=costs.get) == "d"
        got = {x: fed_aligned(table, "t", x) for x in ("d", "k", "a")}
        assert got == pytest.approx(costs)
        assert min(got, key=got.get) == "d"
