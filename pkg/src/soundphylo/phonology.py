"""Articulatory feature table, phone encodings and feature edit distance."""
from __future__ import annotations

import csv
import unicodedata
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import numpy as np

NULL = "∅"

CELL_VALUES = {"+": 1, "-": -1, "0": 0}

# Modifier letters and combining marks treated as diacritics when pruning the
# graph inventory. Length, aspiration and glottalization are allowed.
DIACRITICS = frozenset(
    chr(c)
    for c in (
        0x2BC, 0x2B2, 0x2B7, 0x2DE, 0x2E0, 0x2E1, 0x2E4, 0x1DA3, 0x207F,
        0x303, 0x306, 0x308, 0x318, 0x319, 0x31D, 0x31E, 0x31F, 0x320,
        0x324, 0x325, 0x329, 0x32F, 0x330, 0x334, 0x33A, 0x33B, 0x33C,
    )
)
ALLOWED_DIACRITICS = frozenset("ːʰˀ")

INDEL_COST = 1.0
VOWEL_CONSONANT_PENALTY = 1.0


class UnknownPhoneError(KeyError):
    """Raised when a phone is missing from the feature table."""

    def __init__(self, phone):
        super().__init__(phone)
        self.phone = phone

    def __str__(self):
        return f"unknown phone {self.phone!r}"


class FeatureTableError(ValueError):
    pass


def normalize(phone: str) -> str:
    return unicodedata.normalize("NFD", phone.strip())


def has_disallowed_diacritic(phone: str) -> bool:
    return any(ch in DIACRITICS for ch in normalize(phone))


@dataclass(frozen=True)
class PhoneFeatureTable:
    """Immutable mapping from IPA phones to ternary feature vectors.

    Parameters
    ----------
    feature_names : tuple of str
        Feature labels in column order.
    vectors : dict
        NFD-normalized phone -> int8 array of length N with values in {-1, 0, 1}.
    diacritics : {"pruned", "full"}
        Policy used to derive :attr:`inventory`, the phone set offered to the
        phone graph. Lookup always works on the full set.
    """

    feature_names: tuple
    vectors: dict = field(repr=False)
    diacritics: str = "pruned"

    def __post_init__(self):
        if self.diacritics not in ("pruned", "full"):
            raise ValueError(f"unknown diacritic policy {self.diacritics!r}")
        n = len(self.feature_names)
        for phone, vec in self.vectors.items():
            if vec.shape != (n,) or not np.isin(vec, (-1, 0, 1)).all():
                raise FeatureTableError(f"invalid feature vector for {phone!r}")
            vec.setflags(write=False)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    @property
    def phones(self) -> list:
        return list(self.vectors)

    @property
    def inventory(self) -> list:
        if self.diacritics == "full":
            return list(self.vectors)
        return [p for p in self.vectors if not has_disallowed_diacritic(p)]

    def __contains__(self, phone) -> bool:
        return isinstance(phone, str) and normalize(phone) in self.vectors

    def __len__(self) -> int:
        return len(self.vectors)

    def feature_index(self, name: str) -> int:
        return self.feature_names.index(name)

    def encode(self, phone: str) -> np.ndarray:
        try:
            return self.vectors[normalize(phone)]
        except KeyError:
            raise UnknownPhoneError(phone) from None

    def matrix(self, phones) -> np.ndarray:
        """Stack encodings of ``phones`` into an (n, N) int8 array."""
        return np.stack([self.encode(p) for p in phones]) if phones else np.zeros(
            (0, self.n_features), dtype=np.int8
        )

    def with_policy(self, diacritics: str) -> "PhoneFeatureTable":
        return PhoneFeatureTable(self.feature_names, self.vectors, diacritics)


def load_feature_table(path=None, diacritics: str = "pruned") -> PhoneFeatureTable:
    """Read a ``phone,<feature...>`` CSV with cells in ``{+, -, 0}``.

    With ``path=None`` the bundled 24-feature table is loaded.
    """
    if path is None:
        return default_feature_table().with_policy(diacritics)
    with open(path, encoding="utf-8", newline="") as fh:
        return _parse_table(fh, str(path), diacritics)


@lru_cache(maxsize=1)
def default_feature_table() -> PhoneFeatureTable:
    ref = resources.files("soundphylo") / "data" / "features.csv"
    with ref.open(encoding="utf-8", newline="") as fh:
        return _parse_table(fh, "features.csv", "pruned")


def _parse_table(fh, name, diacritics):
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise FeatureTableError(f"{name}: empty file") from None
    if not header or header[0].strip() != "phone":
        raise FeatureTableError(f"{name}:1: header must start with 'phone'")
    features = tuple(h.strip() for h in header[1:])
    if not features:
        raise FeatureTableError(f"{name}:1: no feature columns")
    vectors = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or not "".join(row).strip():
            continue
        if len(row) != len(features) + 1:
            raise FeatureTableError(
                f"{name}:{lineno}: expected {len(features) + 1} cells, got {len(row)}"
            )
        phone = normalize(row[0])
        if not phone:
            raise FeatureTableError(f"{name}:{lineno}: empty phone")
        if phone in vectors:
            raise FeatureTableError(f"{name}:{lineno}: duplicate phone {phone!r}")
        try:
            values = [CELL_VALUES[c.strip()] for c in row[1:]]
        except KeyError as exc:
            raise FeatureTableError(
                f"{name}:{lineno}: unknown cell value {exc.args[0]!r}"
            ) from None
        vectors[phone] = np.array(values, dtype=np.int8)
    if not vectors:
        raise FeatureTableError(f"{name}: no phones")
    return PhoneFeatureTable(features, vectors, diacritics)


def encode(table: PhoneFeatureTable, phone: str) -> np.ndarray:
    return table.encode(phone)


def one_hot(vector) -> np.ndarray:
    """Expand a ternary vector to 3N bits; slot ``3f + (v + 1)`` is set."""
    v = np.asarray(vector, dtype=np.int64)
    out = np.zeros(3 * v.shape[-1], dtype=np.float64) if v.ndim == 1 else np.zeros(
        v.shape[:-1] + (3 * v.shape[-1],), dtype=np.float64
    )
    idx = 3 * np.arange(v.shape[-1]) + (v + 1)
    np.put_along_axis(out, idx, 1.0, axis=-1)
    return out


def decode_one_hot(bits) -> np.ndarray:
    b = np.asarray(bits).reshape(-1, 3)
    return (np.argmax(b, axis=1) - 1).astype(np.int8)


def fed(table: PhoneFeatureTable, a: str, b: str, indel_cost: float = INDEL_COST) -> float:
    """Proportion of features that differ; a whole phone against the null phone."""
    if a == NULL or b == NULL:
        if a == b:
            return 0.0
        other = b if a == NULL else a
        table.encode(other)
        return indel_cost
    va, vb = table.encode(a), table.encode(b)
    return float(np.count_nonzero(va != vb)) / table.n_features


def is_vowel(table, phone) -> bool:
    return _class_of(table, phone) == "V"


def _class_of(table, phone):
    try:
        syl, cons = table.feature_index("syl"), table.feature_index("cons")
    except ValueError:
        return None
    v = table.encode(phone)
    if v[syl] == 1 and v[cons] == -1:
        return "V"
    if v[syl] == -1 and v[cons] == 1:
        return "C"
    return None


def fed_aligned(
    table: PhoneFeatureTable,
    a: str,
    b: str,
    penalty: float = VOWEL_CONSONANT_PENALTY,
    indel_cost: float = INDEL_COST,
) -> float:
    """FED plus ``penalty`` for vowel/consonant substitutions (alignment only)."""
    cost = fed(table, a, b, indel_cost)
    if NULL in (a, b):
        return cost
    ca, cb = _class_of(table, a), _class_of(table, b)
    if {ca, cb} == {"V", "C"}:
        cost += penalty
    return cost
