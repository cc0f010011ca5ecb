"""Sound law induction: alignment, base rules and minimal generalization."""
from __future__ import annotations

import csv
import logging
from collections import Counter
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .parsimony import BinaryCharacter
from .phonology import INDEL_COST, NULL, VOWEL_CONSONANT_PENALTY, PhoneFeatureTable, fed_aligned, normalize
from .transition import Correspondence

log = logging.getLogger(__name__)

PROTO = "PROTO"
BOUNDARY = "#"
ACCURACY_THRESHOLD = 0.6


@dataclass(frozen=True)
class CognateEntry:
    cogid: str
    language: str
    segments: tuple


def load_cognates(path, table: PhoneFeatureTable) -> list:
    """Read ``cogid<TAB>language<TAB>segments``; entries with unknown phones are dropped."""
    entries = []
    dropped = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            cells = line.split("\t")
            if lineno == 1 and cells[:2] == ["cogid", "language"]:
                continue
            if len(cells) != 3:
                raise ValueError(f"{path}:{lineno}: expected cogid<TAB>language<TAB>segments")
            segs = tuple(normalize(s) for s in cells[2].split())
            if not segs:
                raise ValueError(f"{path}:{lineno}: empty segments")
            bad = [s for s in segs if s not in table]
            if bad:
                log.warning("%s:%d: dropping entry with unknown phones %s", path, lineno, bad)
                dropped += 1
                continue
            entries.append(CognateEntry(cells[0].strip(), cells[1].strip(), segs))
    if not entries:
        raise ValueError(f"{path}: no usable cognate entries")
    return entries


def write_cognates(entries, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("cogid\tlanguage\tsegments\n")
        for e in entries:
            fh.write(f"{e.cogid}\t{e.language}\t{' '.join(e.segments)}\n")


# alignment -----------------------------------------------------------------------


@dataclass(frozen=True)
class Alignment:
    columns: tuple
    total_cost: float

    def __post_init__(self):
        if any(p == NULL and d == NULL for p, d in self.columns):
            raise ValueError("empty column in alignment")

    @property
    def proto(self):
        return tuple(p for p, _ in self.columns if p != NULL)

    @property
    def daughter(self):
        return tuple(d for _, d in self.columns if d != NULL)


def needleman_wunsch(
    proto,
    daughter,
    table: PhoneFeatureTable,
    gap_cost: float = INDEL_COST,
    penalty: float = VOWEL_CONSONANT_PENALTY,
) -> Alignment:
    """Global alignment with feature-based substitution costs.

    Tracebacks prefer substitution, then deletion, then insertion.
    """
    proto, daughter = tuple(proto), tuple(daughter)
    if not proto or not daughter:
        raise ValueError("cannot align empty sequences")
    for ph in proto + daughter:
        table.encode(ph)
    n, m = len(proto), len(daughter)
    D = np.zeros((n + 1, m + 1))
    for i in range(1, n + 1):
        D[i, 0] = D[i - 1, 0] + gap_cost
    for j in range(1, m + 1):
        D[0, j] = D[0, j - 1] + gap_cost
    sub = {}
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            s = sub[i, j] = fed_aligned(table, proto[i - 1], daughter[j - 1], penalty)
            D[i, j] = min(D[i - 1, j - 1] + s, D[i - 1, j] + gap_cost, D[i, j - 1] + gap_cost)
    cols = []
    i, j = n, m
    while i or j:
        if i and j and D[i, j] == D[i - 1, j - 1] + sub[i, j]:
            cols.append((proto[i - 1], daughter[j - 1]))
            i, j = i - 1, j - 1
        elif i and D[i, j] == D[i - 1, j] + gap_cost:
            cols.append((proto[i - 1], NULL))
            i -= 1
        else:
            cols.append((NULL, daughter[j - 1]))
            j -= 1
    return Alignment(tuple(reversed(cols)), float(D[n, m]))


def _sites(alignment: Alignment):
    """Proto word with boundaries, per-position reflexes and per-gap insertions."""
    word = [BOUNDARY]
    reflex = {}
    inserted = {}
    for p, d in alignment.columns:
        if p == NULL:
            inserted.setdefault(len(word), []).append(d)
        else:
            reflex[len(word)] = d
            word.append(p)
    word.append(BOUNDARY)
    return tuple(word), reflex, inserted


# context elements ---------------------------------------------------------------


class _Free:
    """Free variable: matches any remaining material."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "X"

    def __reduce__(self):
        return (_Free, ())


FREE = _Free()


@dataclass(frozen=True)
class FeatureClass:
    """Natural class: phones agreeing on every (feature index, value) pair."""

    spec: frozenset
    names: tuple = field(compare=False, hash=False, repr=False, default=())

    def matches(self, phone, table) -> bool:
        if phone == BOUNDARY or phone not in table:
            return False
        v = table.encode(phone)
        return all(v[f] == val for f, val in self.spec)

    def __str__(self):
        sym = {1: "+", -1: "-", 0: "0"}
        return "[" + ",".join(f"{sym[v]}{self.names[f] if self.names else f}" for f, v in sorted(self.spec)) + "]"


class PhoneSet(frozenset):
    """Set context element that remembers first-seen order for display."""

    def __new__(cls, phones=()):
        phones = list(dict.fromkeys(phones))
        self = super().__new__(cls, phones)
        self.order = tuple(phones)
        return self

    def __reduce__(self):
        return (PhoneSet, (self.order,))

    def __str__(self):
        return "(" + "|".join(self.order) + ")"


def _element_str(e) -> str:
    if isinstance(e, frozenset) and not isinstance(e, PhoneSet):
        return "(" + "|".join(sorted(e)) + ")"
    return str(e)


def _element_matches(e, phone, table) -> bool:
    if e is FREE:
        return True
    if isinstance(e, frozenset):
        return phone in e
    if isinstance(e, FeatureClass):
        return e.matches(phone, table)
    return e == phone


def _match_outward(elements, material, table) -> bool:
    """``elements`` and ``material`` both ordered outward from the change site."""
    for k, e in enumerate(elements):
        if e is FREE:
            return True
        if k >= len(material) or not _element_matches(e, material[k], table):
            return False
    return True


@dataclass(frozen=True)
class SoundLaw:
    """``target -> replacement / left _ right`` plus fit statistics.

    ``left`` and ``right`` are stored in reading order. ``hits_by_language``
    is a sorted tuple of (language, hits) pairs.
    """

    target: str
    replacement: str
    left: tuple = ()
    right: tuple = ()
    scope: int = 0
    hits: int = 0
    hits_by_language: tuple = ()

    def __post_init__(self):
        if self.target == self.replacement:
            raise ValueError("a sound law must change something")
        if not 0 <= self.hits <= self.scope:
            raise ValueError("hits must lie in [0, scope]")

    @property
    def pattern(self):
        return (self.target, self.replacement, self.left, self.right)

    @property
    def accuracy(self):
        return self.hits / self.scope if self.scope else None

    @property
    def languages(self) -> frozenset:
        return frozenset(l for l, h in self.hits_by_language if h > 0)

    def format(self, arrow: str = "→") -> str:
        left = " ".join(_element_str(e) for e in self.left)
        right = " ".join(_element_str(e) for e in self.right)
        env = " ".join(x for x in (left, "_", right) if x)
        return f"{self.target} {arrow} {self.replacement} / {env}"

    def __str__(self):
        return self.format()

    def with_stats(self, scope, hits, by_language=None) -> "SoundLaw":
        by = tuple(sorted((by_language or {}).items()))
        return replace(self, scope=scope, hits=hits, hits_by_language=by)

    def applies_at(self, word, i, table) -> bool:
        """Whether the context fits around proto position ``i`` (or gap ``i`` for insertions)."""
        if self.target == NULL:
            left_mat, right_mat = word[:i][::-1], word[i:]
        else:
            if word[i] != self.target:
                return False
            left_mat, right_mat = word[:i][::-1], word[i + 1 :]
        return _match_outward(self.left[::-1], left_mat, table) and _match_outward(self.right, right_mat, table)


def extract_base_rules(alignment: Alignment, cogid=None, language=None) -> list:
    """One law per changed column with the whole proto word as context."""
    word, reflex, inserted = _sites(alignment)
    laws = []
    for i in range(1, len(word) - 1):
        for d in inserted.get(i, ()):
            laws.append(SoundLaw(NULL, d, word[:i], word[i:]))
        if reflex[i] != word[i]:
            laws.append(SoundLaw(word[i], reflex[i], word[:i], word[i + 1 :]))
    for d in inserted.get(len(word) - 1, ()):
        laws.append(SoundLaw(NULL, d, word[:-1], word[-1:]))
    return laws


def law_sites(law: SoundLaw, alignment: Alignment, table=None):
    """Yield (site, outcome) for each place the law's context matches.

    For insertions the outcome is the list of phones inserted at the gap.
    """
    word, reflex, inserted = _sites(alignment)
    if law.target == NULL:
        for g in range(1, len(word)):
            if law.applies_at(word, g, table):
                yield g, inserted.get(g, [])
    else:
        for i in range(1, len(word) - 1):
            if law.applies_at(word, i, table):
                yield i, reflex[i]


def law_accuracy(law: SoundLaw, corpus, table=None):
    """(scope, hits) of ``law`` over an iterable of alignments."""
    scope = hits = 0
    for al in corpus:
        for _, outcome in law_sites(law, al, table):
            scope += 1
            if law.target == NULL:
                hits += law.replacement in outcome
            else:
                hits += outcome == law.replacement
    return scope, hits


def filter_by_accuracy(laws, threshold: float = ACCURACY_THRESHOLD) -> list:
    """Keep laws with scope > 0 and accuracy strictly above ``threshold``."""
    return [l for l in laws if l.scope and l.hits / l.scope > threshold]


def _score(law, corpus_by_language, table):
    by = {}
    scope = hits = 0
    for lang, corpus in corpus_by_language.items():
        s, h = law_accuracy(law, corpus, table)
        scope += s
        hits += h
        if s:
            by[lang] = h
    return law.with_stats(scope, hits, by)


# minimal generalization ---------------------------------------------------------


def _feature_class(e, table) -> FeatureClass | None:
    if isinstance(e, FeatureClass):
        return e
    if isinstance(e, frozenset):
        specs = [_feature_class(x, table) for x in e]
        if any(s is None for s in specs):
            return None
        spec = frozenset.intersection(*(s.spec for s in specs))
        return FeatureClass(spec, tuple(table.feature_names))
    if e == BOUNDARY or e is FREE or e not in table:
        return None
    v = table.encode(e)
    return FeatureClass(frozenset(enumerate(int(x) for x in v)), tuple(table.feature_names))


def _join(e1, e2, table, mode):
    if BOUNDARY in (e1, e2):
        return None
    if mode == "feature-class":
        c1, c2 = _feature_class(e1, table), _feature_class(e2, table)
        if c1 is None or c2 is None:
            return None
        spec = c1.spec & c2.spec
        return FeatureClass(spec, c1.names) if spec else None
    o1 = e1.order if isinstance(e1, PhoneSet) else sorted(e1) if isinstance(e1, frozenset) else [e1]
    o2 = e2.order if isinstance(e2, PhoneSet) else sorted(e2) if isinstance(e2, frozenset) else [e2]
    return PhoneSet([*o1, *o2])


def _generalize_side(c1, c2, table, mode):
    """Merge two contexts given in outward order."""
    out = []
    for k in range(max(len(c1), len(c2))):
        if k >= len(c1) or k >= len(c2):
            break
        e1, e2 = c1[k], c2[k]
        if e1 is FREE or e2 is FREE:
            out.append(FREE)
            break
        if e1 == e2:
            out.append(e1)
            continue
        merged = _join(e1, e2, table, mode)
        if merged is None:
            out.append(FREE)
            break
        out.append(merged)
        if k + 1 < len(c1) or k + 1 < len(c2):
            out.append(FREE)
        break
    return tuple(out)


def generalize_pair(a: SoundLaw, b: SoundLaw, table=None, mode: str = "set") -> SoundLaw | None:
    """Most specific law covering both, or ``None`` when their changes differ."""
    if (a.target, a.replacement) != (b.target, b.replacement):
        return None
    left = _generalize_side(a.left[::-1], b.left[::-1], table, mode)[::-1]
    right = _generalize_side(a.right, b.right, table, mode)
    return SoundLaw(a.target, a.replacement, left, right)


def minimal_generalize(
    laws,
    table=None,
    corpus_by_language=None,
    mode: str = "set",
    max_rules: int = 2000,
) -> list:
    """Close ``laws`` under pairwise generalization of identical changes.

    New laws are scored on ``corpus_by_language`` (language -> alignments)
    when given. Output is deduplicated and sorted by change, then accuracy
    (descending). ``max_rules`` caps each change group.
    """
    if mode not in ("set", "feature-class"):
        raise ValueError("mode must be 'set' or 'feature-class'")
    groups = {}
    for law in laws:
        groups.setdefault((law.target, law.replacement), {}).setdefault(law.pattern, law)
    out = []
    for change in sorted(groups):
        known = groups[change]
        frontier = list(known.values())
        capped = False
        while frontier and not capped:
            new = {}
            current = list(known.values())
            for a in frontier:
                for b in current:
                    if a.pattern == b.pattern:
                        continue
                    g = generalize_pair(a, b, table, mode)
                    if g.pattern in known or g.pattern in new:
                        continue
                    new[g.pattern] = g
                    if len(known) + len(new) >= max_rules:
                        capped = True
                        break
                if capped:
                    break
            if capped:
                log.warning("generalization of %s -> %s capped at %d laws", *change, max_rules)
            known.update(new)
            frontier = list(new.values())
        laws_out = list(known.values())
        if corpus_by_language is not None:
            laws_out = [_score(l, corpus_by_language, table) for l in laws_out]
        out.extend(laws_out)
    return sort_laws(out)


def sort_laws(laws) -> list:
    def key(l):
        acc = l.accuracy
        return (l.target, l.replacement, -(acc if acc is not None else -1.0), l.format())

    return sorted(laws, key=key)


# learner ---------------------------------------------------------------------------


class SoundLawLearner(BaseEstimator):
    """Induce sound laws from protoforms and daughter forms.

    Parameters
    ----------
    threshold : float
        Base rules need accuracy strictly above this to be generalized.
    context_mode : {"set", "feature-class"}
    accuracy : {"per-language", "pooled"}
        Where base-rule accuracy is measured before filtering.
    max_rules : int
        Cap on laws per change and language during generalization.

    Attributes
    ----------
    laws_ : list of SoundLaw
    alignments_ : dict
        (cogid, language) -> Alignment
    languages_ : list of str
    base_rules_ : dict
        language (``None`` when pooled) -> (scored base rules, rules kept by the filter)
    """

    def __init__(
        self,
        threshold=ACCURACY_THRESHOLD,
        context_mode="set",
        accuracy="per-language",
        max_rules=2000,
        gap_cost=INDEL_COST,
        vowel_consonant_penalty=VOWEL_CONSONANT_PENALTY,
    ):
        self.threshold = threshold
        self.context_mode = context_mode
        self.accuracy = accuracy
        self.max_rules = max_rules
        self.gap_cost = gap_cost
        self.vowel_consonant_penalty = vowel_consonant_penalty

    def fit(self, entries, table: PhoneFeatureTable):
        if self.accuracy not in ("per-language", "pooled"):
            raise ValueError("accuracy must be 'per-language' or 'pooled'")
        entries = list(entries)
        protos = {e.cogid: e.segments for e in entries if e.language == PROTO}
        daughters = [e for e in entries if e.language != PROTO]
        if not protos or not daughters:
            raise ValueError("need protoforms and daughter forms")
        self.table_ = table
        self.languages_ = sorted({e.language for e in daughters})
        self.alignments_ = {}
        corpus = {l: [] for l in self.languages_}
        for e in sorted(daughters, key=lambda e: (e.language, e.cogid)):
            if e.cogid not in protos:
                continue
            al = needleman_wunsch(protos[e.cogid], e.segments, table, self.gap_cost, self.vowel_consonant_penalty)
            self.alignments_[e.cogid, e.language] = al
            corpus[e.language].append(al)
        self.corpus_ = corpus

        if self.accuracy == "pooled":
            base = {}
            for lang in self.languages_:
                for al in corpus[lang]:
                    for law in extract_base_rules(al):
                        base.setdefault(law.pattern, law)
            scored = [_score(l, corpus, table) for l in base.values()]
            kept = filter_by_accuracy(scored, self.threshold)
            self.base_rules_ = {None: (scored, kept)}
            laws = minimal_generalize(kept, table, corpus, self.context_mode, self.max_rules)
        else:
            merged = {}
            self.base_rules_ = {}
            for lang in self.languages_:
                single = {lang: corpus[lang]}
                base = {}
                for al in corpus[lang]:
                    for law in extract_base_rules(al):
                        base.setdefault(law.pattern, law)
                scored = [_score(l, single, table) for l in base.values()]
                kept = filter_by_accuracy(scored, self.threshold)
                self.base_rules_[lang] = (scored, kept)
                for law in minimal_generalize(kept, table, single, self.context_mode, self.max_rules):
                    if not law.hits:
                        continue
                    prev = merged.get(law.pattern)
                    if prev is None:
                        merged[law.pattern] = law
                    else:
                        by = dict(prev.hits_by_language)
                        by.update(law.hits_by_language)
                        merged[law.pattern] = prev.with_stats(prev.scope + law.scope, prev.hits + law.hits, by)
            laws = sort_laws(merged.values())
        self.laws_ = laws
        return self

    def transform(self, entries=None):
        """Shared-innovation characters for the fitted laws."""
        check_is_fitted(self, "laws_")
        return shared_innovation_matrix(self.laws_, self.languages_)

    def correspondences(self) -> list:
        check_is_fitted(self, "laws_")
        return laws_to_correspondences(self.laws_, self.corpus_, self.table_)


def shared_innovation_matrix(laws, languages) -> list:
    """One 0/1 character per law: 1 where the language has a hit for it."""
    chars = []
    for law in laws:
        by = dict(law.hits_by_language)
        chars.append(BinaryCharacter(law.format("->"), {l: int(by.get(l, 0) > 0) for l in languages}))
    return chars


def cognacy_matrix(entries) -> tuple:
    """One 0/1 character per cognate set: 1 where the language has an entry.

    Returns ``(characters, languages)``.
    """
    entries = [e for e in entries if e.language != PROTO]
    if not entries:
        raise ValueError("no daughter entries")
    languages = sorted({e.language for e in entries})
    present = {}
    for e in entries:
        present.setdefault(e.cogid, set()).add(e.language)
    chars = [
        BinaryCharacter(cid, {l: int(l in present[cid]) for l in languages}) for cid in sorted(present, key=_natural)
    ]
    return chars, languages


def _natural(s):
    return (0, int(s), "") if str(s).isdigit() else (1, 0, str(s))


def laws_to_correspondences(laws, corpus_by_language, table=None) -> list:
    """One correspondence per law with a proto phone: its majority reflex per language."""
    out = []
    seen = set()
    for law in laws:
        if law.target == NULL:
            continue
        reflexes = {}
        for lang, corpus in corpus_by_language.items():
            counts = Counter()
            for al in corpus:
                for _, outcome in law_sites(law, al, table):
                    counts[outcome] += 1
            if counts:
                best = max(counts.values())
                reflexes[lang] = min(p for p, k in counts.items() if k == best)
            else:
                reflexes[lang] = None
        if sum(r is not None for r in reflexes.values()) < 2:
            continue
        key = (law.target, tuple(sorted(reflexes.items(), key=lambda x: x[0])))
        if key in seen:
            continue
        seen.add(key)
        out.append(Correspondence(len(out) + 1, law.target, reflexes))
    return out


def write_laws(laws, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n", quoting=csv.QUOTE_NONE, escapechar="\\")
        w.writerow(["law", "scope", "hits", "languages"])
        for law in laws:
            w.writerow([law.format("->"), law.scope, law.hits, ",".join(sorted(law.languages))])
