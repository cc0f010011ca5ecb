"""Directed Sankoff parsimony, binary Fitch parsimony and genetic tree search."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .transition import TransitionMatrix
from .trees import RootedTree, majority_consensus

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SankoffCharacter:
    """One correspondence: transition matrix, leaf states and the fixed root state.

    ``leaves`` maps language -> phone, or ``None`` for missing data.
    """

    id: object
    matrix: TransitionMatrix
    leaves: dict
    root_state: str

    def __post_init__(self):
        if self.root_state not in self.matrix.states:
            raise ValueError(f"character {self.id}: root state {self.root_state!r} not in matrix")
        for lang, ph in self.leaves.items():
            if ph is not None and ph not in self.matrix.states:
                raise ValueError(f"character {self.id}: language {lang} observes {ph!r}, not a matrix state")


@dataclass(frozen=True)
class BinaryCharacter:
    """A 0/1 column; ``values`` maps language -> 0, 1 or ``None`` (missing)."""

    id: object
    values: dict


def sankoff_characters(corrs, matrices) -> list:
    """Pair correspondences with their matrices (dict keyed by correspondence id)."""
    out = []
    for c in corrs:
        m = matrices[c.id]
        out.append(SankoffCharacter(c.id, m, dict(c.reflexes), c.proto))
    return out


def _check_leaves(tree, assigned):
    extra = set(assigned) - tree.leaf_set
    if extra:
        raise ValueError(f"languages missing from tree: {sorted(extra)}")


def sankoff_score(tree: RootedTree, char: SankoffCharacter) -> float:
    """Minimum total transition cost with the root fixed to the proto state."""
    _check_leaves(tree, char.leaves)
    M = char.matrix.cost
    S = len(char.matrix.states)
    costs = {}
    for node in tree.root.postorder():
        if node.is_leaf:
            ph = char.leaves.get(node.label)
            if ph is None:
                costs[node] = np.zeros(S)
            else:
                v = np.full(S, math.inf)
                try:
                    v[char.matrix.index(ph)] = 0.0
                except KeyError:
                    raise ValueError(
                        f"character {char.id}: language {node.label} observes {ph!r}, not a matrix state"
                    ) from None
                costs[node] = v
        else:
            total = np.zeros(S)
            for child in node.children:
                total += (M + costs[child][None, :]).min(axis=1)
            costs[node] = total
    return float(costs[tree.root][char.matrix.index(char.root_state)])


def binary_parsimony_score(tree: RootedTree, char: BinaryCharacter) -> int:
    """Fitch count (Hartigan's rule at polytomies); missing entries are uninformative."""
    _check_leaves(tree, char.values)
    sets = {}
    changes = 0
    for node in tree.root.postorder():
        if node.is_leaf:
            v = char.values.get(node.label)
            sets[node] = {0, 1} if v is None else {int(v)}
            continue
        counts = {s: sum(s in sets[c] for c in node.children) for s in (0, 1)}
        best = max(counts.values())
        sets[node] = {s for s, k in counts.items() if k == best}
        changes += len(node.children) - best
    return changes


def tree_score(tree: RootedTree, characters) -> float:
    characters = list(characters)
    if not characters:
        raise ValueError("no characters")
    total = 0.0
    for ch in characters:
        if isinstance(ch, SankoffCharacter):
            total += sankoff_score(tree, ch)
        else:
            total += binary_parsimony_score(tree, ch)
    return total


# packed scoring ----------------------------------------------------------------


class PackedCharacters:
    """All characters stacked into arrays so a tree is scored in one pass.

    Trees are nested tuples over leaf indices into ``languages``.
    """

    def __init__(self, characters, languages):
        self.languages = list(languages)
        index = {l: i for i, l in enumerate(self.languages)}
        sank = [c for c in characters if isinstance(c, SankoffCharacter)]
        bins = [c for c in characters if isinstance(c, BinaryCharacter)]
        if not sank and not bins:
            raise ValueError("no characters")
        for c in sank:
            unknown = set(c.leaves) - set(index)
            if unknown:
                raise ValueError(f"character {c.id}: languages missing from tree: {sorted(unknown)}")
        for c in bins:
            unknown = set(c.values) - set(index)
            if unknown:
                raise ValueError(f"character {c.id}: languages missing from tree: {sorted(unknown)}")
        L = len(self.languages)
        self.n_sankoff = len(sank)
        if sank:
            S = max(len(c.matrix.states) for c in sank)
            C = len(sank)
            self.M = np.full((C, S, S), math.inf)
            self.leaf_cost = np.full((L, C, S), math.inf)
            self.root_idx = np.zeros(C, dtype=np.intp)
            for ci, c in enumerate(sank):
                k = len(c.matrix.states)
                self.M[ci, :k, :k] = c.matrix.cost
                self.root_idx[ci] = c.matrix.index(c.root_state)
                for li, lang in enumerate(self.languages):
                    ph = c.leaves.get(lang)
                    if ph is None:
                        self.leaf_cost[li, ci, :k] = 0.0
                    else:
                        self.leaf_cost[li, ci, c.matrix.index(ph)] = 0.0
            self._rows = np.arange(C)
        self.n_binary = len(bins)
        if bins:
            self.leaf_bits = np.full((L, len(bins)), 3, dtype=np.uint8)
            for bi, c in enumerate(bins):
                for lang, v in c.values.items():
                    if v is not None:
                        self.leaf_bits[index[lang], bi] = 2 if int(v) else 1

    def score(self, nested) -> float:
        sank_cost, bits, changes = self._rec(nested)
        total = 0.0
        if self.n_sankoff:
            total += float(sank_cost[self._rows, self.root_idx].sum())
        return total + float(changes)

    def _rec(self, node):
        if not isinstance(node, tuple):
            return (
                self.leaf_cost[node] if self.n_sankoff else None,
                self.leaf_bits[node] if self.n_binary else None,
                0,
            )
        results = [self._rec(c) for c in node]
        cost = None
        if self.n_sankoff:
            cost = sum((self.M + r[0][:, None, :]).min(axis=2) for r in results)
        bits = None
        changes = sum(r[2] for r in results)
        if self.n_binary:
            c0 = sum((r[1] & 1) > 0 for r in results).astype(np.int64)
            c1 = sum((r[1] & 2) > 0 for r in results).astype(np.int64)
            best = np.maximum(c0, c1)
            bits = ((c0 == best) * 1 + (c1 == best) * 2).astype(np.uint8)
            changes += int((len(node) - best).sum())
        return cost, bits, changes


# nested-tuple topology moves ------------------------------------------------


def canonical(tree):
    """Order children by smallest leaf so equal topologies compare equal."""
    return _canon(tree)[0]


def _canon(t):
    if not isinstance(t, tuple):
        return t, t
    parts = sorted((_canon(c) for c in t), key=lambda x: x[1])
    return tuple(p[0] for p in parts), parts[0][1]


def _paths(t, prefix=()):
    yield prefix
    if isinstance(t, tuple):
        for i, c in enumerate(t):
            yield from _paths(c, prefix + (i,))


def _get(t, path):
    for i in path:
        t = t[i]
    return t


def _replace(t, path, new):
    if not path:
        return new
    i = path[0]
    return t[:i] + (_replace(t[i], path[1:], new),) + t[i + 1 :]


def random_binary_tree(n: int, rng):
    """Uniform rooted binary topology on leaves ``0..n-1`` by random edge attachment."""
    t = 0
    for leaf in range(1, n):
        paths = list(_paths(t))
        p = paths[int(rng.integers(len(paths)))]
        t = _replace(t, p, (_get(t, p), leaf))
    return canonical(t)


def nni(t, rng):
    """Swap a grandchild with its uncle around a random internal edge."""
    cands = [p for p in _paths(t) if p and isinstance(_get(t, p), tuple)]
    if not cands:
        return t
    p = cands[int(rng.integers(len(cands)))]
    parent = _get(t, p[:-1])
    v = _get(t, p)
    w = parent[1 - p[-1]]
    j = int(rng.integers(2))
    new_v = (w, v[1 - j])
    return canonical(_replace(t, p[:-1], (new_v, v[j])))


def spr(t, rng, tries: int = 10):
    """Prune a random subtree and regraft it onto a random edge (root stem included)."""
    start = canonical(t)
    for _ in range(tries):
        cands = [p for p in _paths(t) if p]
        p = cands[int(rng.integers(len(cands)))]
        sub = _get(t, p)
        parent = _get(t, p[:-1])
        rest = _replace(t, p[:-1], parent[1 - p[-1]])
        targets = list(_paths(rest))
        r = targets[int(rng.integers(len(targets)))]
        new = canonical(_replace(rest, r, (_get(rest, r), sub)))
        if new != start:
            return new
    return start


def all_binary_trees(n: int):
    """Every rooted binary topology on leaves ``0..n-1`` ((2n-3)!! of them)."""
    trees = [0]
    for leaf in range(1, n):
        nxt = []
        for t in trees:
            for p in _paths(t):
                nxt.append(_replace(t, p, (_get(t, p), leaf)))
        trees = nxt
    return sorted({canonical(t) for t in trees}, key=repr)


def nested_to_tree(nested, languages) -> RootedTree:
    def rec(x):
        return tuple(rec(c) for c in x) if isinstance(x, tuple) else languages[x]

    return RootedTree.from_nested(rec(nested))


def tree_to_nested(tree: RootedTree, languages):
    index = {l: i for i, l in enumerate(languages)}

    def rec(x):
        return tuple(rec(c) for c in x) if isinstance(x, tuple) else index[x]

    return canonical(rec(tree.to_nested()))


# genetic search ------------------------------------------------------------------


@dataclass
class SearchState:
    seed: int
    budget: int
    population: list = field(default_factory=list)
    evaluated: int = 0
    best_score: float = math.inf
    archive: list = field(default_factory=list)
    history: list = field(default_factory=list)
    initial_best: float = math.inf


def _same(a, b):
    if math.isinf(a) or math.isinf(b):
        return a == b
    return abs(a - b) <= 1e-9 * max(1.0, abs(a), abs(b))


def genetic_search(
    characters,
    leaves,
    budget: int = 10_000,
    seed: int = 411,
    population_size: int = 50,
    n_elite: int = 10,
    exploration: float = 0.2,
) -> SearchState:
    """Seeded genetic search over rooted binary trees.

    Each generation keeps the ``n_elite`` best trees and refills the population
    with NNI and SPR mutants of the elite plus a share of fresh random trees.
    Every scored tree counts against ``budget``. All trees tied at the final
    best score are archived.
    """
    leaves = list(leaves)
    if len(leaves) < 4:
        raise ValueError("need at least 4 leaves")
    if budget < population_size:
        raise ValueError("budget must be at least the population size")
    if not 0 < n_elite < population_size:
        raise ValueError("n_elite must be between 1 and population_size - 1")
    packed = characters if isinstance(characters, PackedCharacters) else PackedCharacters(characters, leaves)
    rng = np.random.default_rng(seed)
    state = SearchState(seed=seed, budget=budget)
    cache = {}
    archive = {}

    def evaluate(t):
        if state.evaluated >= budget:
            return None
        state.evaluated += 1
        s = cache.get(t)
        if s is None:
            s = cache[t] = packed.score(t)
        if s < state.best_score and not _same(s, state.best_score):
            state.best_score = s
            archive.clear()
        if _same(s, state.best_score):
            archive.setdefault(t, None)
        return s

    pop = []
    for _ in range(population_size):
        t = random_binary_tree(len(leaves), rng)
        pop.append((evaluate(t), t))
    state.initial_best = state.best_score
    generation = 0
    while state.evaluated < budget:
        pop.sort(key=lambda x: (x[0], repr(x[1])))
        elite = pop[:n_elite]
        n_new = population_size - n_elite
        n_fresh = int(round(exploration * n_new))
        offspring = []
        for j in range(n_new - n_fresh):
            parent = elite[j % n_elite][1]
            offspring.append(nni(parent, rng) if j % 2 == 0 else spr(parent, rng))
        offspring.extend(random_binary_tree(len(leaves), rng) for _ in range(n_fresh))
        new = []
        for t in offspring:
            s = evaluate(t)
            if s is None:
                break
            new.append((s, t))
        pop = elite + new
        generation += 1
        state.history.append(state.best_score)
        log.info("generation %d best %.6g evaluated %d", generation, state.best_score, state.evaluated)
    pop.sort(key=lambda x: (x[0], repr(x[1])))
    state.population = [(nested_to_tree(t, leaves), s) for s, t in pop]
    state.archive = [nested_to_tree(t, leaves) for t in sorted(archive, key=repr)]
    return state


class ParsimonySearch(BaseEstimator):
    """Estimator wrapper around :func:`genetic_search`.

    After ``fit``: ``best_score_``, ``archive_`` (tied best trees),
    ``consensus_`` (their majority-rule consensus) and ``n_evaluated_``.
    """

    def __init__(self, budget=10_000, seed=411, population_size=50, n_elite=10, exploration=0.2, threshold=0.5):
        self.budget = budget
        self.seed = seed
        self.population_size = population_size
        self.n_elite = n_elite
        self.exploration = exploration
        self.threshold = threshold

    def fit(self, characters, leaves=None):
        characters = list(characters)
        if leaves is None:
            leaves = sorted(
                {l for c in characters for l in (c.leaves if isinstance(c, SankoffCharacter) else c.values)}
            )
        self.state_ = genetic_search(
            characters,
            leaves,
            budget=self.budget,
            seed=self.seed,
            population_size=self.population_size,
            n_elite=self.n_elite,
            exploration=self.exploration,
        )
        self.leaves_ = list(leaves)
        self.best_score_ = self.state_.best_score
        self.archive_ = self.state_.archive
        self.n_evaluated_ = self.state_.evaluated
        self.consensus_ = majority_consensus(self.archive_, self.threshold)
        return self

    def score(self, tree: RootedTree, characters) -> float:
        return tree_score(tree, characters)

    def best_tree(self) -> RootedTree:
        check_is_fitted(self, "consensus_")
        return self.consensus_


# binary matrix I/O ---------------------------------------------------------------


def load_binary_matrix(path):
    """Read a TSV with a language header and ``character_id`` + 0/1/- rows."""
    with open(path, encoding="utf-8") as fh:
        lines = [(i, ln.rstrip("\r\n")) for i, ln in enumerate(fh, start=1)]
    lines = [(i, ln) for i, ln in lines if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise ValueError(f"{path}: empty matrix")
    header = lines[0][1].split("\t")
    languages = header[1:]
    chars = []
    for lineno, line in lines[1:]:
        cells = line.split("\t")
        if len(cells) != len(header):
            raise ValueError(f"{path}:{lineno}: expected {len(header)} cells")
        values = {}
        for lang, cell in zip(languages, cells[1:]):
            cell = cell.strip()
            if cell not in ("0", "1", "-"):
                raise ValueError(f"{path}:{lineno}: bad cell {cell!r}")
            values[lang] = None if cell == "-" else int(cell)
        chars.append(BinaryCharacter(cells[0], values))
    if not chars:
        raise ValueError(f"{path}: matrix has no characters")
    return chars, languages


def write_binary_matrix(chars, languages, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n", quoting=csv.QUOTE_NONE, escapechar="\\")
        w.writerow(["character_id", *languages])
        for c in chars:
            w.writerow([c.id, *("-" if c.values.get(l) is None else str(int(c.values[l])) for l in languages)])
