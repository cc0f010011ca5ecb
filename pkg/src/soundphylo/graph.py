"""Complete directed phone graph and intermediate sound-change paths."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .model import FeatureEditModel, check_model_table, dwfed_matrix
from .phonology import INDEL_COST, NULL, PhoneFeatureTable, UnknownPhoneError, normalize

INSERTION_MULT = 15.0
DELETION_MULT = 10.0
MIN_EDGE = 1e-6
MODES = ("dwfed", "fed-ablation")


@dataclass(frozen=True)
class IntermediatePath:
    phones: tuple
    edge_costs: tuple
    total_cost: float

    def __post_init__(self):
        if len(self.phones) < 1 or len(self.edge_costs) != len(self.phones) - 1:
            raise ValueError("a path needs one cost per edge")
        if any(a == b for a, b in zip(self.phones, self.phones[1:])):
            raise ValueError(f"consecutive repeated phone in {self}")

    @classmethod
    def from_phones(cls, phones, edge_costs=None):
        phones = tuple(phones)
        if edge_costs is None:
            edge_costs = (1.0,) * (len(phones) - 1)
        edge_costs = tuple(float(c) for c in edge_costs)
        return cls(phones, edge_costs, _path_sum(edge_costs))

    @property
    def proto(self):
        return self.phones[0]

    @property
    def reflex(self):
        return self.phones[-1]

    @property
    def n_edges(self) -> int:
        return len(self.phones) - 1

    def __str__(self):
        return ">".join(self.phones)


def _path_sum(costs) -> float:
    total = 0.0
    for c in costs:
        total += c
    return total


@dataclass(frozen=True, eq=False)
class PhoneGraph:
    """Immutable weighted digraph over a phone inventory plus the null phone.

    ``weights[i, j]`` is the cost of changing ``nodes[i]`` into ``nodes[j]``.
    Phones sharing a feature vector collapse to one node; ``aliases`` maps
    every accepted phone string to its node.
    """

    nodes: tuple
    weights: np.ndarray = field(repr=False)
    mode: str
    insertion_mult: float
    deletion_mult: float
    base_cost: float
    aliases: dict = field(repr=False)

    def __post_init__(self):
        self.weights.setflags(write=False)
        object.__setattr__(self, "_index", {p: i for i, p in enumerate(self.nodes)})

    def __contains__(self, phone):
        return normalize(phone) in self.aliases

    def node_of(self, phone: str) -> str:
        try:
            return self.aliases[normalize(phone)]
        except KeyError:
            raise UnknownPhoneError(phone) from None

    def index(self, phone: str) -> int:
        return self._index[self.node_of(phone)]

    def weight(self, u: str, v: str) -> float:
        return float(self.weights[self.index(u), self.index(v)])

    @property
    def metadata(self) -> dict:
        return {
            "mode": self.mode,
            "n_nodes": len(self.nodes),
            "insertion_mult": self.insertion_mult,
            "deletion_mult": self.deletion_mult,
            "null_base_cost": self.base_cost,
        }


def _collapse_inventory(table, phones):
    """Keep the first phone of every distinct feature vector."""
    seen = {}
    aliases = {}
    nodes = []
    for p in phones:
        p = normalize(p)
        if p in aliases:
            continue
        key = table.encode(p).tobytes()
        if key in seen:
            aliases[p] = seen[key]
            continue
        seen[key] = p
        aliases[p] = p
        nodes.append(p)
    return nodes, aliases


def build_graph(
    model: FeatureEditModel | None,
    table: PhoneFeatureTable,
    mode: str | None = None,
    extra_phones=(),
    insertion_mult: float = INSERTION_MULT,
    deletion_mult: float = DELETION_MULT,
) -> PhoneGraph:
    """Build the phone graph from the table's inventory plus ``extra_phones``.

    ``extra_phones`` (typically the phones observed in the data) come first so
    they win when several phones share a feature vector.
    """
    if mode is None:
        mode = "fed-ablation" if model is None else "dwfed"
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if mode == "dwfed" and model is None:
        raise ValueError("dwfed mode needs a trained model")
    extras = [p for p in extra_phones if p != NULL]
    nodes, aliases = _collapse_inventory(table, list(extras) + list(table.inventory))
    if not nodes:
        raise ValueError("empty phone inventory")
    X = table.matrix(nodes).astype(np.int64)
    if mode == "dwfed":
        check_model_table(model, table)
        W = dwfed_matrix(model, X, X)
        off = ~np.eye(len(nodes), dtype=bool)
        base = float(W[off].mean()) if len(nodes) > 1 else 1.0
    else:
        W = (X[:, None, :] != X[None, :, :]).sum(axis=2) / table.n_features
        base = INDEL_COST
    n = len(nodes)
    W = np.where((W <= 0) & ~np.eye(n, dtype=bool), MIN_EDGE, W)
    np.fill_diagonal(W, 0.0)
    full = np.zeros((n + 1, n + 1))
    full[:n, :n] = W
    full[n, :n] = insertion_mult * base
    full[:n, n] = deletion_mult * base
    aliases[NULL] = NULL
    return PhoneGraph(
        nodes=tuple(nodes) + (NULL,),
        weights=full,
        mode=mode,
        insertion_mult=float(insertion_mult),
        deletion_mult=float(deletion_mult),
        base_cost=base,
        aliases=aliases,
    )


# shortest paths --------------------------------------------------------------


def _distances_to(W, target, banned_nodes=frozenset(), banned_edges=frozenset()):
    """Dijkstra on the reversed graph: cost from every node to ``target``."""
    n = W.shape[0]
    Wt = W.T.copy()
    for u, v in banned_edges:
        Wt[v, u] = math.inf
    dist = np.full(n, math.inf)
    dist[target] = 0.0
    done = np.zeros(n, dtype=bool)
    for b in banned_nodes:
        done[b] = True
    for _ in range(n):
        cand = np.where(done, math.inf, dist)
        u = int(np.argmin(cand))
        if not math.isfinite(cand[u]):
            break
        done[u] = True
        np.minimum(dist, np.where(done, math.inf, dist[u] + Wt[u]), out=dist)
    return dist


def _best_path(W, labels, source, target, banned_nodes=frozenset(), banned_edges=frozenset()):
    """Cheapest path, lexicographically smallest by phone sequence among ties."""
    if source in banned_nodes:
        return None
    dist = _distances_to(W, target, banned_nodes, banned_edges)
    if not math.isfinite(dist[source]):
        return None
    tol = 1e-12 * max(1.0, dist[source])
    path = [source]
    u = source
    visited = {source}
    while u != target:
        best = None
        for v in np.flatnonzero(np.abs(W[u] + dist - dist[u]) <= tol):
            v = int(v)
            if v == u or v in visited or v in banned_nodes or (u, v) in banned_edges:
                continue
            if best is None or labels[v] < labels[best]:
                best = v
        if best is None:
            raise RuntimeError("shortest-path reconstruction failed")
        path.append(best)
        visited.add(best)
        u = best
    return path


def _make_path(graph, idx_path):
    W = graph.weights
    costs = tuple(float(W[a, b]) for a, b in zip(idx_path, idx_path[1:]))
    return IntermediatePath(tuple(graph.nodes[i] for i in idx_path), costs, _path_sum(costs))


def shortest_paths(graph: PhoneGraph, proto: str, reflex: str, k: int = 1) -> list:
    """Up to ``k`` loopless paths in nondecreasing cost (Yen's algorithm).

    Equal-cost paths are ordered by their phone sequences.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    s, t = graph.index(proto), graph.index(reflex)
    W = graph.weights
    labels = graph.nodes
    first = _best_path(W, labels, s, t)
    if first is None:
        raise RuntimeError(f"no path from {proto!r} to {reflex!r}")
    accepted = [first]
    found = [_make_path(graph, first)]
    candidates = {}
    while len(accepted) < k:
        prev = accepted[-1]
        for i in range(len(prev) - 1):
            root = prev[: i + 1]
            banned_edges = {(p[i], p[i + 1]) for p in accepted if p[: i + 1] == root}
            spur = _best_path(W, labels, prev[i], t, frozenset(root[:-1]), banned_edges)
            if spur is None:
                continue
            cand = tuple(root[:-1]) + tuple(spur)
            if cand not in candidates and list(cand) not in accepted:
                candidates[cand] = _make_path(graph, cand)
        if not candidates:
            break
        best = min(candidates, key=lambda c: (round(candidates[c].total_cost, 9), candidates[c].phones))
        accepted.append(list(best))
        found.append(candidates.pop(best))
    return found


# statistics ------------------------------------------------------------------


def path_stats(paths):
    """(average unique paths per proto/reflex pair, average edges per path).

    Zero-edge paths (reflex identical to the proto-phoneme) are not changes and
    are left out.
    """
    by_pair = {}
    for p in paths:
        if p.n_edges == 0:
            continue
        by_pair.setdefault((p.proto, p.reflex), set()).add(p.phones)
    if not by_pair:
        raise ValueError("no proto/reflex pairs with intermediate paths")
    unique = [ph for group in by_pair.values() for ph in group]
    return (
        len(unique) / len(by_pair),
        sum(len(ph) - 1 for ph in unique) / len(unique),
    )


def expert_path_recall(predicted: dict, expert: dict) -> float:
    """Share of expert intermediate phones found among predicted path phones.

    Both arguments map a correspondence id to its list of paths. Endpoints of
    expert paths are not counted; counts are pooled over correspondences.
    """
    if set(predicted) != set(expert):
        diff = sorted(set(predicted) ^ set(expert), key=str)
        raise ValueError(f"correspondence sets differ: {diff}")
    hit = total = 0
    for cid, paths in expert.items():
        wanted = set()
        for p in paths:
            wanted.update(ph for ph in p.phones[1:-1])
        wanted -= {p.proto for p in paths} | {p.reflex for p in paths}
        have = {ph for p in predicted[cid] for ph in p.phones}
        hit += len(wanted & have)
        total += len(wanted)
    if total == 0:
        raise ValueError("expert paths contain no intermediate phones")
    return hit / total


# path dump -------------------------------------------------------------------

PATH_HEADER = ["corr_id", "proto", "reflex", "path", "total_cost", "edge_costs"]


def write_path_dump(rows, path) -> None:
    """Write ``(corr_id, path)`` rows as a TSV path dump."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(PATH_HEADER)
        for cid, p in rows:
            w.writerow(
                [cid, p.proto, p.reflex, str(p), repr(p.total_cost), ">".join(repr(c) for c in p.edge_costs)]
            )


def read_path_dump(path) -> list:
    """Parse a path dump into ``(corr_id, IntermediatePath, lineno)`` rows.

    ``total_cost`` and ``edge_costs`` are optional; without edge costs every
    edge counts 1.
    """
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            cells = line.split("\t")
            if cells[0] == "corr_id":
                continue
            if len(cells) < 4:
                raise ValueError(f"{path}:{lineno}: expected at least 4 columns")
            cid, proto, reflex, seq = cells[:4]
            phones = tuple(normalize(p) for p in seq.split(">"))
            if phones[0] != normalize(proto) or phones[-1] != normalize(reflex):
                raise ValueError(f"{path}:{lineno}: path endpoints do not match proto/reflex")
            costs = None
            if len(cells) > 5 and cells[5].strip():
                costs = [float(c) for c in cells[5].split(">")]
                if len(costs) != len(phones) - 1:
                    raise ValueError(f"{path}:{lineno}: edge cost count mismatch")
            try:
                p = IntermediatePath.from_phones(phones, costs)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            rows.append((_parse_id(cid), p, lineno))
    return rows


def _parse_id(cid: str):
    cid = cid.strip()
    return int(cid) if cid.lstrip("-").isdigit() else cid
