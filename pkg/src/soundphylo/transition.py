"""Per-correspondence sound-change transition matrices."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .graph import IntermediatePath, read_path_dump
from .phonology import NULL, PhoneFeatureTable, UnknownPhoneError, fed, normalize

MISSING = "-"
MODES = ("expert-unit-edges", "aiscp-weighted")
PENALTY_FACTOR = 1000.0


@dataclass(frozen=True)
class Correspondence:
    """A proto-phoneme and its reflex in each language (``None`` = no data)."""

    id: object
    proto: str
    reflexes: dict

    def __post_init__(self):
        if not self.proto or self.proto == MISSING:
            raise ValueError(f"correspondence {self.id}: missing proto-phoneme")
        present = [r for r in self.reflexes.values() if r is not None]
        if len(present) < 2:
            raise ValueError(f"correspondence {self.id}: fewer than two observed reflexes")

    @property
    def languages(self):
        return list(self.reflexes)

    def observed(self) -> dict:
        return {lang: r for lang, r in self.reflexes.items() if r is not None}

    def distinct_reflexes(self) -> list:
        out = []
        for r in self.reflexes.values():
            if r is not None and r not in out:
                out.append(r)
        return out


def load_correspondences(path, table: PhoneFeatureTable | None = None) -> list:
    """Read ``id<TAB>proto<TAB><lang...>`` with cells phone, ``∅`` or ``-``."""
    out = []
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\r\n") for ln in fh]
    rows = [(i, ln) for i, ln in enumerate(lines, start=1) if ln.strip() and not ln.startswith("#")]
    if not rows:
        raise ValueError(f"{path}: empty correspondence file")
    header = rows[0][1].split("\t")
    if header[:2] != ["id", "proto"] or len(header) < 4:
        raise ValueError(f"{path}:{rows[0][0]}: header must be id<TAB>proto<TAB><languages...>")
    languages = header[2:]
    if len(set(languages)) != len(languages):
        raise ValueError(f"{path}: duplicate language column")
    seen = set()
    for lineno, line in rows[1:]:
        cells = line.split("\t")
        if len(cells) != len(header):
            raise ValueError(f"{path}:{lineno}: expected {len(header)} cells, got {len(cells)}")
        cid = int(cells[0]) if cells[0].strip().lstrip("-").isdigit() else cells[0].strip()
        if cid in seen:
            raise ValueError(f"{path}:{lineno}: duplicate correspondence id {cid}")
        seen.add(cid)
        proto = normalize(cells[1])
        reflexes = {}
        for lang, cell in zip(languages, cells[2:]):
            cell = cell.strip()
            reflexes[lang] = None if cell in (MISSING, "") else normalize(cell)
        if table is not None:
            for ph in [proto, *reflexes.values()]:
                if ph is not None and ph != NULL and ph not in table:
                    raise ValueError(f"{path}:{lineno}: unknown phone {ph!r}")
        try:
            out.append(Correspondence(cid, proto, reflexes))
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    return out


def write_correspondences(corrs, languages, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["id", "proto", *languages])
        for c in corrs:
            w.writerow([c.id, c.proto, *(c.reflexes.get(l) or MISSING for l in languages)])


@dataclass(frozen=True)
class TransitionMatrix:
    states: tuple
    cost: np.ndarray = field(repr=False)
    penalty: float
    mode: str
    corr_id: object = None

    def __post_init__(self):
        self.cost.setflags(write=False)

    def index(self, phone) -> int:
        try:
            return self.states.index(phone)
        except ValueError:
            raise UnknownPhoneError(phone) from None

    def __call__(self, a, b) -> float:
        return float(self.cost[self.index(a), self.index(b)])


def _closure(W):
    """Floyd-Warshall on a copy of ``W`` (inf = no edge)."""
    D = W.copy()
    for k in range(D.shape[0]):
        np.minimum(D, D[:, k : k + 1] + D[k : k + 1, :], out=D)
    return D


def build_matrix(
    corr: Correspondence,
    paths,
    mode: str = "expert-unit-edges",
    penalty: float | None = None,
) -> TransitionMatrix:
    """Shortest-path closure over the union of the correspondence's paths.

    States are the proto-phoneme, then path phones in first-seen order, then any
    observed reflex no path reaches. Ordered pairs without a directed path cost
    ``penalty``, by default 1000 x the largest finite cost (at least 1000).
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    paths = list(paths)
    if not paths:
        raise ValueError(f"correspondence {corr.id}: no paths")
    reflexes = set(corr.distinct_reflexes())
    states = [corr.proto]
    for p in paths:
        if p.proto != corr.proto or p.reflex not in reflexes:
            raise ValueError(
                f"correspondence {corr.id}: path {p} does not run from {corr.proto!r} to an observed reflex"
            )
        for ph in p.phones:
            if ph not in states:
                states.append(ph)
    for r in corr.distinct_reflexes():
        if r not in states:
            states.append(r)
    idx = {s: i for i, s in enumerate(states)}
    n = len(states)
    W = np.full((n, n), math.inf)
    np.fill_diagonal(W, 0.0)
    for p in paths:
        for (a, b), c in zip(zip(p.phones, p.phones[1:]), p.edge_costs):
            w = 1.0 if mode == "expert-unit-edges" else float(c)
            i, j = idx[a], idx[b]
            W[i, j] = min(W[i, j], w)
    D = _closure(W)
    finite = D[np.isfinite(D)]
    if penalty is None:
        penalty = PENALTY_FACTOR * max(float(finite.max()) if finite.size else 0.0, 1.0)
    D = np.where(np.isfinite(D), D, penalty)
    return TransitionMatrix(tuple(states), D, float(penalty), mode, corr.id)


def direct_paths(corr: Correspondence, table: PhoneFeatureTable) -> list:
    """Single-edge proto -> reflex paths weighted by FED (no intermediates)."""
    out = []
    for r in corr.distinct_reflexes():
        if r == corr.proto:
            out.append(IntermediatePath.from_phones((r,), ()))
        else:
            out.append(IntermediatePath.from_phones((corr.proto, r), (fed(table, corr.proto, r),)))
    return out


def load_expert_paths(path, table: PhoneFeatureTable | None = None) -> dict:
    """Group a path dump by correspondence id, dropping duplicate paths."""
    rows = read_path_dump(path)
    if not rows:
        raise ValueError(f"{path}: no paths")
    out = {}
    for cid, p, lineno in rows:
        if table is not None:
            for ph in p.phones:
                if ph != NULL and ph not in table:
                    raise ValueError(f"{path}:{lineno}: unknown phone {ph!r}")
        group = out.setdefault(cid, [])
        if all(q.phones != p.phones for q in group):
            group.append(p)
    return out


def write_matrix(m: TransitionMatrix, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# corr_id={m.corr_id}\tmode={m.mode}\tpenalty={m.penalty!r}\n")
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["", *m.states])
        for s, row in zip(m.states, m.cost):
            w.writerow([s, *(repr(float(x)) for x in row)])
