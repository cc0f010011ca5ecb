"""Synthetic language families with a known generating tree.

Each non-root clade of the gold tree carries one directed sound change
(a 2-step chain such as p > f > h) shared by exactly its members, so the
gold topology is the unique most parsimonious tree.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .asli import PROTO, CognateEntry
from .graph import IntermediatePath
from .model import SoundChangeRecord
from .parsimony import random_binary_tree
from .transition import Correspondence
from .trees import RootedTree

CHAINS = (
    ("p", "f", "h"),
    ("k", "x", "h"),
    ("t", "d", "ð"),
    ("b", "β", "w"),
    ("ɡ", "ɣ", "ɰ"),
    ("s", "z", "r"),
    ("n", "ɲ", "j"),
    ("l", "ɫ", "w"),
)
VOWELS = ("a", "e", "i", "o", "u")


@dataclass
class SyntheticFamily:
    """Everything needed to run the pipeline on a generated family.

    Attributes
    ----------
    gold : RootedTree
    languages : list of str
    correspondences : list of Correspondence
    expert_paths : dict
        correspondence id -> list of IntermediatePath
    cognates : list of CognateEntry
    sound_changes : list of SoundChangeRecord
    """

    gold: RootedTree
    languages: list
    correspondences: list
    expert_paths: dict
    cognates: list
    sound_changes: list


def _frames():
    for r in itertools.count(2):
        yield from itertools.product(VOWELS, repeat=r)


def make_family(n_languages: int = 8, n_characters: int | None = None, seed: int = 411) -> SyntheticFamily:
    """Generate a family on a seeded random binary tree.

    Every non-root clade gets one shared innovation; with ``n_characters``
    larger than the clade count, extra characters nest a second step
    inside a clade that has a sub-clade.
    """
    if n_languages < 4:
        raise ValueError("need at least 4 languages")
    rng = np.random.default_rng(seed)
    languages = [f"L{i + 1}" for i in range(n_languages)]
    nested = random_binary_tree(n_languages, rng)
    gold = RootedTree.from_nested(_label(nested, languages))
    clades = sorted(gold.clades(), key=lambda c: (len(c), sorted(c)))
    if n_characters is None:
        n_characters = len(clades)
    if n_characters < len(clades):
        raise ValueError(f"need at least {len(clades)} characters to cover every clade")
    pairs = [(a, b) for a in clades for b in clades if b < a]
    specs = [(c, None) for c in clades]
    for j in range(n_characters - len(clades)):
        if not pairs:
            specs.append((clades[j % len(clades)], None))
        else:
            specs.append(pairs[j % len(pairs)])

    corrs, paths, cognates, changes = [], {}, [], []
    frames = _frames()
    for cid, (outer, inner) in enumerate(specs, start=1):
        x, z, y = CHAINS[(cid - 1) % len(CHAINS)]
        reflexes = {}
        for lang in languages:
            if inner is not None and lang in inner:
                reflexes[lang] = y
            elif lang in outer:
                reflexes[lang] = z if inner is not None else y
            else:
                reflexes[lang] = x
        corrs.append(Correspondence(cid, x, reflexes))
        paths[cid] = [IntermediatePath.from_phones((x, z, y))]
        changes += [SoundChangeRecord(x, z, "Synthetic"), SoundChangeRecord(z, y, "Synthetic")]
        for frame in itertools.islice(frames, 2):
            left, right = frame[:1], frame[1:]
            cogid = f"{cid}.{len(cognates) // (n_languages + 1) + 1}"
            cognates.append(CognateEntry(cogid, PROTO, (*left, x, *right)))
            for lang in languages:
                cognates.append(CognateEntry(cogid, lang, (*left, reflexes[lang], *right)))
    return SyntheticFamily(gold, languages, corrs, paths, cognates, changes)


def _label(nested, languages):
    if isinstance(nested, int):
        return languages[nested]
    return tuple(_label(c, languages) for c in nested)
