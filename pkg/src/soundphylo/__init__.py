"""Sound-change-based phylogenetic inference.

Learns directional costs of articulatory feature changes, predicts
intermediate sound changes between proto-phonemes and reflexes, and infers
family trees by directed parsimony.
"""
__version__ = "0.1.0"

from .phonology import PhoneFeatureTable, default_feature_table, fed, fed_aligned, load_feature_table  # noqa: E402
from .model import FeatureEditModel, dwfed, load_model, save_model, train  # noqa: E402
from .graph import IntermediatePath, PhoneGraph, build_graph, shortest_paths  # noqa: E402
from .transition import Correspondence, TransitionMatrix, build_matrix  # noqa: E402
from .trees import RootedTree, gqd, majority_consensus, parse_newick, serialize_newick  # noqa: E402
from .parsimony import ParsimonySearch, genetic_search, sankoff_score, tree_score  # noqa: E402
from .asli import SoundLaw, SoundLawLearner, minimal_generalize, needleman_wunsch  # noqa: E402

__all__ = [
    "PhoneFeatureTable", "default_feature_table", "fed", "fed_aligned", "load_feature_table",
    "FeatureEditModel", "dwfed", "load_model", "save_model", "train",
    "IntermediatePath", "PhoneGraph", "build_graph", "shortest_paths",
    "Correspondence", "TransitionMatrix", "build_matrix",
    "RootedTree", "gqd", "majority_consensus", "parse_newick", "serialize_newick",
    "ParsimonySearch", "genetic_search", "sankoff_score", "tree_score",
    "SoundLaw", "SoundLawLearner", "minimal_generalize", "needleman_wunsch",
]
