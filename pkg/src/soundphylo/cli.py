"""Command-line pipeline: train, paths, matrix, infer, consensus, gqd, asli, baseline, synth.

Exit codes: 0 success, 1 computation failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import statistics
import sys
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .asli import SoundLawLearner, cognacy_matrix, load_cognates, shared_innovation_matrix, write_cognates, write_laws
from .graph import (
    build_graph,
    expert_path_recall,
    path_stats,
    shortest_paths,
    write_path_dump,
)
from .model import DEPTHS, TrainingError, load_model, load_sound_changes, save_model, train, write_loss_curve
from .parsimony import (
    PackedCharacters,
    genetic_search,
    load_binary_matrix,
    sankoff_characters,
    write_binary_matrix,
)
from .phonology import NULL, default_feature_table, load_feature_table
from .synthetic import make_family
from .transition import (
    build_matrix,
    direct_paths,
    load_correspondences,
    load_expert_paths,
    write_correspondences,
    write_matrix,
)
from .trees import gqd, majority_consensus, read_newick_file, render_ascii

log = logging.getLogger("soundphylo")

INFER_MODES = ("aiscp", "expert", "fed-ablation", "direct")


class UsageError(Exception):
    pass


class StageError(ValueError):
    pass


# helpers ---------------------------------------------------------------------------


def derive_seed(master: int, stage: str, index: int = 0) -> int:
    """Deterministic child seed for ``stage`` and ``index``."""
    ss = np.random.SeedSequence([int(master), zlib.crc32(stage.encode("utf-8")), int(index)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def read_config(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            if not key:
                raise UsageError(f"{path}:{lineno}: empty key")
            out[key.replace("-", "_")] = value
    return out


def _load(what, producer, fn, *args):
    """Run a loader, naming the stage that should have produced the file on failure."""
    try:
        return fn(*args)
    except FileNotFoundError:
        raise
    except (ValueError, UnicodeDecodeError, KeyError) as exc:
        raise StageError(f"{exc} (expected {what}, as written by `soundphylo {producer}`)") from None


class Manifest:
    def __init__(self, command, args):
        self.data = {
            "command": command,
            "version": __version__,
            "config": {k: _jsonable(v) for k, v in sorted(vars(args).items()) if k not in ("func",)},
            "inputs": {},
            "seeds": {},
            "outputs": [],
            "results": {},
        }
        self._t0 = time.time()

    def input(self, path):
        if path:
            self.data["inputs"][str(path)] = sha256_file(path)

    def seed(self, name, value):
        self.data["seeds"][name] = int(value)

    def output(self, path):
        self.data["outputs"].append(str(path))

    def write(self, path):
        missing = [p for p in self.data["outputs"] if not os.path.exists(p)]
        if missing:
            raise RuntimeError(f"manifest references missing outputs: {missing}")
        self.data["timing"] = {
            "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(self._t0)),
            "seconds": round(time.time() - self._t0, 3),
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.data, fh, indent=2, ensure_ascii=False, sort_keys=True)
            fh.write("\n")


def _jsonable(v):
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, Path):
        return str(v)
    return v


def _table(args):
    return default_feature_table() if args.features is None else load_feature_table(args.features)


def _gqd_row(label, values) -> str:
    values = list(values)
    lo = min(values)
    if len(values) > 1:
        mean = f"{statistics.fmean(values):.3f} ± {statistics.stdev(values):.3f}"
    else:
        mean = f"{values[0]:.3f}"
    return f"{label}\t{len(values)}\t{lo:.3f}\t{mean}"


GQD_HEADER = "method\truns\tmin_gqd\tmean_gqd"


def _write_trees(trees, path):
    with open(path, "w", encoding="utf-8") as fh:
        for t in trees:
            fh.write(t.newick() + "\n")


# commands --------------------------------------------------------------------------


def cmd_train(args, manifest):
    table = _table(args)
    manifest.input(args.changes)
    records = load_sound_changes(args.changes, table, exclude_families=args.exclude_family)
    log.info("%d records (%d skipped, %d excluded)", len(records), records.skipped, records.excluded)
    manifest.seed("train", args.seed)
    model = train(
        records,
        table,
        depth=args.depth,
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        train_fraction=args.train_fraction,
        seed=args.seed,
    )
    save_model(model, args.out)
    curve = args.loss_curve or f"{args.out}.loss.tsv"
    write_loss_curve(model, curve)
    manifest.output(args.out)
    manifest.output(curve)
    manifest.data["results"] = {"n_records": len(records), "final_train_bce": float(model.train_loss_[-1])}
    print(f"trained depth-{args.depth} model on {len(records)} records; final train BCE {model.train_loss_[-1]:.6f}")


def _data_phones(corrs):
    out = []
    for c in corrs:
        for ph in [c.proto, *c.reflexes.values()]:
            if ph is not None and ph != NULL and ph not in out:
                out.append(ph)
    return out


def compute_paths(corrs, graph, k=1) -> dict:
    out = {}
    for c in corrs:
        group = []
        for r in c.distinct_reflexes():
            group.extend(shortest_paths(graph, c.proto, r, k))
        out[c.id] = group
    return out


def _graph_for(args, corrs, table, mode):
    model = None
    if mode == "dwfed":
        if not args.model:
            raise UsageError("--model is required for dwfed paths")
        model = _load("a model file", "train", load_model, args.model)
    return build_graph(
        model,
        table,
        mode=mode,
        extra_phones=_data_phones(corrs),
        insertion_mult=args.insertion_mult,
        deletion_mult=args.deletion_mult,
    )


def _path_rows(paths):
    return [(cid, p) for cid, group in paths.items() for p in group]


def cmd_paths(args, manifest):
    table = _table(args)
    manifest.input(args.correspondences)
    manifest.input(args.model)
    corrs = _load("a correspondence table", "asli", load_correspondences, args.correspondences, table)
    mode = args.mode or ("dwfed" if args.model else "fed-ablation")
    graph = _graph_for(args, corrs, table, mode)
    paths = compute_paths(corrs, graph, args.k)
    write_path_dump(_path_rows(paths), args.out)
    manifest.output(args.out)
    n_paths, n_edges = path_stats([p for g in paths.values() for p in g])
    results = {"avg_num_paths": n_paths, "avg_edges_per_path": n_edges, "base_cost": graph.base_cost}
    print(f"avg_num_paths\t{n_paths:.3f}")
    print(f"avg_edges_per_path\t{n_edges:.3f}")
    if args.expert:
        manifest.input(args.expert)
        expert = _load("a path dump", "paths", load_expert_paths, args.expert, table)
        shared = {cid: paths[cid] for cid in expert if cid in paths}
        if set(shared) != set(expert):
            raise StageError("expert paths reference correspondences missing from --correspondences")
        recall = expert_path_recall(shared, expert)
        results["expert_recall"] = recall
        print(f"expert_recall\t{recall:.3f}")
    manifest.data["results"] = results


def cmd_matrix(args, manifest):
    table = _table(args)
    manifest.input(args.correspondences)
    manifest.input(args.paths)
    corrs = _load("a correspondence table", "asli", load_correspondences, args.correspondences, table)
    paths = _load("a path dump", "paths", load_expert_paths, args.paths, table)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for c in corrs:
        if c.id not in paths:
            raise StageError(f"no paths for correspondence {c.id} in {args.paths}")
        m = build_matrix(c, paths[c.id], args.mode, args.penalty)
        f = out / f"matrix_{c.id}.tsv"
        write_matrix(m, f)
        manifest.output(f)
    print(f"wrote {len(corrs)} matrices to {out}")


def _infer_paths(args, corrs, table, manifest):
    """Paths and matrix mode for an ``infer`` mode."""
    if args.mode == "expert":
        if not args.paths:
            raise UsageError("--paths (expert path dump) is required for --mode expert")
        manifest.input(args.paths)
        return _load("a path dump", "paths", load_expert_paths, args.paths, table), "expert-unit-edges"
    if args.mode == "direct":
        return {c.id: direct_paths(c, table) for c in corrs}, "aiscp-weighted"
    if args.paths:
        manifest.input(args.paths)
        return _load("a path dump", "paths", load_expert_paths, args.paths, table), "aiscp-weighted"
    manifest.input(args.model)
    graph = _graph_for(args, corrs, table, "dwfed" if args.mode == "aiscp" else "fed-ablation")
    return compute_paths(corrs, graph, args.k), "aiscp-weighted"


def _search_job(job):
    characters, languages, budget, seed, params = job
    state = genetic_search(characters, languages, budget=budget, seed=seed, **params)
    return state.best_score, state.evaluated, state.archive


def run_searches(characters, languages, seeds, budget, params, jobs=1):
    packed = PackedCharacters(characters, languages)
    work = [(packed, languages, budget, s, params) for s in seeds]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(_search_job, work))
    return [_search_job(w) for w in work]


def _search_params(args):
    return {"population_size": args.population, "n_elite": args.elite, "exploration": args.exploration}


def cmd_infer(args, manifest):
    table = _table(args)
    manifest.input(args.correspondences)
    corrs = _load("a correspondence table", "asli", load_correspondences, args.correspondences, table)
    paths, matrix_mode = _infer_paths(args, corrs, table, manifest)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    matrices = {}
    for c in corrs:
        if c.id not in paths:
            raise StageError(f"no paths for correspondence {c.id}")
        matrices[c.id] = build_matrix(c, paths[c.id], matrix_mode, args.penalty)
    chars = sankoff_characters(corrs, matrices)
    languages = sorted({l for c in corrs for l in c.reflexes})
    used = out / "paths.tsv"
    write_path_dump(_path_rows({c.id: paths[c.id] for c in corrs}), used)
    manifest.output(used)

    seeds = [derive_seed(args.seed, "infer", r) for r in range(args.runs)]
    for r, s in enumerate(seeds, start=1):
        manifest.seed(f"run_{r:02d}", s)
    results = run_searches(chars, languages, seeds, args.budget, _search_params(args), args.jobs)

    gold = None
    if args.gold:
        manifest.input(args.gold)
        gold = _load("a Newick file", "consensus", read_newick_file, args.gold)[0]
    run_trees, rows, gqds = [], [], []
    for r, ((score, evaluated, archive), s) in enumerate(zip(results, seeds), start=1):
        tree = majority_consensus(archive, args.threshold)
        run_trees.append(tree)
        _write_trees([tree], out / f"run_{r:02d}.nwk")
        _write_trees(archive, out / f"run_{r:02d}.archive.nwk")
        manifest.output(out / f"run_{r:02d}.nwk")
        manifest.output(out / f"run_{r:02d}.archive.nwk")
        row = [r, s, repr(float(score)), evaluated, len(archive)]
        if gold is not None:
            g = gqd(tree, gold)
            gqds.append(g)
            row.append(repr(g))
        rows.append(row)
    with open(out / "runs.tsv", "w", encoding="utf-8") as fh:
        fh.write("run\tseed\tbest_score\tevaluated\tarchive_size" + ("\tgqd" if gold is not None else "") + "\n")
        for row in rows:
            fh.write("\t".join(str(x) for x in row) + "\n")
    manifest.output(out / "runs.tsv")
    cons = majority_consensus(run_trees, args.threshold)
    _write_trees([cons], out / "consensus.nwk")
    manifest.output(out / "consensus.nwk")
    manifest.data["results"] = {"best_scores": [float(x[0]) for x in results], "consensus": cons.newick()}
    print(f"{args.runs} runs, best score {min(float(x[0]) for x in results):g}")
    print(cons.newick())
    if gqds:
        manifest.data["results"]["gqd"] = {
            "min": min(gqds),
            "mean": statistics.fmean(gqds),
            "sd": statistics.stdev(gqds) if len(gqds) > 1 else 0.0,
        }
        print(GQD_HEADER)
        print(_gqd_row(args.label or args.mode, gqds))


def cmd_consensus(args, manifest):
    trees = []
    for f in args.trees:
        manifest.input(f)
        trees.extend(_load("a Newick file", "infer", read_newick_file, f))
    cons = majority_consensus(trees, args.threshold)
    if args.out:
        _write_trees([cons], args.out)
        manifest.output(args.out)
    else:
        print(cons.newick())
    if args.ascii:
        print(render_ascii(cons))
    manifest.data["results"] = {"consensus": cons.newick(), "n_trees": len(trees)}


def cmd_gqd(args, manifest):
    manifest.input(args.gold)
    gold = _load("a Newick file", "consensus", read_newick_file, args.gold)
    if len(gold) != 1:
        raise StageError(f"{args.gold}: expected exactly one gold tree")
    values = []
    for f in args.hyp:
        manifest.input(f)
        for t in _load("a Newick file", "infer", read_newick_file, f):
            values.append(gqd(t, gold[0]))
    print(GQD_HEADER)
    print(_gqd_row(args.label or "hypothesis", values))
    manifest.data["results"] = {"gqd": values}


def _learner(args, threshold):
    return SoundLawLearner(
        threshold=threshold,
        context_mode=args.context_mode,
        accuracy=args.accuracy,
        max_rules=args.max_rules,
    )


def cmd_asli(args, manifest):
    table = _table(args)
    manifest.input(args.cognates)
    entries = _load("a cognate table", "synth", load_cognates, args.cognates, table)
    learner = _learner(args, args.threshold).fit(entries, table)
    write_laws(learner.laws_, args.laws)
    manifest.output(args.laws)
    if args.matrix:
        write_binary_matrix(learner.transform(), learner.languages_, args.matrix)
        manifest.output(args.matrix)
    n_corr = 0
    if args.correspondences_out:
        corrs = learner.correspondences()
        write_correspondences(corrs, learner.languages_, args.correspondences_out)
        manifest.output(args.correspondences_out)
        n_corr = len(corrs)
    manifest.data["results"] = {"n_laws": len(learner.laws_), "n_correspondences": n_corr}
    print(f"{len(learner.laws_)} sound laws over {len(learner.languages_)} languages")


def cmd_baseline(args, manifest):
    if args.matrix:
        manifest.input(args.matrix)
        chars, languages = _load("a binary matrix", "asli", load_binary_matrix, args.matrix)
    else:
        if not args.cognates:
            raise UsageError("--cognates or --matrix is required")
        table = _table(args)
        manifest.input(args.cognates)
        entries = _load("a cognate table", "synth", load_cognates, args.cognates, table)
        if args.kind == "cognacy":
            chars, languages = cognacy_matrix(entries)
        else:
            learner = _learner(args, args.asli_threshold).fit(entries, table)
            chars, languages = shared_innovation_matrix(learner.laws_, learner.languages_), learner.languages_
    if not chars:
        raise StageError("empty character matrix")
    if args.matrix_out:
        write_binary_matrix(chars, languages, args.matrix_out)
        manifest.output(args.matrix_out)
    seed = derive_seed(args.seed, f"baseline-{args.kind}")
    manifest.seed("baseline", seed)
    ((score, evaluated, archive),) = run_searches(chars, languages, [seed], args.budget, _search_params(args))
    tree = majority_consensus(archive, args.threshold)
    _write_trees([tree], args.out)
    manifest.output(args.out)
    manifest.data["results"] = {"best_score": float(score), "archive_size": len(archive), "tree": tree.newick()}
    print(tree.newick())
    if args.gold:
        manifest.input(args.gold)
        gold = _load("a Newick file", "consensus", read_newick_file, args.gold)[0]
        g = gqd(tree, gold)
        manifest.data["results"]["gqd"] = g
        print(GQD_HEADER)
        print(_gqd_row(args.label or args.kind, [g]))


def cmd_synth(args, manifest):
    fam = make_family(args.languages, args.characters, args.seed)
    manifest.seed("synth", args.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "gold.nwk": lambda f: _write_trees([fam.gold], f),
        "correspondences.tsv": lambda f: write_correspondences(fam.correspondences, fam.languages, f),
        "expert_paths.tsv": lambda f: write_path_dump(_path_rows(fam.expert_paths), f),
        "cognates.tsv": lambda f: write_cognates(fam.cognates, f),
        "soundchanges.tsv": lambda f: _write_changes(fam.sound_changes, f),
    }
    for name, writer in files.items():
        writer(out / name)
        manifest.output(out / name)
    print(f"synthetic family with {len(fam.languages)} languages written to {out}")


def _write_changes(records, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("source\ttarget\tfamily\n")
        for r in records:
            fh.write(f"{r.source}\t{r.target}\t{r.family}\n")


# parser ----------------------------------------------------------------------------


def _depth(value):
    try:
        d = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid depth {value!r}") from None
    if d not in DEPTHS:
        raise argparse.ArgumentTypeError(f"unsupported depth {d}; choose from {', '.join(map(str, DEPTHS))}")
    return d


def _positive(kind):
    def conv(value):
        v = kind(value)
        if v <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {value}")
        return v

    return conv


def _fraction(value):
    v = float(value)
    if not 0 < v <= 1:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1], got {value}")
    return v


REQUIRED = {
    "train": ("changes", "out"),
    "paths": ("correspondences", "out"),
    "matrix": ("correspondences", "paths", "out_dir"),
    "infer": ("correspondences", "out_dir"),
    "consensus": ("trees",),
    "gqd": ("gold", "hyp"),
    "asli": ("cognates", "laws"),
    "baseline": ("kind", "out"),
    "synth": ("out_dir",),
}


def _add_search(p):
    p.add_argument("--budget", type=_positive(int), default=10_000, help="trees scored per run")
    p.add_argument("--seed", type=int, default=411, help="master seed")
    p.add_argument("--population", type=_positive(int), default=50)
    p.add_argument("--elite", type=_positive(int), default=10)
    p.add_argument("--exploration", type=float, default=0.2, help="share of fresh random trees per generation")
    p.add_argument("--threshold", type=_fraction, default=0.5, help="majority consensus threshold")
    p.add_argument("--gold", help="gold Newick tree for GQD reporting")
    p.add_argument("--label", help="row label in the GQD table")


def _add_graph(p):
    p.add_argument("--model", help="model file from `train`")
    p.add_argument("--k", type=_positive(int), default=1, help="paths per proto/reflex pair")
    p.add_argument("--insertion-mult", type=float, default=15.0)
    p.add_argument("--deletion-mult", type=float, default=10.0)


def _add_asli(p):
    p.add_argument("--threshold", type=float, default=0.6, help="laws need accuracy above this")
    p.add_argument("--context-mode", choices=("set", "feature-class"), default="set")
    p.add_argument("--accuracy", choices=("per-language", "pooled"), default="per-language")
    p.add_argument("--max-rules", type=_positive(int), default=2000)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file; flags override it")
    common.add_argument("--features", help="feature table CSV (default: bundled table)")
    common.add_argument("--manifest", help="write a JSON run manifest here")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="soundphylo", description="Sound-change-based phylogenetic inference.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("train", parents=[common], help="train the feature-edit network")
    p.add_argument("--changes", help="sound-change TSV (source, target, family)")
    p.add_argument("--depth", type=_depth, default=1, help="1, 4, 8 or 16 layers")
    p.add_argument("--seed", type=int, default=411)
    p.add_argument("--epochs", type=_positive(int), default=25)
    p.add_argument("--batch-size", type=_positive(int), default=5)
    p.add_argument("--lr", type=_positive(float), default=1e-3)
    p.add_argument("--train-fraction", type=_fraction, default=0.9)
    p.add_argument("--exclude-family", nargs="*", default=["Altaic"])
    p.add_argument("--out", help="model file")
    p.add_argument("--loss-curve", help="loss TSV (default: <out>.loss.tsv)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("paths", parents=[common], help="predict intermediate sound-change paths")
    p.add_argument("--correspondences")
    p.add_argument("--mode", choices=("dwfed", "fed-ablation"))
    _add_graph(p)
    p.add_argument("--expert", help="expert path dump; report recall against it")
    p.add_argument("--out", help="path dump TSV")
    p.set_defaults(func=cmd_paths)

    p = sub.add_parser("matrix", parents=[common], help="write per-correspondence transition matrices")
    p.add_argument("--correspondences")
    p.add_argument("--paths", help="path dump (predicted or expert)")
    p.add_argument("--mode", choices=("expert-unit-edges", "aiscp-weighted"), default="expert-unit-edges")
    p.add_argument("--penalty", type=_positive(float))
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_matrix)

    p = sub.add_parser("infer", parents=[common], help="directed parsimony tree search")
    p.add_argument("--correspondences")
    p.add_argument("--mode", choices=INFER_MODES, default="aiscp")
    p.add_argument("--paths", help="path dump; required for expert mode")
    _add_graph(p)
    p.add_argument("--penalty", type=_positive(float))
    p.add_argument("--runs", type=_positive(int), default=10)
    p.add_argument("--jobs", type=_positive(int), default=1)
    _add_search(p)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("consensus", parents=[common], help="majority-rule consensus of Newick trees")
    p.add_argument("--trees", nargs="+")
    p.add_argument("--threshold", type=_fraction, default=0.5)
    p.add_argument("--out")
    p.add_argument("--ascii", action="store_true", help="also print an outline of the tree")
    p.set_defaults(func=cmd_consensus)

    p = sub.add_parser("gqd", parents=[common], help="generalized quartet distance to a gold tree")
    p.add_argument("--gold")
    p.add_argument("--hyp", nargs="+")
    p.add_argument("--label")
    p.set_defaults(func=cmd_gqd)

    p = sub.add_parser("asli", parents=[common], help="induce sound laws from cognates")
    p.add_argument("--cognates")
    _add_asli(p)
    p.add_argument("--laws", help="law dump output")
    p.add_argument("--matrix", help="shared-innovation binary matrix output")
    p.add_argument("--correspondences-out", help="correspondence table output")
    p.set_defaults(func=cmd_asli)

    p = sub.add_parser("baseline", parents=[common], help="binary-matrix parsimony baselines")
    p.add_argument("--kind", choices=("cognacy", "innovations"))
    p.add_argument("--cognates")
    p.add_argument("--matrix", help="binary matrix input instead of cognates")
    p.add_argument("--matrix-out", help="write the binary matrix used")
    p.add_argument("--out", help="Newick output")
    _add_search(p)
    p.add_argument("--asli-threshold", type=float, default=0.6)
    p.add_argument("--context-mode", choices=("set", "feature-class"), default="set")
    p.add_argument("--accuracy", choices=("per-language", "pooled"), default="per-language")
    p.add_argument("--max-rules", type=_positive(int), default=2000)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic family with a known tree")
    p.add_argument("--languages", type=_positive(int), default=8)
    p.add_argument("--characters", type=_positive(int))
    p.add_argument("--seed", type=int, default=411)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_synth)
    return parser


def _subparser(parser, name):
    for action in parser._subparsers._group_actions:
        return action.choices[name]


def _apply_config(parser, argv):
    """Feed config values into the chosen subcommand's defaults."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    if not known.config:
        return
    config = read_config(known.config)
    command = next((a for a in rest if not a.startswith("-")), None)
    if command not in REQUIRED:
        return
    sp = _subparser(parser, command)
    actions = {a.dest: a for a in sp._actions}
    all_dests = {a.dest for name in REQUIRED for a in _subparser(parser, name)._actions}
    unknown = sorted(set(config) - all_dests)
    if unknown:
        raise UsageError(f"{known.config}: unknown keys {', '.join(unknown)}")
    defaults = {}
    for key, raw in config.items():
        action = actions.get(key)
        if action is None or key in ("config", "help"):
            continue
        try:
            if action.nargs in ("*", "+"):
                vals = raw.replace(",", " ").split()
                defaults[key] = [action.type(v) if action.type else v for v in vals]
            elif action.const is True and action.nargs == 0:
                defaults[key] = raw.lower() in ("1", "true", "yes", "on")
            else:
                v = action.type(raw) if action.type else raw
                if action.choices is not None and v not in action.choices:
                    raise UsageError(f"{known.config}: {key} must be one of {list(action.choices)}")
                defaults[key] = v
        except (argparse.ArgumentTypeError, ValueError) as exc:
            raise UsageError(f"{known.config}: bad value for {key}: {exc}") from None
    sp.set_defaults(**defaults)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
    except (UsageError, OSError) as exc:
        print(f"soundphylo: error: {exc}", file=sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    missing = [k for k in REQUIRED[args.command] if getattr(args, k, None) in (None, [])]
    if missing:
        sp = _subparser(parser, args.command)
        print(sp.format_usage().rstrip(), file=sys.stderr)
        print(f"soundphylo {args.command}: error: missing required option(s): "
              + ", ".join("--" + m.replace("_", "-") for m in missing), file=sys.stderr)
        return 2
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    manifest = Manifest(args.command, args)
    try:
        args.func(args, manifest)
        path = args.manifest or (str(Path(args.out_dir) / "manifest.json") if args.command == "infer" else None)
        if path:
            manifest.write(path)
    except UsageError as exc:
        print(f"soundphylo {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (StageError, ValueError, KeyError, TrainingError, OSError, RuntimeError) as exc:
        print(f"soundphylo {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
