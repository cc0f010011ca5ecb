"""Directional feature-change network and the DWFED phone-pair cost.

The network maps a one-hot source phone (3N bits) to 2N probabilities: for
every feature f, ``P(f up | source)`` at index 2f and ``P(f down | source)`` at
index 2f+1. An edit's cost is one minus the probability of its direction.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import struct
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .phonology import NULL, PhoneFeatureTable, UnknownPhoneError, normalize, one_hot

log = logging.getLogger(__name__)

DEPTHS = (1, 4, 8, 16)
DEFAULT_EXCLUDED_FAMILIES = ("Altaic",)
MAGIC = b"SOUNDPHYLO-FEM\n"
FORMAT_VERSION = 1


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class SoundChangeRecord:
    source: str
    target: str
    family: str = ""


class RecordList(list):
    """List of records plus bookkeeping from :func:`load_sound_changes`."""

    skipped: int = 0
    excluded: int = 0
    identity: int = 0


def load_sound_changes(path, table: PhoneFeatureTable, exclude_families=DEFAULT_EXCLUDED_FAMILIES):
    """Read ``source<TAB>target<TAB>family`` rows.

    Rows with phones missing from ``table`` are skipped and counted, rows from
    excluded families are dropped, and records whose endpoints share a feature
    vector are dropped since they carry no direction.
    """
    excluded = {f.casefold() for f in exclude_families or ()}
    out = RecordList()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip() or line.startswith("#"):
                continue
            cells = line.split("\t")
            if lineno == 1 and cells[0].strip().lower() == "source":
                continue
            if len(cells) < 2:
                raise ValueError(f"{path}:{lineno}: expected source<TAB>target<TAB>family")
            source, target = normalize(cells[0]), normalize(cells[1])
            family = cells[2].strip() if len(cells) > 2 else ""
            if family.casefold() in excluded:
                out.excluded += 1
                continue
            if source not in table or target not in table:
                out.skipped += 1
                continue
            if np.array_equal(table.encode(source), table.encode(target)):
                out.identity += 1
                continue
            out.append(SoundChangeRecord(source, target, family))
    if out.skipped:
        log.warning("%s: skipped %d rows with phones missing from the feature table", path, out.skipped)
    if not out:
        raise ValueError(f"{path}: no usable sound changes")
    return out


def direction_vector(source_vec, target_vec) -> np.ndarray:
    s = np.asarray(source_vec)
    t = np.asarray(target_vec)
    out = np.zeros(2 * s.shape[-1], dtype=np.float64)
    out[0::2] = t > s
    out[1::2] = t < s
    return out


def make_training_pair(record: SoundChangeRecord, table: PhoneFeatureTable):
    s = table.encode(record.source)
    t = table.encode(record.target)
    return one_hot(s), direction_vector(s, t)


def _sigmoid(z):
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))


def bce_with_logits(z, y) -> float:
    # mean over batch and outputs of softplus(z) - y*z
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


class FeatureEditModel(BaseEstimator):
    """Feed-forward network predicting directional feature-change probabilities.

    Parameters
    ----------
    depth : {1, 4, 8, 16}
        Number of affine layers. Depth 1 is a single 2N x 3N map.
    hidden_width : int or None
        Width of hidden layers; defaults to the input width 3N.
    epochs, batch_size, learning_rate :
        Adam training schedule.
    train_fraction : float
        Share of records used for training; the rest only report test loss.
    seed : int
        Seeds initialization, the split and every epoch shuffle.

    Attributes
    ----------
    weights_ : list of ndarray
        Layer matrices of shape (out, in).
    biases_ : list of ndarray
    train_loss_, test_loss_ : list of float
        BCE after each epoch on the train and held-out rows.
    """

    def __init__(
        self,
        depth=1,
        hidden_width=None,
        epochs=25,
        batch_size=5,
        learning_rate=1e-3,
        train_fraction=0.9,
        seed=411,
        beta1=0.9,
        beta2=0.999,
        epsilon=1e-8,
    ):
        self.depth = depth
        self.hidden_width = hidden_width
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.train_fraction = train_fraction
        self.seed = seed
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon

    @property
    def skip_connections(self) -> bool:
        return self.depth >= 8

    def _layer_shapes(self, n_in, n_out):
        if self.depth not in DEPTHS:
            raise ValueError(f"depth must be one of {DEPTHS}, got {self.depth}")
        if self.depth == 1:
            return [(n_out, n_in)]
        h = self.hidden_width or n_in
        return [(h, n_in)] + [(h, h)] * (self.depth - 2) + [(n_out, h)]

    def _init_params(self, n_in, n_out, rng):
        self.weights_, self.biases_ = [], []
        for out_dim, in_dim in self._layer_shapes(n_in, n_out):
            bound = 1.0 / np.sqrt(in_dim)
            self.weights_.append(rng.uniform(-bound, bound, size=(out_dim, in_dim)))
            self.biases_.append(rng.uniform(-bound, bound, size=out_dim))

    @classmethod
    def zeros(cls, n_features: int, depth: int = 1, **params) -> "FeatureEditModel":
        """An untrained model whose every parameter is zero (outputs 0.5)."""
        model = cls(depth=depth, **params)
        model._init_params(3 * n_features, 2 * n_features, np.random.default_rng(0))
        model.weights_ = [np.zeros_like(w) for w in model.weights_]
        model.biases_ = [np.zeros_like(b) for b in model.biases_]
        model.n_features_in_ = 3 * n_features
        model.train_loss_, model.test_loss_ = [], []
        return model

    # forward / backward -------------------------------------------------

    def _forward(self, X):
        """Return logits and the cache needed by :meth:`_backward`."""
        W, b = self.weights_, self.biases_
        if len(W) == 1:
            return X @ W[0].T + b[0], [X]
        cache = [X]
        h = np.maximum(X @ W[0].T + b[0], 0.0)
        cache.append(h)
        hidden = list(range(1, len(W) - 1))
        if self.skip_connections:
            for i in hidden[::2]:
                a_pre = h @ W[i].T + b[i]
                a = np.maximum(a_pre, 0.0)
                z = a @ W[i + 1].T + b[i + 1] + h
                h = np.maximum(z, 0.0)
                cache.extend([a, h])
        else:
            for i in hidden:
                h = np.maximum(h @ W[i].T + b[i], 0.0)
                cache.append(h)
        return h @ W[-1].T + b[-1], cache

    def _backward(self, dz, cache):
        W = self.weights_
        gW = [None] * len(W)
        gb = [None] * len(W)
        if len(W) == 1:
            gW[0] = dz.T @ cache[0]
            gb[0] = dz.sum(axis=0)
            return gW, gb
        h = cache[-1]
        gW[-1] = dz.T @ h
        gb[-1] = dz.sum(axis=0)
        dh = dz @ W[-1]
        hidden = list(range(1, len(W) - 1))
        pos = len(cache) - 1
        if self.skip_connections:
            for i in reversed(hidden[::2]):
                h_out, a, h_in = cache[pos], cache[pos - 1], cache[pos - 2]
                dzb = dh * (h_out > 0)
                gW[i + 1] = dzb.T @ a
                gb[i + 1] = dzb.sum(axis=0)
                da = (dzb @ W[i + 1]) * (a > 0)
                gW[i] = da.T @ h_in
                gb[i] = da.sum(axis=0)
                dh = dzb + da @ W[i]
                pos -= 2
        else:
            for i in reversed(hidden):
                h_out, h_in = cache[pos], cache[pos - 1]
                dpre = dh * (h_out > 0)
                gW[i] = dpre.T @ h_in
                gb[i] = dpre.sum(axis=0)
                dh = dpre @ W[i]
                pos -= 1
        h1, x = cache[1], cache[0]
        dpre = dh * (h1 > 0)
        gW[0] = dpre.T @ x
        gb[0] = dpre.sum(axis=0)
        return gW, gb

    def loss_and_gradients(self, X, y):
        """Mean BCE over rows and outputs, with analytic parameter gradients."""
        z, cache = self._forward(X)
        loss = bce_with_logits(z, y)
        dz = (_sigmoid(z) - y) / z.size
        gW, gb = self._backward(dz, cache)
        return loss, gW, gb

    # estimator API --------------------------------------------------------

    def fit(self, X, y):
        X = check_array(X, dtype=np.float64)
        y = check_array(y, dtype=np.float64)
        if X.shape[0] != y.shape[0]:
            raise ValueError("X and y have different numbers of rows")
        if X.shape[0] == 0:
            raise TrainingError("empty training set")
        rng = np.random.default_rng(self.seed)
        self.n_features_in_ = X.shape[1]
        self._init_params(X.shape[1], y.shape[1], rng)

        order = rng.permutation(X.shape[0])
        n_train = max(1, int(self.train_fraction * X.shape[0]))
        train_idx, test_idx = order[:n_train], order[n_train:]
        Xtr, ytr = X[train_idx], y[train_idx]
        Xte, yte = X[test_idx], y[test_idx]

        params = self.weights_ + self.biases_
        m = [np.zeros_like(p) for p in params]
        v = [np.zeros_like(p) for p in params]
        step = 0
        self.train_loss_, self.test_loss_ = [], []
        for epoch in range(1, self.epochs + 1):
            perm = rng.permutation(n_train)
            for start in range(0, n_train, self.batch_size):
                idx = perm[start : start + self.batch_size]
                loss, gW, gb = self.loss_and_gradients(Xtr[idx], ytr[idx])
                if not np.isfinite(loss):
                    raise TrainingError(f"non-finite loss at epoch {epoch}")
                step += 1
                for k, g in enumerate(gW + gb):
                    m[k] = self.beta1 * m[k] + (1 - self.beta1) * g
                    v[k] = self.beta2 * v[k] + (1 - self.beta2) * g * g
                    mhat = m[k] / (1 - self.beta1**step)
                    vhat = v[k] / (1 - self.beta2**step)
                    params[k] -= self.learning_rate * mhat / (np.sqrt(vhat) + self.epsilon)
            train_loss = bce_with_logits(self._forward(Xtr)[0], ytr)
            if not np.isfinite(train_loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}")
            self.train_loss_.append(train_loss)
            self.test_loss_.append(bce_with_logits(self._forward(Xte)[0], yte) if len(Xte) else float("nan"))
            log.debug("epoch %d train %.6f test %.6f", epoch, train_loss, self.test_loss_[-1])
        return self

    def decision_function(self, X):
        check_is_fitted(self, "weights_")
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return self._forward(X)[0]

    def predict_proba(self, X):
        return _sigmoid(self.decision_function(X))


def records_to_arrays(records, table: PhoneFeatureTable):
    pairs = [make_training_pair(r, table) for r in records]
    if not pairs:
        raise TrainingError("empty training set")
    return np.stack([p[0] for p in pairs]), np.stack([p[1] for p in pairs])


def train(records, table: PhoneFeatureTable, **hyperparams) -> FeatureEditModel:
    """Fit a :class:`FeatureEditModel` on sound-change records."""
    X, y = records_to_arrays(records, table)
    model = FeatureEditModel(**hyperparams).fit(X, y)
    model.feature_names_ = tuple(table.feature_names)
    return model


def predict(model: FeatureEditModel, source: str, table: PhoneFeatureTable) -> np.ndarray:
    return model.predict_proba(one_hot(table.encode(source)))[0]


def dwfed_from_probs(probs, source_vec, target_vec) -> float:
    """Sum of ``1 - P(direction)`` over features that differ."""
    d = direction_vector(source_vec, target_vec)
    return float(np.dot(d, 1.0 - np.asarray(probs)))


def dwfed(model: FeatureEditModel, table: PhoneFeatureTable, s: str, t: str) -> float:
    if NULL in (s, t):
        raise UnknownPhoneError(NULL)
    xs, xt = table.encode(s), table.encode(t)
    if np.array_equal(xs, xt):
        return 0.0
    return dwfed_from_probs(predict(model, s, table), xs, xt)


def dwfed_matrix(model: FeatureEditModel, source_vecs, target_vecs) -> np.ndarray:
    """Pairwise costs from every source row to every target row."""
    S = np.asarray(source_vecs)
    T = np.asarray(target_vecs)
    probs = model.predict_proba(one_hot(S))
    cost_up = 1.0 - probs[:, 0::2]
    cost_down = 1.0 - probs[:, 1::2]
    up = T[None, :, :] > S[:, None, :]
    down = T[None, :, :] < S[:, None, :]
    return np.einsum("stf,sf->st", up, cost_up) + np.einsum("stf,sf->st", down, cost_down)


# serialization -------------------------------------------------------------


def feature_names_hash(names) -> str:
    return hashlib.sha256("\x1f".join(names).encode("utf-8")).hexdigest()


def save_model(model: FeatureEditModel, path) -> None:
    check_is_fitted(model, "weights_")
    names = tuple(getattr(model, "feature_names_", ()))
    header = {
        "version": FORMAT_VERSION,
        "depth": model.depth,
        "skip": model.skip_connections,
        "shapes": [list(w.shape) for w in model.weights_],
        "n_features": model.n_features_in_ // 3,
        "feature_names": list(names),
        "feature_names_sha256": feature_names_hash(names),
        "params": {k: v for k, v in model.get_params().items()},
        "train_loss": [float(x) for x in model.train_loss_],
        "test_loss": [None if np.isnan(x) else float(x) for x in model.test_loss_],
    }
    blob = json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for w, b in zip(model.weights_, model.biases_):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_model(path) -> FeatureEditModel:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{path}: not a feature-edit model file")
        (size,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(size).decode("utf-8"))
        if header.get("version") != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported model version {header.get('version')}")
        model = FeatureEditModel(**header["params"])
        model.weights_, model.biases_ = [], []
        for out_dim, in_dim in header["shapes"]:
            w = np.frombuffer(fh.read(8 * out_dim * in_dim), dtype="<f8").reshape(out_dim, in_dim)
            b = np.frombuffer(fh.read(8 * out_dim), dtype="<f8")
            model.weights_.append(w.astype(np.float64))
            model.biases_.append(b.astype(np.float64))
        if fh.read(1):
            raise ValueError(f"{path}: trailing bytes after weights")
    model.n_features_in_ = 3 * header["n_features"]
    model.feature_names_ = tuple(header["feature_names"])
    model.train_loss_ = header["train_loss"]
    model.test_loss_ = [float("nan") if x is None else x for x in header["test_loss"]]
    return model


def check_model_table(model: FeatureEditModel, table: PhoneFeatureTable) -> None:
    names = tuple(getattr(model, "feature_names_", ()))
    if names and names != tuple(table.feature_names):
        raise ValueError("model was trained with a different feature table")


def write_loss_curve(model: FeatureEditModel, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["epoch", "train_bce", "test_bce"])
        for i, (a, b) in enumerate(zip(model.train_loss_, model.test_loss_), start=1):
            w.writerow([i, repr(float(a)), repr(float(b))])
