"""Duration predictors.

Built-in trainable baselines are linear models over hashed unigram/bigram
features of the fact statement, trained with plain SGD in a seed-determined
example order. A 13-way (by default) softmax classifier is trained with cross
entropy against the nearest taxonomy class; a regressor is trained with squared
error on log-seconds. Trivial baselines (random, average, classification upper
bound) and an importer for externally produced predictions live here too.
"""

from __future__ import annotations

import io
import json
import math
import re
import zipfile
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

from .core import (
    YEAR_SECONDS,
    Duration,
    DurationDistribution,
    DurationTaxonomy,
    FactRecord,
    argmax_class,
    nearest_class,
)
from .errors import ContractError, ValidationError
from .ingest import iter_json_lines

Prediction = Union[DurationDistribution, Duration]

DEFAULT_DIM = 2 ** 18
MODEL_FORMAT_VERSION = 1
LOG_SECONDS_MIN = 0.0
LOG_SECONDS_MAX = math.log(1000 * YEAR_SECONDS)

_TOKEN = re.compile(r"[a-z0-9]+")


# -------------------------------------------------------------------------- features

@dataclass(frozen=True, eq=False)
class FeatureVector:
    indices: np.ndarray
    values: np.ndarray
    dim: int

    def dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


def _bucket(gram: str, dim: int) -> int:
    return zlib.crc32(gram.encode("utf-8")) % dim


def hash_features(text: str, dim: int = DEFAULT_DIM) -> FeatureVector:
    """L2-normalised counts of hashed lower-cased unigrams and bigrams."""
    toks = tokenize(text)
    grams = toks + [f"{a} {b}" for a, b in zip(toks, toks[1:])]
    counts: dict[int, float] = {}
    for g in grams:
        j = _bucket(g, dim)
        counts[j] = counts.get(j, 0.0) + 1.0
    if not counts:
        return FeatureVector(np.zeros(0, dtype=np.int64), np.zeros(0), dim)
    idx = np.array(sorted(counts), dtype=np.int64)
    val = np.array([counts[i] for i in idx.tolist()])
    val /= np.sqrt(np.dot(val, val))
    return FeatureVector(idx, val, dim)


# ---------------------------------------------------------------- losses and gradients

def softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - np.max(scores)
    e = np.exp(z)
    return e / e.sum()


def _xent_grad(scores: np.ndarray, target: int) -> tuple[float, np.ndarray]:
    """Cross-entropy loss and its gradient w.r.t. the class scores."""
    z = scores - np.max(scores)
    log_norm = math.log(np.exp(z).sum())
    loss = log_norm - z[target]
    g = np.exp(z - log_norm)
    g[target] -= 1.0
    return float(loss), g


def classifier_loss_grad(W: np.ndarray, b: np.ndarray, X: Sequence[FeatureVector],
                         y: Sequence[int]) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross entropy over ``X`` with gradients for ``W`` (classes x dim) and ``b``."""
    gW = np.zeros_like(W)
    gb = np.zeros_like(b)
    total = 0.0
    for fv, t in zip(X, y):
        scores = W[:, fv.indices] @ fv.values + b
        loss, g = _xent_grad(scores, t)
        total += loss
        gW[:, fv.indices] += np.outer(g, fv.values)
        gb += g
    n = len(X)
    return total / n, gW / n, gb / n


def regressor_loss_grad(w: np.ndarray, b: float, X: Sequence[FeatureVector],
                        y: Sequence[float]) -> tuple[float, np.ndarray, float]:
    """Mean of ``0.5 * (pred - target)**2`` with gradients for ``w`` and ``b``."""
    gw = np.zeros_like(w)
    gb = 0.0
    total = 0.0
    for fv, t in zip(X, y):
        r = float(w[fv.indices] @ fv.values + b) - t
        total += 0.5 * r * r
        gw[fv.indices] += r * fv.values
        gb += r
    n = len(X)
    return total / n, gw / n, gb / n


# ------------------------------------------------------------------------- models

@dataclass
class TrainConfig:
    seed: int = 0
    epochs: int = 10
    learning_rate: float = 0.5
    # per-epoch step size is learning_rate / (1 + decay * epoch)
    decay: float = 1.0
    dim: int = DEFAULT_DIM


def _step_size(cfg: TrainConfig, epoch: int) -> float:
    return cfg.learning_rate / (1.0 + cfg.decay * epoch)


def _check_training_set(train: Sequence[FactRecord]) -> None:
    if not train:
        raise ContractError("training set is empty")
    for r in train:
        if r.gold_duration is None:
            raise ValidationError(f"record {r.id!r} has no gold duration", rule="gold-duration")


@dataclass(eq=False)
class ClassifierModel:
    taxonomy: DurationTaxonomy
    weights: np.ndarray  # (classes, dim), column-major so feature gathers are contiguous
    bias: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def scores(self, fv: FeatureVector) -> np.ndarray:
        return self.weights[:, fv.indices] @ fv.values + self.bias

    def predict_text(self, text: str) -> DurationDistribution:
        p = softmax(self.scores(hash_features(text, self.dim)))
        return DurationDistribution(self.taxonomy, tuple((p / p.sum()).tolist()))

    def save(self, path) -> None:
        save_model(self, path)


@dataclass(eq=False)
class RegressorModel:
    weights: np.ndarray
    bias: float
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.weights.shape[0]

    def predict_log_seconds(self, text: str) -> float:
        fv = hash_features(text, self.dim)
        raw = float(self.weights[fv.indices] @ fv.values + self.bias)
        return min(LOG_SECONDS_MAX, max(LOG_SECONDS_MIN, raw))

    def predict_text(self, text: str) -> Duration:
        return Duration(math.exp(self.predict_log_seconds(text)))

    def save(self, path) -> None:
        save_model(self, path)


def train_classifier(train: Sequence[FactRecord], tax: DurationTaxonomy,
                     cfg: TrainConfig | None = None) -> ClassifierModel:
    cfg = cfg or TrainConfig()
    _check_training_set(train)
    X = [hash_features(r.statement, cfg.dim) for r in train]
    y = [nearest_class(r.gold_duration, tax) for r in train]
    k = len(tax)
    W = np.zeros((k, cfg.dim), order="F")
    b = np.zeros(k)
    rng = np.random.default_rng(cfg.seed)
    losses = []
    for epoch in range(cfg.epochs):
        lr = _step_size(cfg, epoch)
        for i in rng.permutation(len(X)):
            fv = X[i]
            _, g = _xent_grad(W[:, fv.indices] @ fv.values + b, y[i])
            W[:, fv.indices] -= lr * np.outer(g, fv.values)
            b -= lr * g
        loss = _xent_only(W, b, X, y)
        if not math.isfinite(loss):
            raise ContractError(f"non-finite training loss at epoch {epoch}")
        losses.append(loss)
    meta = {"kind": "classifier", **asdict(cfg), "epoch_losses": losses, "n_train": len(X)}
    return ClassifierModel(tax, W, b, meta)


def _xent_only(W, b, X, y) -> float:
    return math.fsum(_xent_grad(W[:, fv.indices] @ fv.values + b, t)[0] for fv, t in zip(X, y)) / len(X)


def train_regressor(train: Sequence[FactRecord], cfg: TrainConfig | None = None) -> RegressorModel:
    cfg = cfg or TrainConfig(learning_rate=0.1)
    _check_training_set(train)
    X = [hash_features(r.statement, cfg.dim) for r in train]
    y = [r.gold_duration.log_seconds for r in train]
    w = np.zeros(cfg.dim)
    # start from the mean target so a constant corpus is fit exactly
    b = math.fsum(y) / len(y)
    rng = np.random.default_rng(cfg.seed)
    losses = []
    for epoch in range(cfg.epochs):
        lr = _step_size(cfg, epoch)
        for i in rng.permutation(len(X)):
            fv = X[i]
            r = float(w[fv.indices] @ fv.values + b) - y[i]
            w[fv.indices] -= lr * r * fv.values
            b -= lr * r
        loss = math.fsum(0.5 * (float(w[fv.indices] @ fv.values + b) - t) ** 2
                         for fv, t in zip(X, y)) / len(X)
        if not math.isfinite(loss):
            raise ContractError(f"non-finite training loss at epoch {epoch}")
        losses.append(loss)
    meta = {"kind": "regressor", **asdict(cfg), "epoch_losses": losses, "n_train": len(X)}
    return RegressorModel(w, b, meta)


def predict_classifier(model: ClassifierModel, f: FactRecord) -> DurationDistribution:
    return model.predict_text(f.statement)


def predict_regressor(model: RegressorModel, f: FactRecord) -> Duration:
    return model.predict_text(f.statement)


# ------------------------------------------------------------------- model artifacts

def _npy_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.lib.format.write_array(buf, np.asanyarray(arr), allow_pickle=False)
    return buf.getvalue()


def save_model(model: "ClassifierModel | RegressorModel", path) -> None:
    """Write an ``.npz`` archive with fixed member timestamps (byte-reproducible)."""
    meta = dict(model.meta)
    meta["format_version"] = MODEL_FORMAT_VERSION
    if isinstance(model, ClassifierModel):
        meta["kind"] = "classifier"
        meta["taxonomy"] = model.taxonomy.to_spec()
        bias = model.bias
    else:
        meta["kind"] = "regressor"
        bias = np.array([model.bias])
    members = {
        "weights.npy": _npy_bytes(np.ascontiguousarray(model.weights)),
        "bias.npy": _npy_bytes(bias),
        "meta.npy": _npy_bytes(np.array(json.dumps(meta, sort_keys=True))),
    }
    with open(path, "wb") as fh, zipfile.ZipFile(fh, "w", zipfile.ZIP_DEFLATED) as zf:
        for name, payload in members.items():
            info = zipfile.ZipInfo(name, date_time=(1980, 1, 1, 0, 0, 0))
            info.compress_type = zipfile.ZIP_DEFLATED
            zf.writestr(info, payload)


def load_model(path) -> "ClassifierModel | RegressorModel":
    with np.load(Path(path), allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        weights, bias = z["weights"], z["bias"]
    if meta.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValidationError(f"unsupported model format {meta.get('format_version')!r}",
                              source=str(path), rule="model-version")
    if meta["kind"] == "classifier":
        tax = DurationTaxonomy.from_spec(meta["taxonomy"])
        return ClassifierModel(tax, np.asfortranarray(weights), bias, meta)
    return RegressorModel(weights, float(bias[0]), meta)


# ------------------------------------------------------------------------ baselines

def _reference_durations(reference: Sequence[FactRecord]) -> list[Duration]:
    if not reference:
        raise ContractError("reference split is empty")
    out = []
    for r in reference:
        d = r.gold_duration if isinstance(r, FactRecord) else r
        if d is None:
            raise ValidationError(f"reference record {r.id!r} has no gold duration",
                                  rule="gold-duration")
        out.append(d)
    return out


class RandomBaseline:
    """Samples a gold duration uniformly from the reference split for every fact."""

    def __init__(self, reference: Sequence[FactRecord], seed: int = 0):
        self.durations = _reference_durations(reference)
        self.seed = seed
        self._rng = np.random.default_rng(seed)

    def predict(self, f: FactRecord | None = None) -> Duration:
        return self.durations[int(self._rng.integers(len(self.durations)))]

    def predict_many(self, records: Iterable[FactRecord]) -> dict[str, Duration]:
        return {r.id: self.predict(r) for r in records}


class AverageBaseline:
    def __init__(self, reference: Sequence[FactRecord], mode: str = "log"):
        durations = _reference_durations(reference)
        if mode == "log":
            self.duration = Duration(math.exp(math.fsum(d.log_seconds for d in durations) / len(durations)))
        elif mode == "arithmetic":
            self.duration = Duration(math.fsum(d.seconds for d in durations) / len(durations))
        else:
            raise ValueError(f"unknown averaging mode {mode!r}")
        self.mode = mode

    def predict(self, f: FactRecord | None = None) -> Duration:
        return self.duration

    def predict_many(self, records: Iterable[FactRecord]) -> dict[str, Duration]:
        return {r.id: self.duration for r in records}


def baseline_random(reference: Sequence[FactRecord], seed: int = 0) -> RandomBaseline:
    return RandomBaseline(reference, seed)


def baseline_average(reference: Sequence[FactRecord], mode: str = "log") -> AverageBaseline:
    return AverageBaseline(reference, mode)


def classification_upperbound(records: Iterable[FactRecord],
                              tax: DurationTaxonomy) -> dict[str, DurationDistribution]:
    out = {}
    for r in records:
        if r.gold_duration is None:
            raise ValidationError(f"record {r.id!r} has no gold duration", rule="gold-duration")
        out[r.id] = DurationDistribution.point_mass(tax, nearest_class(r.gold_duration, tax))
    return out


def point_estimate(pred: Prediction) -> Duration:
    """Single duration for a prediction: the argmax class canonical for distributions."""
    if isinstance(pred, Duration):
        return pred
    return pred.taxonomy.canonical(argmax_class(pred))


# ---------------------------------------------------------------- prediction files

def _distribution_mass(raw) -> dict[str, float]:
    mass: dict[str, float] = {}

    def add(label, p):
        if isinstance(p, bool) or not isinstance(p, (int, float)):
            raise ValueError(f"probability for {label!r} is not a number")
        mass[label] = mass.get(label, 0.0) + float(p)

    if isinstance(raw, Mapping):
        for label, p in raw.items():
            add(label, p)
    elif isinstance(raw, list):
        for item in raw:
            if not isinstance(item, Mapping):
                raise ValueError("distribution entries must be objects")
            if "class" in item:
                add(item["class"], item.get("p"))
            elif len(item) == 1:
                (label, p), = item.items()
                add(label, p)
            else:
                raise ValueError("distribution entries must be {class, p} or {label: p}")
    else:
        raise ValueError("distribution must be a list or an object")
    return mass


def prediction_from_json(obj: Mapping, tax: DurationTaxonomy, *, strict: bool = True) -> Prediction:
    has_point = obj.get("point_log_seconds") is not None
    has_dist = obj.get("distribution") is not None
    if has_point and has_dist:
        raise ValidationError("both point_log_seconds and distribution given", rule="one-of")
    if not has_point and not has_dist:
        raise ValidationError("need point_log_seconds or distribution", rule="one-of")
    if has_point:
        v = obj["point_log_seconds"]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ValidationError("point_log_seconds must be a finite number", rule="point")
        return Duration(math.exp(v))
    try:
        mass = _distribution_mass(obj["distribution"])
    except ValueError as exc:
        raise ValidationError(str(exc), rule="distribution") from None
    for label in mass:
        if label not in tax.labels:
            raise ValidationError(f"unknown duration class {label!r}", rule="class-label")
    probs = [mass.get(label, 0.0) for label in tax.labels]
    if any(p < 0 or not math.isfinite(p) for p in probs):
        raise ValidationError("probabilities must be finite and non-negative", rule="distribution")
    total = math.fsum(probs)
    if total <= 0:
        raise ValidationError("distribution has no mass", rule="distribution")
    if abs(total - 1.0) > 1e-6 and strict:
        raise ValidationError(f"probabilities sum to {total:.9g}", rule="distribution-sum")
    return DurationDistribution(tax, tuple(p / total for p in probs))


def import_predictions(lines: Iterable[str], tax: DurationTaxonomy, *, strict: bool = True,
                       source: str = "<predictions>") -> dict[str, Prediction]:
    out: dict[str, Prediction] = {}
    for lineno, obj in iter_json_lines(lines, source):
        rid = obj.get("id")
        if not isinstance(rid, str) or not rid:
            raise ValidationError("id must be a non-empty string", source=source, line=lineno, rule="id")
        if rid in out:
            raise ValidationError(f"duplicate id {rid!r}", source=source, line=lineno,
                                  rule="duplicate-id")
        try:
            out[rid] = prediction_from_json(obj, tax, strict=strict)
        except ValidationError as exc:
            raise ValidationError(str(exc), source=source, line=lineno, rule=exc.rule) from None
    return out


def prediction_to_json(rid: str, pred: Prediction) -> dict:
    if isinstance(pred, Duration):
        return {"id": rid, "point_log_seconds": pred.log_seconds}
    return {"id": rid, "distribution": [{"class": label, "p": p}
                                        for label, p in zip(pred.taxonomy.labels, pred.probs)]}
