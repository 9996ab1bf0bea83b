"""Misalignment-aware confidence adjustment.

Every strategy scales a base confidence ``c`` by a discount in ``[0, 1]`` derived
from a duration prediction and the misalignment ``m``. The default ``survival``
mode keeps the probability mass on durations longer than ``m`` (the fact is
likely still true); ``literal`` keeps the mass at or below ``m`` instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import (
    Duration,
    DurationDistribution,
    MisalignmentLike,
    argmax_class,
    cdf_at,
    expectation_log_seconds,
    misalignment_seconds,
)
from .errors import ContractError, ValidationError
from .ingest import iter_json_lines

STRATEGIES = ("cdf", "binary", "expectation", "argmax", "uniform", "oracle", "none")
MODES = ("survival", "literal")


@dataclass(frozen=True)
class QAPrediction:
    id: str
    answer: str
    confidence: float
    gold_at_training: tuple[str, ...] = ()
    gold_at_query: tuple[str, ...] = ()
    changed: bool | None = None
    extra: Mapping = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        c = self.confidence
        if isinstance(c, bool) or not isinstance(c, (int, float)) or not 0.0 <= c <= 1.0:
            raise ValidationError(f"confidence must be in [0, 1], got {c!r}", rule="confidence")
        object.__setattr__(self, "confidence", float(c))
        object.__setattr__(self, "gold_at_training", tuple(self.gold_at_training))
        object.__setattr__(self, "gold_at_query", tuple(self.gold_at_query))


@dataclass(frozen=True)
class AdjustedPrediction:
    base: QAPrediction
    adjusted_confidence: float
    strategy: str
    discount: Mapping = field(default_factory=dict)

    @property
    def id(self) -> str:
        return self.base.id


_QA_FIELDS = {"id", "answer", "confidence", "gold_at_training", "gold_at_query", "changed"}


def qa_from_json(obj: Mapping) -> QAPrediction:
    rid = obj.get("id")
    if not isinstance(rid, str) or not rid:
        raise ValidationError("id must be a non-empty string", rule="id")
    if not isinstance(obj.get("answer"), str):
        raise ValidationError("answer must be a string", rule="answer")
    for key in ("gold_at_training", "gold_at_query"):
        v = obj.get(key, [])
        if not isinstance(v, list) or not all(isinstance(g, str) for g in v):
            raise ValidationError(f"{key} must be a list of strings", rule=key)
    changed = obj.get("changed")
    if changed is not None and not isinstance(changed, bool):
        raise ValidationError("changed must be a boolean", rule="changed")
    extra = {k: v for k, v in obj.items() if k not in _QA_FIELDS}
    return QAPrediction(rid, obj["answer"], obj.get("confidence"), tuple(obj.get("gold_at_training", [])),
                        tuple(obj.get("gold_at_query", [])), changed, extra)


def qa_to_json(p: QAPrediction) -> dict:
    out = {"id": p.id, "answer": p.answer, "confidence": p.confidence,
           "gold_at_training": list(p.gold_at_training), "gold_at_query": list(p.gold_at_query)}
    if p.changed is not None:
        out["changed"] = p.changed
    for k, v in p.extra.items():
        if k not in out:
            out[k] = v
    return out


def parse_qa_predictions(lines: Iterable[str], *, source: str = "<qa>") -> list[QAPrediction]:
    out, seen = [], set()
    for lineno, obj in iter_json_lines(lines, source):
        try:
            p = qa_from_json(obj)
        except ValidationError as exc:
            raise ValidationError(str(exc), source=source, line=lineno, rule=exc.rule) from None
        if p.id in seen:
            raise ValidationError(f"duplicate id {p.id!r}", source=source, line=lineno,
                                  rule="duplicate-id")
        seen.add(p.id)
        out.append(p)
    return out


def adjusted_to_json(a: AdjustedPrediction) -> dict:
    out = qa_to_json(a.base)
    out.update({"adjusted_confidence": a.adjusted_confidence, "strategy": a.strategy,
                "discount": dict(a.discount)})
    return out


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


def _clip(c: float, factor: float) -> float:
    return min(c, max(0.0, c * factor))


# ------------------------------------------------------------------- per-example rules

def adjust_cdf(p: QAPrediction, dist: DurationDistribution, m: MisalignmentLike,
               mode: str = "survival") -> AdjustedPrediction:
    _check_mode(mode)
    changed_mass = cdf_at(dist, m)
    factor = 1.0 - changed_mass if mode == "survival" else changed_mass
    return AdjustedPrediction(p, _clip(p.confidence, factor), "cdf",
                              {"mode": mode, "m_seconds": misalignment_seconds(m),
                               "cdf": changed_mass, "factor": factor})


def _binary(p, d_pred: Duration, m, mode, strategy, **info) -> AdjustedPrediction:
    _check_mode(mode)
    m_s = misalignment_seconds(m)
    # a duration equal to m has not been exceeded yet
    survives = d_pred.seconds >= m_s
    keep = survives if mode == "survival" else not survives
    return AdjustedPrediction(p, p.confidence if keep else 0.0, strategy,
                              {"mode": mode, "m_seconds": m_s, "duration_seconds": d_pred.seconds,
                               "factor": 1.0 if keep else 0.0, **info})


def adjust_binary(p: QAPrediction, d_pred: Duration, m: MisalignmentLike,
                  mode: str = "survival") -> AdjustedPrediction:
    return _binary(p, d_pred, m, mode, "binary")


def adjust_expectation(p: QAPrediction, dist: DurationDistribution, m: MisalignmentLike,
                       mode: str = "survival") -> AdjustedPrediction:
    return _binary(p, expectation_log_seconds(dist), m, mode, "expectation")


def adjust_argmax(p: QAPrediction, dist: DurationDistribution, m: MisalignmentLike,
                  mode: str = "survival") -> AdjustedPrediction:
    k = argmax_class(dist)
    return _binary(p, dist.taxonomy.canonical(k), m, mode, "argmax",
                   argmax_class=dist.taxonomy.labels[k])


def adjust_oracle(p: QAPrediction) -> AdjustedPrediction:
    if p.changed is None:
        raise ValidationError(f"prediction {p.id!r} has no 'changed' flag", rule="changed")
    return AdjustedPrediction(p, 0.0 if p.changed else p.confidence, "oracle",
                              {"changed": p.changed})


def adjust_none(p: QAPrediction) -> AdjustedPrediction:
    return AdjustedPrediction(p, p.confidence, "none", {})


# ---------------------------------------------------------------------- uniform

def uniform_offset(confidences: Sequence[float], target_total: float, tol: float = 1e-9,
                   max_iter: int = 200) -> float:
    """Offset ``u >= 0`` with ``sum(max(c - u, 0)) == target_total`` (bisection)."""
    cs = [float(c) for c in confidences]
    base_total = math.fsum(cs)
    if target_total > base_total + tol:
        raise ContractError(f"target total {target_total!r} exceeds base total {base_total!r}")
    if target_total >= base_total:
        return 0.0
    top = max(cs)
    if target_total <= 0:
        return top

    def total(u):
        return math.fsum(max(c - u, 0.0) for c in cs)

    lo, hi = 0.0, top
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if total(mid) > target_total:
            lo = mid
        else:
            hi = mid
    u = lo if abs(total(lo) - target_total) <= abs(total(hi) - target_total) else hi
    if abs(total(u) - target_total) > tol:
        raise ContractError(f"bisection did not reach tolerance {tol!r}")
    return u


def adjust_uniform(preds: Sequence[QAPrediction], per_example_adjusted: Sequence,
                   tol: float = 1e-9) -> list[AdjustedPrediction]:
    """Lower every confidence by the same amount so the total matches the per-example run."""
    if len(preds) != len(per_example_adjusted):
        raise ValidationError("prediction lists differ in length", rule="alignment")
    targets = []
    for p, a in zip(preds, per_example_adjusted):
        if isinstance(a, AdjustedPrediction):
            if a.id != p.id:
                raise ValidationError(f"id mismatch: {p.id!r} vs {a.id!r}", rule="alignment")
            targets.append(a.adjusted_confidence)
        else:
            targets.append(float(a))
    u = uniform_offset([p.confidence for p in preds], math.fsum(targets), tol)
    return [AdjustedPrediction(p, max(p.confidence - u, 0.0), "uniform", {"upsilon": u})
            for p in preds]


# ------------------------------------------------------------------- whole-set driver

def adjust_all(preds: Sequence[QAPrediction], strategy: str, m: MisalignmentLike | None = None,
               durations: Mapping | None = None, mode: str = "survival",
               uniform_match: str = "cdf") -> list[AdjustedPrediction]:
    """Apply one strategy across a prediction set. ``durations`` maps id to prediction."""
    if strategy not in STRATEGIES:
        raise ValueError(f"strategy must be one of {STRATEGIES}, got {strategy!r}")
    if strategy == "none":
        return [adjust_none(p) for p in preds]
    if strategy == "oracle":
        return [adjust_oracle(p) for p in preds]
    if strategy == "uniform":
        if uniform_match == "uniform":
            raise ValueError("uniform adjustment must match a per-example strategy")
        per_ex = adjust_all(preds, uniform_match, m, durations, mode)
        return adjust_uniform(preds, per_ex)
    if m is None or durations is None:
        raise ValidationError(f"strategy {strategy!r} needs a misalignment and duration predictions",
                              rule="inputs")
    out = []
    for p in preds:
        if p.id not in durations:
            raise ValidationError(f"no duration prediction for id {p.id!r}", rule="id-mismatch")
        d = durations[p.id]
        if strategy == "binary":
            if not isinstance(d, Duration):
                raise ValidationError(f"binary strategy needs a point duration for {p.id!r}",
                                      rule="prediction-kind")
            out.append(adjust_binary(p, d, m, mode))
            continue
        if not isinstance(d, DurationDistribution):
            raise ValidationError(f"{strategy} strategy needs a distribution for {p.id!r}",
                                  rule="prediction-kind")
        fn = {"cdf": adjust_cdf, "expectation": adjust_expectation, "argmax": adjust_argmax}[strategy]
        out.append(fn(p, d, m, mode))
    return out


# -------------------------------------------------------------------- base calibrator

CALIBRATOR_FEATURES = ("likelihood", "answer_tokens", "retrieval_score")


def calibrator_features(likelihood: float, answer: str,
                        retrieval_score: float | None = None) -> list[float]:
    feats = [float(likelihood), float(len(answer.split()))]
    if retrieval_score is not None:
        feats.append(float(retrieval_score))
    return feats


@dataclass(eq=False)
class CalibratorModel:
    weights: np.ndarray
    bias: float
    mean: np.ndarray
    scale: np.ndarray
    meta: dict = field(default_factory=dict)

    def logit(self, features: Sequence[float]) -> float:
        x = (np.asarray(features, dtype=float) - self.mean) / self.scale
        return float(x @ self.weights + self.bias)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def fit_calibrator(examples: Sequence[tuple[Sequence[float], bool]], *, iterations: int = 2000,
                   learning_rate: float = 0.5, l2: float = 1e-3) -> CalibratorModel:
    """Logistic regression on standardised scalar features by full-batch gradient descent."""
    if len(examples) < 2:
        raise ContractError("calibrator needs at least two examples")
    X = np.array([list(f) for f, _ in examples], dtype=float)
    y = np.array([1.0 if ok else 0.0 for _, ok in examples])
    if y.min() == y.max():
        raise ContractError("calibrator training data has a single label")
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    Z = (X - mean) / scale
    w = np.zeros(Z.shape[1])
    b = 0.0
    n = len(y)
    for _ in range(iterations):
        r = _sigmoid(Z @ w + b) - y
        w -= learning_rate * (Z.T @ r / n + l2 * w)
        b -= learning_rate * float(r.mean())
    return CalibratorModel(w, b, mean, scale,
                           {"iterations": iterations, "learning_rate": learning_rate, "l2": l2})


def apply_calibrator(model: CalibratorModel, features: Sequence[float]) -> float:
    return float(_sigmoid(model.logit(features)))
