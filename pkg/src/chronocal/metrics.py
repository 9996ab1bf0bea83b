"""Intrinsic (duration) and extrinsic (QA calibration) metrics."""

from __future__ import annotations

import math
import re
import string
from dataclasses import dataclass, fields
from typing import Mapping, Sequence

from .core import Duration
from .errors import ContractError, ValidationError
from .ingest import MCTacoRecord

# ------------------------------------------------------------------ duration error

def _aligned(preds, golds):
    if len(preds) != len(golds):
        raise ValidationError(f"length mismatch: {len(preds)} predictions vs {len(golds)} golds",
                              rule="alignment")
    if not preds:
        raise ContractError("no predictions to score")


def year_mae(preds: Sequence[Duration], golds: Sequence[Duration]) -> float:
    _aligned(preds, golds)
    return math.fsum(abs(p.years - g.years) for p, g in zip(preds, golds)) / len(preds)


def logsec_mse(preds: Sequence[Duration], golds: Sequence[Duration]) -> float:
    _aligned(preds, golds)
    return math.fsum((p.log_seconds - g.log_seconds) ** 2 for p, g in zip(preds, golds)) / len(preds)


# ------------------------------------------------------------------------ exact match

_ARTICLES = re.compile(r"\b(a|an|the)\b")
_PUNCT = set(string.punctuation)


def normalize_answer(s: str) -> str:
    s = s.lower()
    s = "".join(ch for ch in s if ch not in _PUNCT)
    s = _ARTICLES.sub(" ", s)
    return " ".join(s.split())


def exact_match(answer: str, golds: Sequence[str]) -> bool:
    a = normalize_answer(answer)
    return any(a == normalize_answer(g) for g in golds)


def em_percent(answers: Sequence[str], golds: Sequence[Sequence[str]]) -> float:
    _aligned(answers, golds)
    return 100.0 * sum(exact_match(a, g) for a, g in zip(answers, golds)) / len(answers)


# ------------------------------------------------------------------------------ AUROC

def auc_roc(scores: Sequence[float], labels: Sequence[bool]) -> float:
    """Probability a correct prediction outscores an incorrect one (ties count one half).

    Computed from average ranks; the numerator is a multiple of 1/2 so the result
    matches explicit pair counting exactly.
    """
    _aligned(scores, labels)
    n_pos = sum(1 for y in labels if y)
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ContractError("AUCROC needs both correct and incorrect predictions")
    order = sorted(range(len(scores)), key=lambda i: scores[i])
    rank_sum_pos = 0.0
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        avg_rank = (i + j + 2) / 2.0
        rank_sum_pos += avg_rank * sum(1 for k in order[i:j + 1] if labels[k])
        i = j + 1
    u = rank_sum_pos - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


# -------------------------------------------------------------------------------- ECE

def ece_buckets(n: int, n_buckets: int = 10) -> list[tuple[int, int]]:
    """Contiguous ``(start, stop)`` ranges; the remainder goes one each to the last buckets."""
    base, rem = divmod(n, n_buckets)
    out, start = [], 0
    for b in range(n_buckets):
        size = base + (1 if b >= n_buckets - rem else 0)
        out.append((start, start + size))
        start += size
    return out


def ece(confidences: Sequence[float], correct: Sequence[bool], n_buckets: int = 10) -> float:
    _aligned(confidences, correct)
    order = sorted(range(len(confidences)), key=lambda i: confidences[i])
    gaps = []
    for start, stop in ece_buckets(len(order), n_buckets):
        if stop == start:
            continue
        idx = order[start:stop]
        avg_conf = math.fsum(confidences[i] for i in idx) / len(idx)
        acc = sum(1 for i in idx if correct[i]) / len(idx)
        gaps.append(abs(avg_conf - acc))
    return math.fsum(gaps) / len(gaps)


# ---------------------------------------------------------------------- risk control

@dataclass(frozen=True)
class RiskControl:
    tau: float
    achieved: float | None
    delta: float | None
    coverage: float


def _meets(n_correct: int, n: int, target_pct: float) -> bool:
    return 100 * n_correct >= target_pct * n


def risk_control(calib: Sequence[tuple[float, bool]], eval_set: Sequence[tuple[float, bool]],
                 target_pct: float) -> RiskControl:
    """Threshold from the calibration set, accuracy above it on the evaluation set.

    ``tau`` is the lowest calibration confidence whose kept set reaches the target
    accuracy; ``inf`` when no threshold does.
    """
    if not calib:
        raise ContractError("risk control needs a non-empty calibration set")
    ranked = sorted(calib, key=lambda t: -t[0])
    tau = math.inf
    n = n_ok = 0
    i = 0
    while i < len(ranked):
        c = ranked[i][0]
        while i < len(ranked) and ranked[i][0] == c:
            n += 1
            n_ok += bool(ranked[i][1])
            i += 1
        if _meets(n_ok, n, target_pct):
            tau = c
    kept = [ok for c, ok in eval_set if c >= tau]
    coverage = 100.0 * len(kept) / len(eval_set) if eval_set else 0.0
    if not kept:
        return RiskControl(tau, None, None, coverage)
    achieved = 100.0 * sum(1 for ok in kept if ok) / len(kept)
    return RiskControl(tau, achieved, abs(achieved - target_pct), coverage)


# -------------------------------------------------------------------------- MC-TACO

def mctaco_select(pred: Duration, options: Sequence, threshold: float) -> frozenset[int]:
    """Indices of options within ``threshold`` log-seconds of the prediction."""
    x = pred.log_seconds
    out = set()
    for i, opt in enumerate(options):
        d = opt[1] if isinstance(opt, tuple) else opt.duration
        if abs(d.log_seconds - x) <= threshold:
            out.add(i)
    return frozenset(out)


def set_f1(selected: frozenset, gold: frozenset) -> float:
    if not selected and not gold:
        return 1.0
    if not selected or not gold:
        return 0.0
    tp = len(selected & gold)
    if tp == 0:
        return 0.0
    precision, recall = tp / len(selected), tp / len(gold)
    return 2 * precision * recall / (precision + recall)


def mctaco_eval(records: Sequence[MCTacoRecord], preds: Mapping[str, Duration],
                threshold: float) -> tuple[float, float]:
    """``(strict accuracy %, mean set-F1 %)`` over the records."""
    if not records:
        raise ContractError("no MC-TACO records to score")
    strict, f1s = 0, []
    for r in records:
        if r.id not in preds:
            raise ValidationError(f"no prediction for MC-TACO record {r.id!r}", rule="id-mismatch")
        sel = mctaco_select(preds[r.id], r.options, threshold)
        strict += sel == r.gold_set
        f1s.append(set_f1(sel, r.gold_set))
    return 100.0 * strict / len(records), 100.0 * math.fsum(f1s) / len(records)


def default_threshold_grid(start: float = 0.0, stop: float = 10.0, step: float = 0.05) -> list[float]:
    n = int(math.floor((stop - start) / step + 1e-9))
    return [round(start + i * step, 10) for i in range(n + 1)]


def tune_mctaco_threshold(dev_records: Sequence[MCTacoRecord], dev_preds: Mapping[str, Duration],
                          grid: Sequence[float] | None = None) -> float:
    grid = default_threshold_grid() if grid is None else list(grid)
    if not grid:
        raise ContractError("threshold grid is empty")
    best, best_f1 = None, -1.0
    for t in sorted(grid):
        f1 = mctaco_eval(dev_records, dev_preds, t)[1]
        if f1 > best_f1:
            best, best_f1 = t, f1
    return best


# ------------------------------------------------------------------ confidence drift

def avg_conf_delta(base: Sequence[float], adjusted: Sequence[float]) -> float:
    _aligned(base, adjusted)
    total = math.fsum(base)
    if total == 0:
        raise ContractError("base confidences sum to zero")
    return 100.0 * (math.fsum(adjusted) - total) / total


# ---------------------------------------------------------------------------- report

@dataclass
class EvalReport:
    name: str = ""
    n: int | None = None
    em: float | None = None
    aucroc: float | None = None
    ece: float | None = None
    rc_target: float | None = None
    rc_achieved: float | None = None
    rc_delta: float | None = None
    tau: float | None = None
    y_mae: float | None = None
    ls_mse: float | None = None
    mctaco_strict: float | None = None
    mctaco_f1: float | None = None
    mctaco_threshold: float | None = None
    avg_conf_delta_pct: float | None = None
    counts: dict | None = None

    def as_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            if isinstance(v, float) and math.isinf(v):
                v = "inf"
            out[f.name] = v
        return out


_COLUMNS = (
    ("em", "EM", "{:.1f}"),
    ("aucroc", "AUCROC", "{:.3f}"),
    ("ece", "ECE", "{:.3f}"),
    ("rc", "RC@{target:g} (|D|)", None),
    ("avg_conf_delta_pct", "AvgConf%D", "{:.1f}"),
    ("ls_mse", "LS-MSE", "{:.2f}"),
    ("y_mae", "Y-MAE", "{:.2f}"),
    ("mctaco_strict", "Strict", "{:.1f}"),
    ("mctaco_f1", "F1", "{:.1f}"),
)


def render_table(reports: Sequence[EvalReport]) -> str:
    """Fixed-width text table: one row per system/strategy, one column per metric present."""
    cols = []
    for key, head, fmt in _COLUMNS:
        if key == "rc":
            if any(r.rc_target is not None for r in reports):
                target = next(r.rc_target for r in reports if r.rc_target is not None)
                cols.append((key, head.format(target=target), None))
        elif any(getattr(r, key) is not None for r in reports):
            cols.append((key, head, fmt))
    rows = [["System"] + [h for _, h, _ in cols]]
    for r in reports:
        row = [r.name or "-"]
        for key, _, fmt in cols:
            if key == "rc":
                if r.rc_achieved is None:
                    row.append("n/a")
                else:
                    row.append(f"{r.rc_achieved:.1f} ({r.rc_delta:.1f})")
            else:
                v = getattr(r, key)
                row.append("-" if v is None else fmt.format(v))
        rows.append(row)
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    lines = []
    for k, row in enumerate(rows):
        cells = [row[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(row[1:], widths[1:])]
        lines.append("  ".join(cells).rstrip())
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
