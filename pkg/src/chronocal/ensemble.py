"""Adaptive inference: duration-gated closed/open routing and two-corpus re-ranking."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .calibration import QAPrediction
from .core import (
    CalendarDate,
    DurationDistribution,
    MisalignmentLike,
    cdf_at,
    date_span_seconds,
)
from .errors import ContractError, ValidationError
from .metrics import exact_match


@dataclass(frozen=True)
class CorpusAnswer:
    id: str
    answer: str
    confidence: float
    corpus_date: CalendarDate
    corpus: str = ""
    gold_at_query: tuple[str, ...] = ()

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValidationError(f"confidence must be in [0, 1], got {self.confidence!r}",
                                  rule="confidence")
        object.__setattr__(self, "corpus_date", CalendarDate.parse(self.corpus_date))
        object.__setattr__(self, "gold_at_query", tuple(self.gold_at_query))


@dataclass(frozen=True)
class Decision:
    id: str
    answer: str
    used_updated: bool
    gold_at_query: tuple[str, ...] = ()
    info: Mapping = field(default_factory=dict)


def hybrid_gate(closed: QAPrediction, dist_for_closed_answer: DurationDistribution,
                m: MisalignmentLike, open_: QAPrediction, p_star: float = 0.5) -> tuple[str, bool]:
    """Retrieve when the fact has at least ``p_star`` probability of having changed."""
    if closed.id != open_.id:
        raise ValidationError(f"id mismatch: {closed.id!r} vs {open_.id!r}", rule="id-mismatch")
    if cdf_at(dist_for_closed_answer, m) >= p_star:
        return open_.answer, True
    return closed.answer, False


def run_hybrid(closed: Sequence[QAPrediction], open_: Sequence[QAPrediction],
               dists: Mapping[str, DurationDistribution], m: MisalignmentLike,
               p_star: float = 0.5) -> list[Decision]:
    by_id = {p.id: p for p in open_}
    out = []
    for c in closed:
        if c.id not in by_id:
            raise ValidationError(f"open-book path has no prediction for {c.id!r}", rule="id-mismatch")
        if c.id not in dists:
            raise ValidationError(f"no duration distribution for {c.id!r}", rule="id-mismatch")
        if not isinstance(dists[c.id], DurationDistribution):
            raise ValidationError(f"hybrid gate needs a distribution for {c.id!r}",
                                  rule="prediction-kind")
        o = by_id[c.id]
        answer, used = hybrid_gate(c, dists[c.id], m, o, p_star)
        gold = c.gold_at_query or o.gold_at_query
        out.append(Decision(c.id, answer, used, gold, {"cdf": cdf_at(dists[c.id], m)}))
    return out


def two_corpus_rerank(candidates: Sequence[CorpusAnswer], dists: Mapping[str, DurationDistribution],
                      query_date) -> CorpusAnswer:
    """Pick the candidate with the highest misalignment-adjusted confidence.

    Each candidate's misalignment runs from its corpus date to the query date.
    ``dists`` is keyed by candidate corpus name, falling back to the id. Ties go
    to the more recent corpus, then to the lexicographically smaller id.
    """
    if not candidates:
        raise ContractError("no candidates to re-rank")
    t_q = CalendarDate.parse(query_date)
    best_key, best = None, None
    for cand in candidates:
        dist = dists.get(cand.corpus) if cand.corpus in dists else dists.get(cand.id)
        if dist is None:
            raise ValidationError(f"no duration distribution for candidate {cand.id!r}",
                                  rule="id-mismatch")
        m = date_span_seconds(cand.corpus_date, t_q)
        if m < 0:
            raise ValidationError(f"corpus date {cand.corpus_date} is after query date {t_q}",
                                  rule="date-order")
        score = cand.confidence * (1.0 - cdf_at(dist, m))
        key = (score, cand.corpus_date.date, _neg_id(cand.id))
        if best_key is None or key > best_key:
            best_key, best = key, cand
    return best


def _neg_id(s: str) -> tuple:
    # orders the lexicographically smallest id highest
    return tuple(-ord(ch) for ch in s) + (1,)


def adjusted_score(cand: CorpusAnswer, dist: DurationDistribution, query_date) -> float:
    m = date_span_seconds(cand.corpus_date, CalendarDate.parse(query_date))
    return cand.confidence * (1.0 - cdf_at(dist, m))


def run_rerank(corpus_a: Sequence[CorpusAnswer], corpus_b: Sequence[CorpusAnswer],
               dists_a: Mapping[str, DurationDistribution], dists_b: Mapping[str, DurationDistribution],
               query_date) -> list[Decision]:
    """Re-rank per question id; ``used_updated`` marks picks from the newer corpus."""
    by_id = {c.id: c for c in corpus_b}
    out = []
    for a in corpus_a:
        if a.id not in by_id:
            raise ValidationError(f"second corpus has no answer for {a.id!r}", rule="id-mismatch")
        b = by_id[a.id]
        for name, d in (("a", dists_a), ("b", dists_b)):
            if a.id not in d:
                raise ValidationError(f"no duration distribution for {a.id!r} (corpus {name})",
                                      rule="id-mismatch")
        da, db = dists_a[a.id], dists_b[a.id]
        ca = CorpusAnswer(a.id, a.answer, a.confidence, a.corpus_date, "a", a.gold_at_query)
        cb = CorpusAnswer(b.id, b.answer, b.confidence, b.corpus_date, "b", b.gold_at_query)
        pick = two_corpus_rerank([ca, cb], {"a": da, "b": db}, query_date)
        newer = cb if cb.corpus_date.date >= ca.corpus_date.date else ca
        gold = a.gold_at_query or b.gold_at_query
        out.append(Decision(a.id, pick.answer, pick is newer, gold,
                            {"score_a": adjusted_score(ca, da, query_date),
                             "score_b": adjusted_score(cb, db, query_date), "picked": pick.corpus}))
    return out


def ensemble_report(decisions: Sequence[Decision]) -> tuple[float, float]:
    """``(EM %, % of examples routed to the updated path)``."""
    if not decisions:
        raise ContractError("no decisions to report")
    em = sum(exact_match(d.answer, d.gold_at_query) for d in decisions)
    used = sum(d.used_updated for d in decisions)
    n = len(decisions)
    return 100.0 * em / n, 100.0 * used / n
