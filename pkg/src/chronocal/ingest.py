"""Reading fact / MC-TACO record files, gold-duration derivation, cloze export, stats."""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .core import (
    MONTH,
    AnswerTimeline,
    CalendarDate,
    Duration,
    DurationTaxonomy,
    FactRecord,
    TimelineEntry,
    date_span_seconds,
    nearest_class,
)
from .errors import ValidationError

log = logging.getLogger(__name__)

MASK = "[MASK]"
CLOZE_SUFFIX = ", lasting [MASK] [MASK] ."
META_KEY = "_meta"


@dataclass(frozen=True)
class Diagnostic:
    line: int
    rule: str
    message: str
    record_id: str | None = None

    def __str__(self) -> str:
        rid = f" (id={self.record_id})" if self.record_id else ""
        return f"line {self.line}{rid}: {self.message} [{self.rule}]"


class EmptyAnswerError(ValidationError):
    pass


def iter_json_lines(lines: Iterable[str], source: str = "<input>"):
    """Yield ``(line_number, object)`` for every non-blank line, skipping metadata headers."""
    for lineno, raw in enumerate(lines, start=1):
        text = raw.strip()
        if not text:
            continue
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"invalid JSON: {exc.msg}", source=source, line=lineno,
                                  rule="json") from None
        if not isinstance(obj, dict):
            raise ValidationError("record must be a JSON object", source=source, line=lineno,
                                  rule="json-object")
        if META_KEY in obj:
            continue
        yield lineno, obj


# ------------------------------------------------------------------ duration derivation

def _zero_span_rule(seconds: float) -> Duration:
    # same date at annotation precision: the fact is assumed to last one month
    return Duration(MONTH) if seconds == 0 else Duration(seconds)


def derive_duration_situatedqa(previous_answer_start, current_answer_start) -> Duration:
    prev = CalendarDate.parse(previous_answer_start)
    cur = CalendarDate.parse(current_answer_start)
    span = date_span_seconds(prev, cur)
    if span < 0:
        raise ValidationError(f"current answer start {cur} precedes previous start {prev}",
                              rule="date-order")
    return _zero_span_rule(span)


def derive_duration_timeline(t: AnswerTimeline) -> list[tuple[str, Duration]]:
    """Durations for every timeline entry that has a successor or an explicit end.

    A trailing entry with neither is dropped; spans of zero length at the
    annotation precision count as one month.
    """
    entries = t.entries
    for e in entries:
        if not e.answer or not e.answer.strip():
            raise EmptyAnswerError("timeline contains an empty answer", rule="empty-answer")
    for a, b in zip(entries, entries[1:]):
        if date_span_seconds(a.start, b.start) < 0:
            raise ValidationError(f"timeline starts out of order ({a.start} then {b.start})",
                                  rule="timeline-order")
    out = []
    for i, e in enumerate(entries):
        if e.end is not None:
            span = date_span_seconds(e.start, e.end)
            if span < 0:
                raise ValidationError(f"answer {e.answer!r} ends ({e.end}) before it starts ({e.start})",
                                      rule="timeline-order")
        elif i + 1 < len(entries):
            span = date_span_seconds(e.start, entries[i + 1].start)
        else:
            continue
        out.append((e.answer, _zero_span_rule(span)))
    return out


def parse_timeline(raw) -> AnswerTimeline:
    if not isinstance(raw, list):
        raise ValueError("timeline must be a list")
    entries = []
    for item in raw:
        if not isinstance(item, Mapping) or "start" not in item or "answer" not in item:
            raise ValueError("timeline entries need 'answer' and 'start'")
        end = item.get("end")
        entries.append(TimelineEntry(
            answer=str(item["answer"]),
            start=CalendarDate.parse(item["start"]),
            end=CalendarDate.parse(end) if end is not None else None,
        ))
    return AnswerTimeline(tuple(entries))


def gold_from_timeline(timeline: AnswerTimeline, answer: str | None) -> Duration | None:
    spans = derive_duration_timeline(timeline)
    if not spans:
        return None
    if answer is not None:
        for a, d in spans:
            if a == answer:
                return d
    return spans[0][1]


# ---------------------------------------------------------------- statement templates

_COPULA_Q = re.compile(r"^(?:who|what|which)\s+(is|are|was|were)\s+(.+)$", re.I)
_TAKE_Q = re.compile(r"^how long (?:did|does|do|will|would) it take (?:for (.+?) )?to (.+)$", re.I)
_HOW_LONG_Q = re.compile(
    r"^how long (?:did|does|do|will|would|was|is|were|are|has|have|had|can|could) (.+)$", re.I)


def _strip_question(q: str) -> str:
    return q.strip().rstrip("?").strip()


def statement_from_qa(question: str, answer: str) -> str:
    """Rule-based declarative rewrite of a question/answer pair.

    ``Who is the mayor of X?`` + ``Y`` becomes ``Y is the mayor of X``; any
    other question is kept as its stem followed by the answer.
    """
    stem = _strip_question(question)
    m = _COPULA_Q.match(stem)
    if m:
        return f"{answer} {m.group(1).lower()} {m.group(2)}"
    return f"{stem} {answer}"


# --------------------------------------------------------------------------- parsing

def _duration_field(obj, key="duration_seconds") -> Duration | None:
    value = obj.get(key)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value) \
            or value <= 0:
        raise ValueError(f"{key} must be a positive number")
    return Duration(value)


_FACT_FIELDS = {"id", "statement", "question", "answer", "duration_seconds", "timeline", "split",
                "template_converted"}


def fact_from_json(obj: Mapping) -> FactRecord:
    rid = obj.get("id")
    if not isinstance(rid, str) or not rid:
        raise ValidationError("id must be a non-empty string", rule="id")
    question = obj.get("question")
    answer = obj.get("answer")
    converted = bool(obj.get("template_converted", False))
    if "statement" in obj:
        statement = obj["statement"]
        if not isinstance(statement, str) or not statement.strip():
            raise ValidationError("statement must be a non-empty string", rule="statement")
    elif question and answer:
        statement = statement_from_qa(question, answer)
        converted = True
    else:
        raise ValidationError("missing statement (and no question/answer to convert)",
                              rule="statement")
    split = obj.get("split")
    if split is None:
        raise ValidationError("missing split", rule="split")
    try:
        gold = _duration_field(obj)
    except ValueError as exc:
        raise ValidationError(str(exc), rule="duration") from None
    timeline = None
    if obj.get("timeline") is not None:
        try:
            timeline = parse_timeline(obj["timeline"])
        except ValueError as exc:
            raise ValidationError(str(exc), rule="timeline") from None
        if gold is None:
            gold = gold_from_timeline(timeline, answer)
    extra = {k: v for k, v in obj.items() if k not in _FACT_FIELDS}
    return FactRecord(id=rid, statement=statement, split=split, question=question, answer=answer,
                      gold_duration=gold, timeline=timeline, template_converted=converted,
                      extra=extra)


def fact_to_json(f: FactRecord) -> dict:
    out: dict = {"id": f.id, "statement": f.statement}
    if f.question is not None:
        out["question"] = f.question
    if f.answer is not None:
        out["answer"] = f.answer
    if f.gold_duration is not None:
        out["duration_seconds"] = f.gold_duration.seconds
    if f.timeline is not None:
        out["timeline"] = [
            {"answer": e.answer, "start": e.start.isoformat(),
             **({"end": e.end.isoformat()} if e.end is not None else {})}
            for e in f.timeline.entries
        ]
    out["split"] = f.split
    if f.template_converted:
        out["template_converted"] = True
    out.update(f.extra)
    return out


def parse_facts(lines: Iterable[str], *, strict: bool = True, source: str = "<facts>",
                diagnostics: list[Diagnostic] | None = None) -> list[FactRecord]:
    """Parse a facts file.

    In strict mode the first malformed record raises :class:`ValidationError`; in
    lenient mode it is skipped and reported through ``diagnostics``. Records whose
    timeline contains an empty answer are always dropped with a diagnostic.
    Duplicate ids abort in both modes.
    """
    records: list[FactRecord] = []
    seen: dict[str, int] = {}

    def report(lineno, rule, message, rid=None):
        diag = Diagnostic(lineno, rule, message, rid)
        log.warning("%s: %s", source, diag)
        if diagnostics is not None:
            diagnostics.append(diag)

    for lineno, obj in iter_json_lines(lines, source):
        rid = obj.get("id") if isinstance(obj.get("id"), str) else None
        try:
            rec = fact_from_json(obj)
        except EmptyAnswerError as exc:
            report(lineno, exc.rule or "empty-answer", "dropped: timeline contains an empty answer", rid)
            continue
        except ValidationError as exc:
            if strict:
                raise ValidationError(str(exc), source=source, line=lineno, rule=exc.rule) from None
            report(lineno, exc.rule or "invalid", str(exc), rid)
            continue
        if rec.id in seen:
            raise ValidationError(f"duplicate id {rec.id!r} (first seen on line {seen[rec.id]})",
                                  source=source, line=lineno, rule="duplicate-id")
        seen[rec.id] = lineno
        records.append(rec)
    return records


@dataclass(frozen=True)
class MCTacoOption:
    text: str
    duration: Duration
    label: bool


@dataclass(frozen=True)
class MCTacoRecord:
    id: str
    context: str
    question: str
    options: tuple[MCTacoOption, ...]
    statement: str | None = None
    split: str = "test"

    def __post_init__(self):
        if not self.options:
            raise ValidationError("MC-TACO record needs at least one option", rule="options")

    @property
    def gold_set(self) -> frozenset[int]:
        return frozenset(i for i, o in enumerate(self.options) if o.label)


def mctaco_from_json(obj: Mapping) -> MCTacoRecord:
    rid = obj.get("id")
    if not isinstance(rid, str) or not rid:
        raise ValidationError("id must be a non-empty string", rule="id")
    for key in ("context", "question"):
        if not isinstance(obj.get(key), str):
            raise ValidationError(f"missing {key}", rule=key)
    raw_opts = obj.get("options")
    if not isinstance(raw_opts, list) or not raw_opts:
        raise ValidationError("options must be a non-empty list", rule="options")
    options = []
    for o in raw_opts:
        try:
            d = _duration_field(o)
        except ValueError as exc:
            raise ValidationError(str(exc), rule="duration") from None
        if d is None or not isinstance(o.get("label"), bool):
            raise ValidationError("each option needs duration_seconds and a boolean label",
                                  rule="options")
        options.append(MCTacoOption(str(o.get("text", "")), d, o["label"]))
    return MCTacoRecord(rid, obj["context"], obj["question"], tuple(options),
                        statement=obj.get("statement"), split=obj.get("split", "test"))


def parse_mctaco(lines: Iterable[str], *, source: str = "<mctaco>") -> list[MCTacoRecord]:
    out, seen = [], set()
    for lineno, obj in iter_json_lines(lines, source):
        try:
            rec = mctaco_from_json(obj)
        except ValidationError as exc:
            raise ValidationError(str(exc), source=source, line=lineno, rule=exc.rule) from None
        if rec.id in seen:
            raise ValidationError(f"duplicate id {rec.id!r}", source=source, line=lineno,
                                  rule="duplicate-id")
        seen.add(rec.id)
        out.append(rec)
    return out


# ---------------------------------------------------------------------------- cloze

_NUM = r"(?:\d+(?:\.\d+)?|a few|several|a|an|one|two|three|four|five|six|seven|eight|nine|ten|" \
       r"eleven|twelve|fifteen|twenty|thirty|forty|fifty|sixty|hundred)"
_UNIT = r"(?:seconds?|minutes?|hours?|days?|weeks?|months?|years?|decades?|centur(?:y|ies))"
_DURATION_SPAN = re.compile(rf"\b{_NUM}\s+{_UNIT}\b", re.I)


def _normalize_statement(statement: str) -> str:
    s = " ".join(statement.split())
    s = re.sub(r"[\s.!?]+$", "", s)
    if not s:
        raise ValidationError("statement is empty", rule="statement")
    if MASK in s:
        raise ValidationError("statement already contains a mask token", rule="mask")
    return s


def cloze_format(f: "FactRecord | str", *, inline: bool = False) -> str:
    """Render the masked model input for a fact.

    By default the fact gets the suffix ``", lasting [MASK] [MASK] ."``. With
    ``inline=True`` the first duration phrase in the statement is replaced by the
    two masks instead (the MC-TACO / news-text form).
    """
    statement = f.statement if isinstance(f, FactRecord) else f
    if inline:
        s = " ".join(statement.split())
        if MASK in s:
            raise ValidationError("statement already contains a mask token", rule="mask")
        masked, n = _DURATION_SPAN.subn(f"{MASK} {MASK}", s, count=1)
        if n == 0:
            raise ValidationError("no duration phrase to mask", rule="mask")
        return masked
    return f"{_normalize_statement(statement)} {CLOZE_SUFFIX}"


def mctaco_masked_input(rec: MCTacoRecord) -> str:
    """Context sentence followed by the masked duration statement."""
    if rec.statement:
        body = cloze_format(rec.statement, inline=True)
    else:
        stem = _strip_question(rec.question)
        m = _TAKE_Q.match(stem)
        h = _HOW_LONG_Q.match(stem)
        if m:
            subject = m.group(1) or "it"
            body = f"{subject[0].upper()}{subject[1:]} took {MASK} {MASK} to {m.group(2)}."
        elif h:
            rest = h.group(1)
            body = f"{rest[0].upper()}{rest[1:]} for {MASK} {MASK} ."
        else:
            body = f"{stem} {MASK} {MASK} ."
    return f"{' '.join(rec.context.split())} {body}"


def masked_export(records: Iterable) -> list[dict]:
    out = []
    for r in records:
        if isinstance(r, MCTacoRecord):
            out.append({"id": r.id, "masked_input": mctaco_masked_input(r)})
        else:
            out.append({"id": r.id, "masked_input": cloze_format(r)})
    return out


# ---------------------------------------------------------------------------- stats

@dataclass(frozen=True)
class DatasetStats:
    taxonomy: DurationTaxonomy
    percentages: tuple[float, ...]
    count: int
    counts: tuple[int, ...] = field(default=())

    def as_dict(self) -> dict:
        return {
            "count": self.count,
            "classes": [
                {"label": label, "count": c, "percent": p}
                for label, c, p in zip(self.taxonomy.labels, self.counts, self.percentages)
            ],
        }


def compute_stats(records: Iterable[FactRecord], tax: DurationTaxonomy) -> DatasetStats:
    counts = [0] * len(tax)
    n = 0
    for r in records:
        if r.gold_duration is None:
            raise ValidationError(f"record {r.id!r} has no gold duration", rule="gold-duration")
        counts[nearest_class(r.gold_duration, tax)] += 1
        n += 1
    if n == 0:
        raise ValidationError("no records to summarize", rule="empty")
    return DatasetStats(tax, tuple(100.0 * c / n for c in counts), n, tuple(counts))
