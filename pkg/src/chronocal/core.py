"""Domain types and elementary duration arithmetic.

All durations are stored as a count of seconds. Calendar units use fixed
constants (30-day months, 365-day years) so every metric is reproducible.
"""

from __future__ import annotations

import datetime as dt
import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence, Union

from .errors import ValidationError

SECOND = 1
MINUTE = 60
HOUR = 3_600
DAY = 86_400
WEEK = 7 * DAY
MONTH = 30 * DAY
YEAR_SECONDS = 365 * DAY
DECADE = 10 * YEAR_SECONDS
CENTURY = 100 * YEAR_SECONDS

UNIT_SECONDS = {
    "second": SECOND,
    "minute": MINUTE,
    "hour": HOUR,
    "day": DAY,
    "week": WEEK,
    "month": MONTH,
    "year": YEAR_SECONDS,
    "decade": DECADE,
    "century": CENTURY,
}

_UNIT_ALIASES = {
    "sec": "second", "secs": "second", "s": "second", "seconds": "second",
    "min": "minute", "mins": "minute", "minutes": "minute",
    "hr": "hour", "hrs": "hour", "h": "hour", "hours": "hour",
    "days": "day", "d": "day",
    "weeks": "week", "wk": "week", "wks": "week", "w": "week",
    "months": "month", "mo": "month", "mos": "month",
    "years": "year", "yr": "year", "yrs": "year", "y": "year",
    "decades": "decade",
    "centuries": "century",
}

_NUMBER_WORDS = {
    "a": 1, "an": 1, "one": 1, "two": 2, "three": 3, "four": 4, "five": 5, "six": 6,
    "seven": 7, "eight": 8, "nine": 9, "ten": 10, "eleven": 11, "twelve": 12,
    "fifteen": 15, "twenty": 20, "thirty": 30, "forty": 40, "fifty": 50,
    "sixty": 60, "hundred": 100, "several": 3, "few": 3, "a few": 3,
}


def canonical_unit(token: str) -> str | None:
    token = token.lower().strip(".")
    if token in UNIT_SECONDS:
        return token
    return _UNIT_ALIASES.get(token)


@dataclass(frozen=True, order=True)
class Duration:
    """A positive time span. Values below one second are clamped up to one second."""

    seconds: float

    def __post_init__(self):
        s = float(self.seconds)
        if not math.isfinite(s):
            raise ValueError(f"duration must be finite, got {self.seconds!r}")
        object.__setattr__(self, "seconds", max(s, 1.0))

    @classmethod
    def of(cls, value: float, unit: str) -> "Duration":
        name = canonical_unit(unit)
        if name is None:
            raise ValueError(f"unknown duration unit {unit!r}")
        return cls(value * UNIT_SECONDS[name])

    @classmethod
    def from_log_seconds(cls, log_seconds: float) -> "Duration":
        return cls(math.exp(log_seconds))

    @classmethod
    def from_years(cls, years: float) -> "Duration":
        return cls(years * YEAR_SECONDS)

    @property
    def log_seconds(self) -> float:
        return math.log(self.seconds)

    @property
    def years(self) -> float:
        return self.seconds / YEAR_SECONDS

    def __str__(self) -> str:
        for unit in ("century", "decade", "year", "month", "week", "day", "hour", "minute"):
            q = self.seconds / UNIT_SECONDS[unit]
            if q >= 1:
                return f"{q:g} {unit}{'' if q == 1 else 's'}"
        return f"{self.seconds:g} seconds"


_DURATION_TEXT = re.compile(r"^\s*(?P<num>[0-9]*\.?[0-9]+|[a-z]+(?: few)?)\s+(?P<unit>[a-z]+)\s*$")


def parse_duration_text(text: str) -> Duration:
    """Parse phrases such as ``"6 months"``, ``"a decade"`` or ``"1.5 hours"``."""
    m = _DURATION_TEXT.match(text.lower())
    if not m:
        raise ValueError(f"cannot parse duration {text!r}")
    num, unit = m.group("num"), m.group("unit")
    if num in _NUMBER_WORDS:
        value = float(_NUMBER_WORDS[num])
    else:
        try:
            value = float(num)
        except ValueError:
            raise ValueError(f"cannot parse duration {text!r}") from None
    return Duration.of(value, unit)


def to_log_seconds(d: Duration) -> float:
    return math.log(d.seconds)


# --------------------------------------------------------------------------- dates

_DATE_RE = re.compile(r"^(?P<y>-?\d{1,4})(?:-(?P<m>\d{1,2})(?:-(?P<d>\d{1,2}))?)?$")
_GRANULARITY_RANK = {"year": 0, "month": 1, "day": 2}


@dataclass(frozen=True)
class CalendarDate:
    """A date known to year, month or day precision.

    Missing components resolve to the first month / first day.
    """

    year: int
    month: int | None = None
    day: int | None = None

    def __post_init__(self):
        if self.day is not None and self.month is None:
            raise ValueError("day given without month")
        # raises on impossible dates
        dt.date(self.year, self.month or 1, self.day or 1)

    @classmethod
    def parse(cls, value: "str | int | CalendarDate | dt.date") -> "CalendarDate":
        if isinstance(value, CalendarDate):
            return value
        if isinstance(value, dt.date):
            return cls(value.year, value.month, value.day)
        if isinstance(value, int) and not isinstance(value, bool):
            return cls(value)
        if not isinstance(value, str):
            raise ValueError(f"unsupported date value {value!r}")
        m = _DATE_RE.match(value.strip())
        if not m:
            raise ValueError(f"date {value!r} is not YYYY, YYYY-MM or YYYY-MM-DD")
        month = int(m.group("m")) if m.group("m") else None
        day = int(m.group("d")) if m.group("d") else None
        return cls(int(m.group("y")), month, day)

    @property
    def granularity(self) -> str:
        if self.day is not None:
            return "day"
        if self.month is not None:
            return "month"
        return "year"

    @property
    def date(self) -> dt.date:
        return dt.date(self.year, self.month or 1, self.day or 1)

    def isoformat(self) -> str:
        if self.granularity == "year":
            return f"{self.year:04d}"
        if self.granularity == "month":
            return f"{self.year:04d}-{self.month:02d}"
        return f"{self.year:04d}-{self.month:02d}-{self.day:02d}"

    def __str__(self) -> str:
        return self.isoformat()


def coarser_granularity(a: CalendarDate, b: CalendarDate) -> str:
    return min(a.granularity, b.granularity, key=_GRANULARITY_RANK.__getitem__)


def date_span_seconds(start: CalendarDate, end: CalendarDate) -> float:
    """Signed span from ``start`` to ``end`` at the coarser of the two granularities.

    Year precision counts whole 365-day years; month precision counts whole years
    plus 30-day months; day precision counts calendar days.
    """
    gran = coarser_granularity(start, end)
    if gran == "year":
        return float((end.year - start.year) * YEAR_SECONDS)
    if gran == "month":
        months = (end.year * 12 + (end.month or 1)) - (start.year * 12 + (start.month or 1))
        sign = -1 if months < 0 else 1
        years, rest = divmod(abs(months), 12)
        return float(sign * (years * YEAR_SECONDS + rest * MONTH))
    return float((end.date - start.date).days * DAY)


# ---------------------------------------------------------------- taxonomy and distributions

DEFAULT_CLASS_LABELS = (
    "1 second", "1 minute", "1 hour", "1 day", "1 week", "1 month", "6 months",
    "1 year", "2 years", "5 years", "1 decade", "5 decades", "1 century",
)

# ties in log distance are resolved toward the smaller class
_TIE_EPS = 1e-12


@dataclass(frozen=True)
class DurationTaxonomy:
    classes: tuple[tuple[str, Duration], ...]

    def __post_init__(self):
        classes = tuple((str(label), d if isinstance(d, Duration) else Duration(d))
                        for label, d in self.classes)
        object.__setattr__(self, "classes", classes)
        if not classes:
            raise ValueError("taxonomy needs at least one class")
        labels = [c[0] for c in classes]
        if len(set(labels)) != len(labels):
            raise ValueError("taxonomy labels must be unique")
        secs = [c[1].seconds for c in classes]
        if any(b <= a for a, b in zip(secs, secs[1:])):
            raise ValueError("taxonomy durations must be strictly increasing")

    @classmethod
    def from_labels(cls, labels: Iterable[str]) -> "DurationTaxonomy":
        return cls(tuple((label, parse_duration_text(label)) for label in labels))

    @classmethod
    def from_spec(cls, spec: Sequence) -> "DurationTaxonomy":
        """Build from a config list of labels or ``{"label", "seconds"}`` objects."""
        classes = []
        for item in spec:
            if isinstance(item, str):
                classes.append((item, parse_duration_text(item)))
            elif isinstance(item, Mapping):
                seconds = item.get("seconds")
                duration = Duration(seconds) if seconds is not None else parse_duration_text(item["label"])
                classes.append((item["label"], duration))
            else:
                label, seconds = item
                classes.append((label, Duration(seconds)))
        return cls(tuple(classes))

    def to_spec(self) -> list[dict]:
        return [{"label": label, "seconds": d.seconds} for label, d in self.classes]

    def __len__(self) -> int:
        return len(self.classes)

    @cached_property
    def labels(self) -> tuple[str, ...]:
        return tuple(c[0] for c in self.classes)

    @cached_property
    def seconds(self) -> tuple[float, ...]:
        return tuple(c[1].seconds for c in self.classes)

    @cached_property
    def log_seconds(self) -> tuple[float, ...]:
        return tuple(math.log(s) for s in self.seconds)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"unknown duration class {label!r}") from None

    def canonical(self, index: int) -> Duration:
        return self.classes[index][1]


def default_taxonomy() -> DurationTaxonomy:
    return DurationTaxonomy.from_labels(DEFAULT_CLASS_LABELS)


@dataclass(frozen=True)
class DurationDistribution:
    taxonomy: DurationTaxonomy
    probs: tuple[float, ...]

    def __post_init__(self):
        probs = tuple(float(p) for p in self.probs)
        object.__setattr__(self, "probs", probs)
        if len(probs) != len(self.taxonomy):
            raise ValueError(f"expected {len(self.taxonomy)} probabilities, got {len(probs)}")
        if any(not math.isfinite(p) or p < 0 for p in probs):
            raise ValueError("probabilities must be finite and non-negative")
        total = math.fsum(probs)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {total!r}, not 1")

    @classmethod
    def point_mass(cls, taxonomy: DurationTaxonomy, index: int) -> "DurationDistribution":
        probs = [0.0] * len(taxonomy)
        probs[index] = 1.0
        return cls(taxonomy, tuple(probs))

    @classmethod
    def from_mapping(cls, taxonomy: DurationTaxonomy, mass: Mapping[str, float]) -> "DurationDistribution":
        probs = [0.0] * len(taxonomy)
        for label, p in mass.items():
            probs[taxonomy.index(label)] += float(p)
        return cls(taxonomy, tuple(probs))

    @classmethod
    def uniform(cls, taxonomy: DurationTaxonomy) -> "DurationDistribution":
        k = len(taxonomy)
        return cls(taxonomy, tuple([1.0 / k] * k))

    def as_mapping(self) -> dict[str, float]:
        return dict(zip(self.taxonomy.labels, self.probs))


MisalignmentLike = Union["Misalignment", Duration, float, int]


@dataclass(frozen=True)
class Misalignment:
    """Elapsed time between a model's training date and a query date.

    ``seconds`` keeps the exact gap, which may be zero; ``amount`` is the gap as a
    :class:`Duration` (floored at one second).
    """

    seconds: float
    training_date: CalendarDate | None = None
    query_date: CalendarDate | None = None

    def __post_init__(self):
        if not math.isfinite(self.seconds) or self.seconds < 0:
            raise ValueError(f"misalignment must be a finite non-negative span, got {self.seconds!r}")

    @classmethod
    def between(cls, training_date, query_date) -> "Misalignment":
        t_m = CalendarDate.parse(training_date)
        t_q = CalendarDate.parse(query_date)
        span = date_span_seconds(t_m, t_q)
        if span < 0:
            raise ValueError(f"query date {t_q} precedes training date {t_m}")
        return cls(span, t_m, t_q)

    @classmethod
    def of(cls, d: Duration) -> "Misalignment":
        return cls(d.seconds)

    @property
    def amount(self) -> Duration:
        return Duration(self.seconds)


def misalignment_seconds(m: MisalignmentLike) -> float:
    if isinstance(m, Misalignment):
        return m.seconds
    if isinstance(m, Duration):
        return m.seconds
    value = float(m)
    if not math.isfinite(value) or value < 0:
        raise ValueError(f"misalignment must be a finite non-negative span, got {m!r}")
    return value


# ------------------------------------------------------------------------ fact records

@dataclass(frozen=True)
class TimelineEntry:
    answer: str
    start: CalendarDate
    end: CalendarDate | None = None


@dataclass(frozen=True)
class AnswerTimeline:
    entries: tuple[TimelineEntry, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))


SPLITS = ("train", "dev", "test")


@dataclass(frozen=True)
class FactRecord:
    id: str
    statement: str
    split: str = "test"
    question: str | None = None
    answer: str | None = None
    gold_duration: Duration | None = None
    timeline: AnswerTimeline | None = None
    template_converted: bool = False
    extra: Mapping = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if not self.id:
            raise ValidationError("record id must be non-empty", rule="id")
        if self.split not in SPLITS:
            raise ValidationError(f"split must be one of {SPLITS}, got {self.split!r}", rule="split")


# ------------------------------------------------------------------------- operations

def nearest_class(d: Duration, tax: DurationTaxonomy) -> int:
    """Index of the class closest to ``d`` in log-seconds (ties go to the smaller class)."""
    x = math.log(d.seconds)
    dists = [abs(x - c) for c in tax.log_seconds]
    best = min(dists)
    for i, v in enumerate(dists):
        if v <= best + _TIE_EPS:
            return i
    raise AssertionError("unreachable")


def cdf_at(dist: DurationDistribution, m: MisalignmentLike) -> float:
    """Probability mass on classes whose canonical duration is at most ``m``."""
    limit = misalignment_seconds(m)
    below = [p for p, s in zip(dist.probs, dist.taxonomy.seconds) if s <= limit]
    if len(below) == len(dist.probs):
        return 1.0
    if not below:
        return 0.0
    return min(1.0, math.fsum(below) / math.fsum(dist.probs))


def expectation_log_seconds(dist: DurationDistribution) -> Duration:
    """Expected duration taken in log-second space (a probability-weighted geometric mean)."""
    support = [i for i, p in enumerate(dist.probs) if p > 0]
    lo = dist.taxonomy.seconds[support[0]]
    hi = dist.taxonomy.seconds[support[-1]]
    mean_log = math.fsum(p * c for p, c in zip(dist.probs, dist.taxonomy.log_seconds))
    mean_log /= math.fsum(dist.probs)
    return Duration(min(hi, max(lo, math.exp(mean_log))))


def argmax_class(dist: DurationDistribution) -> int:
    best = max(dist.probs)
    return dist.probs.index(best)
