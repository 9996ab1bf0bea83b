"""Seeded synthetic corpora with planted ground truth.

Used by the acceptance suite and the experiment scripts; nothing here depends on
real datasets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .calibration import QAPrediction
from .core import (
    YEAR_SECONDS,
    Duration,
    DurationDistribution,
    DurationTaxonomy,
    FactRecord,
    default_taxonomy,
)

_MAYOR_FIRST = ["aldo", "bruno", "carlo", "dario", "enzo", "fabio", "gino", "ivo", "lino", "marco"]
_MAYOR_LAST = ["rossi", "bianchi", "ferrari", "russo", "romano", "gallo", "conti", "greco",
               "bruno", "costa"]
_MAYOR_CITY = ["verona", "padua", "parma", "modena", "lucca", "pisa", "siena", "trento", "udine",
               "como", "genoa", "turin"]
_SENATOR_FIRST = ["hank", "jed", "kurt", "lyle", "ned", "otis", "pete", "quinn", "rex", "seth"]
_SENATOR_LAST = ["walsh", "doyle", "boyd", "hayes", "kemp", "lowe", "nash", "pratt", "reid", "shaw"]
_SENATOR_STATE = ["ohio", "idaho", "utah", "iowa", "maine", "texas", "nevada", "oregon", "kansas",
                  "vermont", "alaska", "hawaii"]

MAYOR_DURATION = Duration(5 * YEAR_SECONDS)
SENATOR_DURATION = Duration(6 * 30 * 86_400)


def planted_corpus(n_per_class: int, seed: int = 0, split: str = "train",
                   prefix: str = "p") -> list[FactRecord]:
    """Two token-disjoint fact families: mayors last 5 years, interim senators 6 months."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n_per_class):
        name = f"{_MAYOR_FIRST[rng.integers(10)]} {_MAYOR_LAST[rng.integers(10)]}"
        city = _MAYOR_CITY[rng.integers(len(_MAYOR_CITY))]
        out.append(FactRecord(f"{prefix}-m{i}", f"{name} is the mayor of {city}", split,
                              gold_duration=MAYOR_DURATION))
        name = f"{_SENATOR_FIRST[rng.integers(10)]} {_SENATOR_LAST[rng.integers(10)]}"
        state = _SENATOR_STATE[rng.integers(len(_SENATOR_STATE))]
        out.append(FactRecord(f"{prefix}-s{i}", f"interim senator {name} represents {state}", split,
                              gold_duration=SENATOR_DURATION))
    order = rng.permutation(len(out))
    return [out[i] for i in order]


SHORT_CLASSES = ("1 month", "6 months", "1 year", "2 years")
LONG_CLASSES = ("5 years", "1 decade", "5 decades", "1 century")
MISALIGNMENT_YEARS = 3


@dataclass(frozen=True)
class MisalignedExample:
    prediction: QAPrediction
    true_class: str
    open_answer: str


def misalignment_fixture(n: int = 400, changed_fraction: float = 0.5, seed: int = 0,
                         conf_low: float = 0.35, conf_high: float = 0.95) -> list[MisalignedExample]:
    """QA predictions from a model trained three years before the query date.

    Changed facts get a planted duration shorter than three years, unchanged facts
    a longer one. Confidences are calibrated against the training-date answers
    (an answer is right with probability equal to its confidence), so every
    changed answer becomes wrong at query time while keeping its confidence.
    """
    rng = np.random.default_rng(seed)
    n_changed = int(round(n * changed_fraction))
    changed_flags = np.zeros(n, dtype=bool)
    changed_flags[rng.permutation(n)[:n_changed]] = True
    out = []
    for i in range(n):
        changed = bool(changed_flags[i])
        pool = SHORT_CLASSES if changed else LONG_CLASSES
        true_class = pool[int(rng.integers(len(pool)))]
        conf = round(float(rng.uniform(conf_low, conf_high)), 4)
        right_then = bool(rng.random() < conf)
        old, new = f"answer {i} old", f"answer {i} new"
        gold_query = new if changed else old
        pred = QAPrediction(
            id=f"q{i:04d}",
            answer=old if right_then else f"wrong {i}",
            confidence=conf,
            gold_at_training=(old,),
            gold_at_query=(gold_query,),
            changed=changed,
        )
        out.append(MisalignedExample(pred, true_class, gold_query if changed else f"stale {i}"))
    return out


def perfect_distributions(examples, tax: DurationTaxonomy | None = None) -> dict[str, DurationDistribution]:
    """Point masses on the planted durations."""
    tax = tax or default_taxonomy()
    return {e.prediction.id: DurationDistribution.point_mass(tax, tax.index(e.true_class))
            for e in examples}


def hybrid_fixture(n: int = 200, changed_fraction: float = 0.4, seed: int = 0):
    """Closed-book answers are right exactly on unchanged facts, open-book exactly on changed ones."""
    examples = misalignment_fixture(n, changed_fraction, seed)
    closed, open_ = [], []
    for e in examples:
        p = e.prediction
        gold_old = p.gold_at_training[0]
        closed.append(QAPrediction(p.id, gold_old, p.confidence, p.gold_at_training,
                                   p.gold_at_query, p.changed))
        open_answer = p.gold_at_query[0] if p.changed else f"stale {p.id}"
        open_.append(QAPrediction(p.id, open_answer, p.confidence, p.gold_at_training,
                                  p.gold_at_query, p.changed))
    return examples, closed, open_
