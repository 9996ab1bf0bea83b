"""Run configuration: defaults, JSON config files, CLI overrides and the reproducibility digest."""

from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .core import (
    DEFAULT_CLASS_LABELS,
    UNIT_SECONDS,
    DurationTaxonomy,
    Misalignment,
    canonical_unit,
)
from .errors import ValidationError

CONFIG_ENV = "CHRONOCAL_CONFIG"


@dataclass
class RunConfig:
    taxonomy: list = field(default_factory=lambda: list(DEFAULT_CLASS_LABELS))
    seed: int = 0
    epochs: int = 10
    learning_rate: float | None = None
    decay: float = 1.0
    dim: int = 2 ** 18
    model_kind: str = "classifier"
    average_mode: str = "log"
    strategy: str = "cdf"
    mode: str = "survival"
    uniform_match: str = "cdf"
    training_date: str | None = None
    query_date: str | None = None
    misalignment: str | None = None
    rc_target: float = 55.0
    mctaco_grid: list = field(default_factory=lambda: [0.0, 10.0, 0.05])
    p_star: float = 0.5
    strict: bool = True
    inputs: dict = field(default_factory=dict)

    def tax(self) -> DurationTaxonomy:
        try:
            return DurationTaxonomy.from_spec(self.taxonomy)
        except (ValueError, KeyError, TypeError) as exc:
            raise ValidationError(f"bad taxonomy: {exc}", rule="taxonomy") from None

    def resolve_misalignment(self) -> Misalignment | None:
        """Dates win over an explicit span."""
        if self.training_date is not None or self.query_date is not None:
            if self.training_date is None or self.query_date is None:
                raise ValidationError("both training_date and query_date are needed",
                                      rule="misalignment")
            try:
                return Misalignment.between(self.training_date, self.query_date)
            except ValueError as exc:
                raise ValidationError(str(exc), rule="misalignment") from None
        if self.misalignment is not None:
            return parse_misalignment(self.misalignment)
        return None

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


_SPAN = re.compile(r"^\s*([0-9]*\.?[0-9]+)\s*([a-z]+)?\s*$")


def parse_misalignment(text: str) -> Misalignment:
    """``"3 years"``, ``"18 months"``, ``"0"``; a bare number is read as years."""
    m = _SPAN.match(str(text).lower())
    if not m:
        raise ValidationError(f"cannot parse misalignment {text!r}", rule="misalignment")
    value = float(m.group(1))
    unit = canonical_unit(m.group(2)) if m.group(2) else "year"
    if unit is None:
        raise ValidationError(f"unknown unit in misalignment {text!r}", rule="misalignment")
    return Misalignment(value * UNIT_SECONDS[unit])


def load_config(path: str | os.PathLike | None = None) -> RunConfig:
    """Defaults, updated from ``path`` or the file named by ``$CHRONOCAL_CONFIG``."""
    path = path or os.environ.get(CONFIG_ENV)
    cfg = RunConfig()
    if not path:
        return cfg
    p = Path(path)
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ValidationError("config file not found", source=str(p), rule="config") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"invalid JSON: {exc.msg}", source=str(p), rule="config") from None
    if not isinstance(raw, dict):
        raise ValidationError("config must be a JSON object", source=str(p), rule="config")
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ValidationError(f"unknown config keys {unknown}", source=str(p), rule="config")
    for k, v in raw.items():
        setattr(cfg, k, v)
    return cfg
