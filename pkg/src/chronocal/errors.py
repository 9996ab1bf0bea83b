"""Exception hierarchy.

``ValidationError`` covers bad inputs (schema, missing fields, id mismatch) and
maps to CLI exit code 1. ``ContractError`` covers violated preconditions of an
operation on otherwise well-formed data and maps to exit code 2.
"""

from __future__ import annotations


class ChronocalError(Exception):
    exit_code = 2


class ValidationError(ChronocalError, ValueError):
    exit_code = 1

    def __init__(self, message: str, *, source: str | None = None, line: int | None = None,
                 rule: str | None = None):
        self.source = source
        self.line = line
        self.rule = rule
        where = ""
        if source is not None:
            where = source if line is None else f"{source}:{line}"
        elif line is not None:
            where = f"line {line}"
        prefix = f"{where}: " if where else ""
        suffix = f" [{rule}]" if rule else ""
        super().__init__(f"{prefix}{message}{suffix}")


class ContractError(ChronocalError, ValueError):
    exit_code = 2
