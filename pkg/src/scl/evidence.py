"""Evidence citation grammar: ``path comparator literal``.

Citations ground proposals in memory so the controller can validate them
deterministically. Comparators: >=, >, <=, <, ==, exists. The short
``path=literal`` form used inside stored judgments is an alias for ``==``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Any

from .memory import MemPath, PathValidationError, StateView


class CitationSyntaxError(ValueError):
    """Citation text does not parse as `path comparator literal`."""


_EXISTS_RE = re.compile(r"^(?P<path>[^<>=\s]+)\s+exists$")
# longest operators first so ">=" wins over ">"
_OPS = (">=", "<=", "==", ">", "<", "=")


def _parse_literal(text: str) -> Any:
    text = text.strip()
    if re.fullmatch(r"-?\d+", text):
        return int(text)
    if text == "true":
        return True
    if text == "false":
        return False
    if len(text) >= 2 and text[0] == text[-1] and text[0] in ("'", '"'):
        return text[1:-1]
    return text


@dataclass(frozen=True)
class Citation:
    path: str
    op: str
    literal: Any = None

    def render(self) -> str:
        if self.op == "exists":
            return f"{self.path} exists"
        lit = self.literal
        if isinstance(lit, bool):
            lit = "true" if lit else "false"
        return f"{self.path}{self.op}{lit}"

    @classmethod
    def parse(cls, text: str) -> "Citation":
        if not isinstance(text, str) or not text.strip():
            raise CitationSyntaxError(f"empty citation: {text!r}")
        text = text.strip()
        match = _EXISTS_RE.match(text)
        if match:
            path = match.group("path")
            _validate_path(path)
            return cls(path=path, op="exists")
        for op in _OPS:
            if op in text:
                path, _, literal = text.partition(op)
                path = path.strip()
                if not path or not literal.strip():
                    raise CitationSyntaxError(f"incomplete citation: {text!r}")
                _validate_path(path)
                return cls(path=path, op="==" if op == "=" else op, literal=_parse_literal(literal))
        raise CitationSyntaxError(f"no comparator in citation: {text!r}")

    def evaluate(self, view: StateView) -> bool:
        """True iff the cited fact holds in the view; absence is False."""
        found, value = view.resolve(self.path)
        if self.op == "exists":
            return found
        if not found:
            return False
        try:
            if self.op == "==":
                return value == self.literal
            if self.op == ">=":
                return value >= self.literal
            if self.op == ">":
                return value > self.literal
            if self.op == "<=":
                return value <= self.literal
            if self.op == "<":
                return value < self.literal
        except TypeError:
            return False
        raise AssertionError(f"unreachable comparator {self.op!r}")


def _validate_path(path: str) -> None:
    try:
        MemPath.parse(path)
    except PathValidationError as exc:
        raise CitationSyntaxError(str(exc)) from exc


def parse_citations(texts: list[str] | tuple[str, ...]) -> tuple[Citation, ...]:
    return tuple(Citation.parse(text) for text in texts)
