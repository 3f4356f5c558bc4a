"""Atomic-proposition formulas, path properties and DFAs.

Property text forms::

    P[ A U<=T B ]    bounded until
    P[ A U B ]       unbounded until
    P[ G<=T A ]      bounded safety
    P[ G A ]         unbounded safety
    P[ DFA file ]    reach an accepting DFA state (JSON file)

``A`` and ``B`` are boolean formulas over proposition names with ``!``,
``&``, ``|``, ``true``, ``false`` and parentheses.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Union

from .errors import AlphabetMismatch, ParseError, ValidationError

_TOKEN = re.compile(r"\s*(?:(?P<bound>U<=|G<=)|(?P<num>\d+)|(?P<name>[A-Za-z_][A-Za-z0-9_\-]*)"
                    r"|(?P<op>[!&|()\[\]]))")
_KEYWORDS = {"U", "G", "P", "DFA", "true", "false"}


@dataclass(frozen=True)
class Formula:
    """Boolean formula over atomic propositions."""

    op: str  # "true", "false", "ap", "not", "and", "or"
    args: tuple["Formula", ...] = ()
    name: str = ""

    def holds(self, label: Iterable[str]) -> bool:
        label = label if isinstance(label, (set, frozenset)) else frozenset(label)
        if self.op == "true":
            return True
        if self.op == "false":
            return False
        if self.op == "ap":
            return self.name in label
        if self.op == "not":
            return not self.args[0].holds(label)
        if self.op == "and":
            return all(a.holds(label) for a in self.args)
        return any(a.holds(label) for a in self.args)

    def aps(self) -> set[str]:
        if self.op == "ap":
            return {self.name}
        out: set[str] = set()
        for a in self.args:
            out |= a.aps()
        return out

    def __str__(self) -> str:
        if self.op in ("true", "false"):
            return self.op
        if self.op == "ap":
            return self.name
        if self.op == "not":
            return f"!{self.args[0]}"
        sep = " & " if self.op == "and" else " | "
        return "(" + sep.join(str(a) for a in self.args) + ")"


TRUE = Formula("true")


def ap(name: str) -> Formula:
    return Formula("ap", name=name)


@dataclass(frozen=True)
class Dfa:
    """Deterministic automaton read over state labels.

    ``transitions`` lists ``(source, guard, target)``; exactly one guard of the
    current state must hold for each label that actually occurs.
    """

    states: tuple[str, ...]
    initial: str
    accepting: frozenset[str]
    transitions: tuple[tuple[str, Formula, str], ...]

    def __post_init__(self):
        known = set(self.states)
        if self.initial not in known:
            raise ValidationError(f"unknown initial state {self.initial!r}", key="initial")
        for s in self.accepting:
            if s not in known:
                raise ValidationError(f"unknown accepting state {s!r}", key="accepting")
        for src, _, dst in self.transitions:
            if src not in known or dst not in known:
                raise ValidationError(f"transition {src!r} -> {dst!r} uses an unknown state",
                                      key="transitions")

    def step(self, state: str, label: Iterable[str]) -> str:
        label = frozenset(label)
        hits = [dst for src, g, dst in self.transitions if src == state and g.holds(label)]
        if len(hits) != 1:
            what = "no" if not hits else "more than one"
            raise AlphabetMismatch(
                f"{what} transition from DFA state {state!r} on label {sorted(label)}")
        return hits[0]

    @classmethod
    def from_dict(cls, doc: dict) -> Dfa:
        try:
            states = tuple(str(s) for s in doc["states"])
            initial = str(doc["initial"])
            accepting = frozenset(str(s) for s in doc["accepting"])
            trans = tuple((str(t["from"]), parse_formula(str(t["guard"])), str(t["to"]))
                          for t in doc["transitions"])
        except KeyError as exc:
            raise ValidationError("missing field", key=str(exc.args[0])) from None
        return cls(states, initial, accepting, trans)

    @classmethod
    def load(cls, path) -> Dfa:
        text = Path(path).read_text(encoding="utf-8")
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid DFA JSON: {exc.msg}", exc.lineno, exc.colno) from None
        return cls.from_dict(doc)


@dataclass(frozen=True)
class BoundedUntil:
    left: Formula
    right: Formula
    horizon: int


@dataclass(frozen=True)
class Until:
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Safety:
    safe: Formula
    horizon: int | None = None


@dataclass(frozen=True)
class DfaSpec:
    dfa: Dfa


Property = Union[BoundedUntil, Until, Safety, DfaSpec]


class _Tokens:
    def __init__(self, text: str):
        self.text = text
        self.items: list[tuple[str, str, int]] = []
        pos = 0
        while pos < len(text):
            if text[pos:].strip() == "":
                break
            m = _TOKEN.match(text, pos)
            if not m or m.end() == pos:
                col = pos + 1 + (len(text[pos:]) - len(text[pos:].lstrip()))
                raise ParseError(f"unexpected character {text[col - 1]!r}", column=col)
            kind = m.lastgroup
            start = m.start(kind) + 1
            self.items.append((kind, m.group(kind), start))
            pos = m.end()
        self.i = 0

    def peek(self):
        return self.items[self.i] if self.i < len(self.items) else ("end", "", len(self.text) + 1)

    def take(self):
        tok = self.peek()
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, val, col = self.take()
        if val != value:
            found = val if kind != "end" else "end of input"
            raise ParseError(f"expected {value!r}, found {found!r}", column=col)


def _parse_or(tk: _Tokens) -> Formula:
    parts = [_parse_and(tk)]
    while tk.peek()[1] == "|":
        tk.take()
        parts.append(_parse_and(tk))
    return parts[0] if len(parts) == 1 else Formula("or", tuple(parts))


def _parse_and(tk: _Tokens) -> Formula:
    parts = [_parse_not(tk)]
    while tk.peek()[1] == "&":
        tk.take()
        parts.append(_parse_not(tk))
    return parts[0] if len(parts) == 1 else Formula("and", tuple(parts))


def _parse_not(tk: _Tokens) -> Formula:
    if tk.peek()[1] == "!":
        tk.take()
        return Formula("not", (_parse_not(tk),))
    kind, val, col = tk.take()
    if val == "(":
        inner = _parse_or(tk)
        tk.expect(")")
        return inner
    if kind == "name" and val in ("true", "false"):
        return Formula(val)
    if kind == "name" and val not in _KEYWORDS:
        return ap(val)
    found = val if kind != "end" else "end of input"
    raise ParseError(f"expected proposition, found {found!r}", column=col)


def parse_formula(text: str) -> Formula:
    tk = _Tokens(text)
    f = _parse_or(tk)
    kind, val, col = tk.peek()
    if kind != "end":
        raise ParseError(f"unexpected {val!r}", column=col)
    return f


def parse_property(text: str, base_dir=None) -> Property:
    """Parse property text; DFA file paths resolve against ``base_dir``."""
    s = text.strip()
    m = re.fullmatch(r"P\s*\[\s*DFA\s+(.+?)\s*\]", s)
    if m:
        path = Path(m.group(1))
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        return DfaSpec(Dfa.load(path))
    tk = _Tokens(s)
    tk.expect("P")
    tk.expect("[")
    kind, val, col = tk.peek()
    if val in ("G", "G<="):
        tk.take()
        horizon = _horizon(tk) if val == "G<=" else None
        safe = _parse_or(tk)
        out: Property = Safety(safe, horizon)
    else:
        left = _parse_or(tk)
        kind, val, col = tk.take()
        if val not in ("U", "U<="):
            raise ParseError(f"expected 'U' or 'U<=', found {val or 'end of input'!r}", column=col)
        horizon = _horizon(tk) if val == "U<=" else None
        right = _parse_or(tk)
        out = Until(left, right) if horizon is None else BoundedUntil(left, right, horizon)
    tk.expect("]")
    kind, val, col = tk.peek()
    if kind != "end":
        raise ParseError(f"trailing input {val!r}", column=col)
    return out


def _horizon(tk: _Tokens) -> int:
    kind, val, col = tk.take()
    if kind != "num":
        raise ParseError("expected a nonnegative integer horizon", column=col)
    return int(val)


def property_aps(prop: Property) -> set[str]:
    if isinstance(prop, (BoundedUntil, Until)):
        return prop.left.aps() | prop.right.aps()
    if isinstance(prop, Safety):
        return prop.safe.aps()
    return set().union(*(g.aps() for _, g, _ in prop.dfa.transitions))


def check_aps(prop: Property, alphabet: Iterable[str]) -> None:
    unknown = property_aps(prop) - set(alphabet)
    if unknown:
        raise ValidationError(f"unknown propositions {sorted(unknown)}", key="property")
