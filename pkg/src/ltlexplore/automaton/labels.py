"""Boolean guards over atomic propositions.

A guard is a small immutable tree (``TRUE``, ``FALSE``, ``Atom``, ``Not``,
``And``, ``Or``).  Symbols are frozensets of AP indices that are true.

The textual syntax is the HOA label syntax (``t``, ``f``, ``!``, ``&``,
``|``, parentheses, integer AP references), extended so that AP *names* may
stand in for the integers.  Names are resolved against an AP list.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence


class LabelSyntaxError(ValueError):
    def __init__(self, message, text, pos):
        self.text = text
        self.pos = pos
        super().__init__(f"{message} at column {pos + 1} in guard {text!r}")


class LabelExpr:
    __slots__ = ()

    def evaluate(self, symbol) -> bool:
        raise NotImplementedError

    def atoms(self) -> set[int]:
        raise NotImplementedError

    def to_string(self, names: Sequence[str] | None = None) -> str:
        raise NotImplementedError


@dataclass(frozen=True)
class _Const(LabelExpr):
    value: bool

    def evaluate(self, symbol):
        return self.value

    def atoms(self):
        return set()

    def to_string(self, names=None):
        return "t" if self.value else "f"


TRUE = _Const(True)
FALSE = _Const(False)


@dataclass(frozen=True)
class Atom(LabelExpr):
    index: int

    def evaluate(self, symbol):
        return self.index in symbol

    def atoms(self):
        return {self.index}

    def to_string(self, names=None):
        return names[self.index] if names is not None else str(self.index)


@dataclass(frozen=True)
class Not(LabelExpr):
    arg: LabelExpr

    def evaluate(self, symbol):
        return not self.arg.evaluate(symbol)

    def atoms(self):
        return self.arg.atoms()

    def to_string(self, names=None):
        inner = self.arg.to_string(names)
        if isinstance(self.arg, (And, Or)):
            inner = f"({inner})"
        return "!" + inner


@dataclass(frozen=True)
class And(LabelExpr):
    args: tuple

    def evaluate(self, symbol):
        return all(a.evaluate(symbol) for a in self.args)

    def atoms(self):
        return set().union(*(a.atoms() for a in self.args))

    def to_string(self, names=None):
        parts = []
        for a in self.args:
            s = a.to_string(names)
            parts.append(f"({s})" if isinstance(a, Or) else s)
        return " & ".join(parts)


@dataclass(frozen=True)
class Or(LabelExpr):
    args: tuple

    def evaluate(self, symbol):
        return any(a.evaluate(symbol) for a in self.args)

    def atoms(self):
        return set().union(*(a.atoms() for a in self.args))

    def to_string(self, names=None):
        return " | ".join(a.to_string(names) for a in self.args)


def _tokenize(text):
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
        elif c in "!&|()":
            yield c, c, i
            i += 1
        elif c.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            yield "int", text[i:j], i
            i = j
        elif c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] in "_."):
                j += 1
            yield "name", text[i:j], i
            i = j
        elif c == '"':
            j = text.find('"', i + 1)
            if j < 0:
                raise LabelSyntaxError("unterminated string", text, i)
            yield "name", text[i + 1 : j], i
            i = j + 1
        else:
            raise LabelSyntaxError(f"unexpected character {c!r}", text, i)
    yield "end", "", n


class _Parser:
    def __init__(self, text, ap_names, num_aps):
        self.text = text
        self.tokens = list(_tokenize(text))
        self.k = 0
        self.lookup = {name: i for i, name in enumerate(ap_names or ())}
        self.num_aps = num_aps

    def peek(self):
        return self.tokens[self.k]

    def take(self, kind=None):
        tok = self.tokens[self.k]
        if kind is not None and tok[0] != kind:
            want = "end of guard" if kind == "end" else repr(kind)
            raise LabelSyntaxError(f"expected {want}, found {tok[1]!r}", self.text, tok[2])
        self.k += 1
        return tok

    def parse(self):
        expr = self.disjunction()
        self.take("end")
        return expr

    def disjunction(self):
        args = [self.conjunction()]
        while self.peek()[0] == "|":
            self.take()
            args.append(self.conjunction())
        return args[0] if len(args) == 1 else Or(tuple(args))

    def conjunction(self):
        args = [self.negation()]
        while self.peek()[0] == "&":
            self.take()
            args.append(self.negation())
        return args[0] if len(args) == 1 else And(tuple(args))

    def negation(self):
        if self.peek()[0] == "!":
            self.take()
            return Not(self.negation())
        return self.primary()

    def primary(self):
        kind, value, pos = self.take()
        if kind == "(":
            expr = self.disjunction()
            self.take(")")
            return expr
        if kind == "int":
            index = int(value)
            if self.num_aps is not None and index >= self.num_aps:
                raise LabelSyntaxError(f"AP index {index} out of range", self.text, pos)
            return Atom(index)
        if kind == "name":
            if value == "t" or value == "true":
                return TRUE
            if value == "f" or value == "false":
                return FALSE
            if value not in self.lookup:
                raise LabelSyntaxError(f"unknown atomic proposition {value!r}", self.text, pos)
            return Atom(self.lookup[value])
        raise LabelSyntaxError(f"unexpected token {value!r}", self.text, pos)


def parse_label(text: str, ap_names: Sequence[str] | None = None, num_aps: int | None = None) -> LabelExpr:
    """Parse a guard; ``ap_names`` enables name references."""
    if num_aps is None and ap_names is not None:
        num_aps = len(ap_names)
    return _Parser(text, ap_names, num_aps).parse()


def symbol_from_names(names: Iterable[str], ap_names: Sequence[str]) -> frozenset:
    """Map AP names to a symbol; names unknown to the automaton are dropped."""
    lookup = {name: i for i, name in enumerate(ap_names)}
    return frozenset(lookup[n] for n in names if n in lookup)
