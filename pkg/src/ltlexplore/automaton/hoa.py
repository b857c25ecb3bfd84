"""Reader for the subset of HOA v1 produced by common LTL translators.

Supported: explicit edge labels, state-based acceptance, Rabin-shaped or
generalized-Büchi acceptance.  Not supported: implicit labels, aliases,
transition-based acceptance, alternation.

HOA has no notion of location atoms, so a custom header item
``plain-aps: "obs"`` (or the ``plain_aps`` argument) lists the atoms that
may hold together with a location atom.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .core import (
    DRA,
    LDBA,
    AtomicProposition,
    AutomatonError,
    MalformedAutomatonError,
    RabinPair,
    Transition,
    make_automaton,
)
from .labels import LabelSyntaxError, parse_label


class HoaSyntaxError(AutomatonError):
    def __init__(self, message, line, col):
        self.line = line
        self.col = col
        super().__init__(f"line {line}, column {col}: {message}")


class UnsupportedAcceptanceError(AutomatonError):
    pass


_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>/\*.*?\*/)
  | (?P<marker>--BODY--|--END--|--ABORT--)
  | (?P<header>[A-Za-z_][\w-]*:)
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][\w-]*)
  | (?P<label>\[[^\]]*\])
  | (?P<punct>[{}()&|!])
    """,
    re.VERBOSE | re.DOTALL,
)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _lex(text):
    pos, line, line_start = 0, 1, 0
    out = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise HoaSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind not in ("ws", "comment"):
            out.append(_Tok(kind, m.group(), line, pos - line_start + 1))
        chunk = m.group()
        newlines = chunk.count("\n")
        if newlines:
            line += newlines
            line_start = pos + chunk.rfind("\n") + 1
        pos = m.end()
    out.append(_Tok("eof", "", line, pos - line_start + 1))
    return out


class _Reader:
    def __init__(self, text):
        self.toks = _lex(text)
        self.k = 0

    def peek(self):
        return self.toks[self.k]

    def take(self):
        tok = self.toks[self.k]
        self.k += 1
        return tok

    def expect(self, kind, text=None):
        tok = self.take()
        if tok.kind != kind or (text is not None and tok.text != text):
            want = text or kind
            raise HoaSyntaxError(f"expected {want}, found {tok.text or 'end of input'!r}", tok.line, tok.col)
        return tok

    def error(self, message, tok=None):
        tok = tok or self.peek()
        return HoaSyntaxError(message, tok.line, tok.col)

    def rest_of_item(self):
        """Tokens until the next header item or the body marker."""
        items = []
        while self.peek().kind not in ("header", "marker", "eof"):
            items.append(self.take())
        return items


def _parse_acceptance_expr(tokens, reader):
    """Acceptance formula -> nested ('or'|'and', [...]) / ('Fin'|'Inf', n) / ('t'|'f',)."""
    k = 0

    def peek():
        return tokens[k] if k < len(tokens) else None

    def take():
        nonlocal k
        if k >= len(tokens):
            raise reader.error("acceptance condition ends early")
        k += 1
        return tokens[k - 1]

    def disj():
        parts = [conj()]
        while peek() is not None and peek().text == "|":
            take()
            parts.append(conj())
        return parts[0] if len(parts) == 1 else ("or", parts)

    def conj():
        parts = [atom()]
        while peek() is not None and peek().text == "&":
            take()
            parts.append(atom())
        return parts[0] if len(parts) == 1 else ("and", parts)

    def atom():
        tok = take()
        if tok.text == "(":
            e = disj()
            if take().text != ")":
                raise reader.error("unbalanced parenthesis in acceptance", tok)
            return e
        if tok.text in ("t", "f"):
            return (tok.text,)
        if tok.text in ("Fin", "Inf"):
            if take().text != "(":
                raise reader.error("expected '(' after " + tok.text, tok)
            neg = False
            nxt = take()
            if nxt.text == "!":
                neg = True
                nxt = take()
            if nxt.kind != "int":
                raise reader.error("expected acceptance set number", nxt)
            if take().text != ")":
                raise reader.error("expected ')'", nxt)
            if neg:
                raise UnsupportedAcceptanceError("complemented acceptance sets are not supported")
            return (tok.text, int(nxt.text))
        raise reader.error(f"unexpected {tok.text!r} in acceptance condition", tok)

    expr = disj()
    if k != len(tokens):
        raise reader.error("trailing tokens in acceptance condition", tokens[k])
    return expr


def _flatten(expr, op):
    if expr[0] == op:
        out = []
        for e in expr[1]:
            out.extend(_flatten(e, op))
        return out
    return [expr]


def _classify_acceptance(expr):
    """Return ('LDBA', [inf sets]) or ('DRA', [(fin or None, inf or None)])."""
    disjuncts = _flatten(expr, "or")
    shapes = []
    for d in disjuncts:
        conj = _flatten(d, "and")
        if any(c[0] not in ("Fin", "Inf", "t") for c in conj):
            raise UnsupportedAcceptanceError("acceptance must be Rabin or generalized Büchi")
        fins = [c[1] for c in conj if c[0] == "Fin"]
        infs = [c[1] for c in conj if c[0] == "Inf"]
        shapes.append((fins, infs))
    has_fin = any(f for f, _ in shapes)
    if len(shapes) == 1 and not has_fin:
        infs = shapes[0][1]
        if not infs:
            raise UnsupportedAcceptanceError("trivially true acceptance is not supported")
        return LDBA, infs
    pairs = []
    for fins, infs in shapes:
        if len(fins) > 1 or len(infs) > 1:
            raise UnsupportedAcceptanceError("each Rabin disjunct needs at most one Fin and one Inf")
        pairs.append((fins[0] if fins else None, infs[0] if infs else None))
    return DRA, pairs


def parse_hoa(text: str, plain_aps=(), name: str = ""):
    """Parse HOA text into a validated (unpruned) automaton."""
    r = _Reader(text)
    first = r.peek()
    if first.kind != "header" or first.text != "HOA:":
        raise r.error("input must start with 'HOA:'")

    num_states = None
    starts = []
    ap_names = None
    acc_expr = None
    acc_count = None
    plain = set(plain_aps)

    while r.peek().kind == "header":
        head = r.take()
        items = r.rest_of_item()
        key = head.text[:-1]
        if key == "HOA":
            if not items or items[0].text != "v1":
                raise r.error("only HOA v1 is supported", head)
        elif key == "States":
            if len(items) != 1 or items[0].kind != "int":
                raise r.error("States: expects one integer", head)
            num_states = int(items[0].text)
        elif key == "Start":
            if len(items) != 1 or items[0].kind != "int":
                raise UnsupportedAcceptanceError("alternating or conjunctive initial states are not supported")
            starts.append(int(items[0].text))
        elif key == "AP":
            if not items or items[0].kind != "int":
                raise r.error("AP: expects a count", head)
            count = int(items[0].text)
            names = [t.text[1:-1] for t in items[1:] if t.kind == "string"]
            if len(names) != count or len(items) != count + 1:
                raise r.error(f"AP: declares {count} propositions but lists {len(names)}", head)
            ap_names = names
        elif key == "Acceptance":
            if not items or items[0].kind != "int":
                raise r.error("Acceptance: expects a set count", head)
            acc_count = int(items[0].text)
            acc_expr = _parse_acceptance_expr(items[1:], r)
        elif key == "plain-aps":
            plain.update(t.text[1:-1] if t.kind == "string" else t.text for t in items)
        # acc-name, name, tool, properties, controllable-AP: informational

    if r.peek().kind != "marker" or r.peek().text != "--BODY--":
        raise r.error("expected --BODY--")
    r.take()
    if num_states is None:
        raise r.error("missing States: header")
    if acc_expr is None:
        raise r.error("missing Acceptance: header")
    if ap_names is None:
        ap_names = []
    if not starts:
        raise MalformedAutomatonError("missing Start: header")
    if len(starts) > 1:
        raise MalformedAutomatonError("several initial states make the automaton nondeterministic")

    transitions = [[] for _ in range(num_states)]
    membership = [set() for _ in range(num_states)]
    seen = set()
    while True:
        tok = r.peek()
        if tok.kind == "marker" and tok.text == "--END--":
            r.take()
            break
        if tok.kind == "marker" and tok.text == "--ABORT--":
            raise r.error("input aborted")
        if tok.kind == "eof":
            raise r.error("missing --END--")
        head = r.expect("header", "State:")
        label_tok = r.peek()
        if label_tok.kind == "label":
            raise UnsupportedAcceptanceError("state labels are not supported; label the edges")
        sid_tok = r.expect("int")
        sid = int(sid_tok.text)
        if not 0 <= sid < num_states:
            raise HoaSyntaxError(f"state id {sid} is dangling (States: {num_states})", sid_tok.line, sid_tok.col)
        if sid in seen:
            raise HoaSyntaxError(f"state {sid} defined twice", head.line, head.col)
        seen.add(sid)
        if r.peek().kind == "string":
            r.take()
        if r.peek().text == "{":
            membership[sid] = _acc_sets(r, acc_count)
        while r.peek().kind == "label":
            lt = r.take()
            try:
                guard = parse_label(lt.text[1:-1], num_aps=len(ap_names))
            except LabelSyntaxError as exc:
                raise HoaSyntaxError(str(exc), lt.line, lt.col + 1 + exc.pos) from None
            dt = r.peek()
            if dt.kind != "int":
                raise r.error("expected a destination state after the label")
            r.take()
            dest = int(dt.text)
            if not 0 <= dest < num_states:
                raise HoaSyntaxError(f"destination {dest} is a dangling state id", dt.line, dt.col)
            if r.peek().text == "&":
                raise UnsupportedAcceptanceError("alternating automata are not supported")
            if r.peek().text == "{":
                raise UnsupportedAcceptanceError("transition-based acceptance is not supported")
            transitions[sid].append(Transition(guard, dest))
        nxt = r.peek()
        if nxt.kind == "int":
            raise UnsupportedAcceptanceError("implicit edge labels are not supported")

    kind, shape = _classify_acceptance(acc_expr)

    def states_in(acc_set):
        return frozenset(q for q in range(num_states) if acc_set in membership[q])

    aps = [AtomicProposition(n, n not in plain) for n in ap_names]
    if kind == LDBA:
        return make_automaton(
            LDBA, num_states, starts[0], aps, transitions,
            buchi_sets=[states_in(j) for j in shape], name=name,
        )
    everything = frozenset(range(num_states))
    pairs = [
        RabinPair(good=states_in(inf) if inf is not None else everything,
                  bad=states_in(fin) if fin is not None else frozenset())
        for fin, inf in shape
    ]
    return make_automaton(DRA, num_states, starts[0], aps, transitions, rabin_pairs=pairs, name=name)


def _acc_sets(r, acc_count):
    r.expect("punct", "{")
    sets = set()
    while r.peek().kind == "int":
        tok = r.take()
        n = int(tok.text)
        if acc_count is not None and n >= acc_count:
            raise HoaSyntaxError(f"acceptance set {n} out of range", tok.line, tok.col)
        sets.add(n)
    r.expect("punct", "}")
    return sets


def to_hoa(aut) -> str:
    """Write an automaton back out (DRA as Rabin, LDBA without epsilon edges)."""
    if any(aut.epsilon_transitions):
        raise AutomatonError("HOA output does not support epsilon transitions")
    names = aut.ap_names
    lines = ["HOA: v1", f"States: {aut.num_states}", f"Start: {aut.initial}"]
    lines.append(f"AP: {len(names)} " + " ".join(f'"{n}"' for n in names))
    plain = [ap.name for ap in aut.aps if not ap.is_location]
    if plain:
        lines.append("plain-aps: " + " ".join(f'"{n}"' for n in plain))
    member = [[] for _ in range(aut.num_states)]
    if aut.kind == DRA:
        terms = []
        for i, p in enumerate(aut.rabin_pairs):
            terms.append(f"(Fin({2 * i}) & Inf({2 * i + 1}))")
            for q in p.bad:
                member[q].append(2 * i)
            for q in p.good:
                member[q].append(2 * i + 1)
        lines.append(f"Acceptance: {2 * len(aut.rabin_pairs)} " + " | ".join(terms))
        lines.append(f"acc-name: Rabin {len(aut.rabin_pairs)}")
    else:
        for j, fs in enumerate(aut.buchi_sets):
            for q in fs:
                member[q].append(j)
        k = len(aut.buchi_sets)
        lines.append(f"Acceptance: {k} " + " & ".join(f"Inf({j})" for j in range(k)))
    lines.append("--BODY--")
    for q in range(aut.num_states):
        acc = " {" + " ".join(map(str, sorted(member[q]))) + "}" if member[q] else ""
        lines.append(f"State: {q}{acc}")
        for tr in aut.transitions[q]:
            lines.append(f"[{tr.label.to_string()}] {tr.target}")
    lines.append("--END--")
    return "\n".join(lines) + "\n"
