"""JSON format used for the bundled automata."""

from __future__ import annotations

import json
from importlib import resources

import jsonschema

from .core import DRA, LDBA, AtomicProposition, AutomatonError, RabinPair, Transition, make_automaton
from .labels import LabelSyntaxError, parse_label


class SchemaError(AutomatonError):
    pass


_STATE_LIST = {"type": "array", "items": {"type": "integer", "minimum": 0}}

SCHEMA = {
    "type": "object",
    "required": ["kind", "num_states", "initial", "aps", "edges"],
    "properties": {
        "kind": {"enum": [DRA, LDBA]},
        "name": {"type": "string"},
        "num_states": {"type": "integer", "minimum": 1},
        "initial": {"type": "integer", "minimum": 0},
        "aps": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name"],
                "properties": {"name": {"type": "string"}, "is_location": {"type": "boolean"}},
                "additionalProperties": False,
            },
        },
        "edges": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["from", "label", "to"],
                "properties": {
                    "from": {"type": "integer", "minimum": 0},
                    "label": {"type": "string"},
                    "to": {"type": "integer", "minimum": 0},
                },
                "additionalProperties": False,
            },
        },
        "rabin_pairs": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["good", "bad"],
                "properties": {"good": _STATE_LIST, "bad": _STATE_LIST},
                "additionalProperties": False,
            },
        },
        "buchi_sets": {"type": "array", "items": _STATE_LIST},
        "epsilon_edges": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["from", "to"],
                "properties": {"from": {"type": "integer", "minimum": 0}, "to": {"type": "integer", "minimum": 0}},
                "additionalProperties": False,
            },
        },
        "description": {"type": "string"},
    },
    "additionalProperties": False,
}


def load_native(doc):
    """Build an automaton from a parsed JSON document (dict) or a JSON string."""
    if isinstance(doc, (str, bytes)):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"not valid JSON: {exc}") from None
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise SchemaError(f"{where}: {exc.message}") from None

    n = doc["num_states"]
    aps = [AtomicProposition(a["name"], a.get("is_location", True)) for a in doc["aps"]]
    names = [a.name for a in aps]
    transitions = [[] for _ in range(n)]
    for e in doc["edges"]:
        if e["from"] >= n:
            raise SchemaError(f"edge source {e['from']} is a dangling state id")
        try:
            guard = parse_label(e["label"], ap_names=names)
        except LabelSyntaxError as exc:
            raise SchemaError(str(exc)) from None
        transitions[e["from"]].append(Transition(guard, e["to"]))
    eps = [[] for _ in range(n)]
    for e in doc.get("epsilon_edges", []):
        if e["from"] >= n:
            raise SchemaError(f"epsilon edge source {e['from']} is a dangling state id")
        eps[e["from"]].append(e["to"])

    kind = doc["kind"]
    if kind == DRA:
        if "buchi_sets" in doc:
            raise SchemaError("a DRA document carries rabin_pairs, not buchi_sets")
        pairs = [RabinPair(frozenset(p["good"]), frozenset(p["bad"])) for p in doc.get("rabin_pairs", [])]
        return make_automaton(DRA, n, doc["initial"], aps, transitions,
                              epsilon_transitions=eps, rabin_pairs=pairs, name=doc.get("name", ""))
    if "rabin_pairs" in doc:
        raise SchemaError("an LDBA document carries buchi_sets, not rabin_pairs")
    return make_automaton(LDBA, n, doc["initial"], aps, transitions, epsilon_transitions=eps,
                          buchi_sets=[frozenset(s) for s in doc.get("buchi_sets", [])], name=doc.get("name", ""))


def to_native(aut) -> dict:
    names = aut.ap_names
    doc = {
        "kind": aut.kind,
        "num_states": aut.num_states,
        "initial": aut.initial,
        "aps": [{"name": ap.name, "is_location": ap.is_location} for ap in aut.aps],
        "edges": [
            {"from": q, "label": tr.label.to_string(names), "to": tr.target}
            for q in range(aut.num_states)
            for tr in aut.transitions[q]
        ],
    }
    if aut.name:
        doc["name"] = aut.name
    if aut.kind == DRA:
        doc["rabin_pairs"] = [{"good": sorted(p.good), "bad": sorted(p.bad)} for p in aut.rabin_pairs]
    else:
        doc["buchi_sets"] = [sorted(s) for s in aut.buchi_sets]
        doc["epsilon_edges"] = [
            {"from": q, "to": t} for q, outs in enumerate(aut.epsilon_transitions) for t in outs
        ]
    return doc


def save_native(aut, path) -> None:
    with open(path, "w") as fh:
        json.dump(to_native(aut), fh, indent=2)
        fh.write("\n")


def load_native_file(path):
    with open(path) as fh:
        text = fh.read()
    aut = load_native(text)
    return aut


def bundled_automaton(name: str):
    """One of the automata shipped in ``ltlexplore/data/automata``."""
    if not name.endswith(".json") and not name.endswith(".hoa"):
        name += ".json"
    ref = resources.files("ltlexplore").joinpath("data").joinpath("automata").joinpath(name)
    text = ref.read_text()
    if name.endswith(".hoa"):
        from .hoa import parse_hoa

        return parse_hoa(text, name=name[:-4])
    return load_native(text)


def bundled_names() -> list[str]:
    folder = resources.files("ltlexplore").joinpath("data").joinpath("automata")
    return sorted(p.name for p in folder.iterdir() if p.name.endswith((".json", ".hoa")))


def load_automaton(spec: str):
    """Resolve ``bundled:<name>``, a ``.hoa`` path, or a native JSON path."""
    if spec.startswith("bundled:"):
        return bundled_automaton(spec[len("bundled:"):])
    if spec.endswith(".hoa"):
        from .hoa import parse_hoa

        with open(spec) as fh:
            return parse_hoa(fh.read())
    return load_native_file(spec)
