"""Omega-automata: ingestion, feasibility pruning and distance to acceptance."""

from .core import (
    DRA,
    LDBA,
    AtomicProposition,
    AutomatonError,
    MalformedAutomatonError,
    NondeterminismError,
    OmegaAutomaton,
    RabinPair,
    Transition,
    UnsatisfiableTaskWarning,
    deadlock_distance,
    deadlock_states,
    feasible_successors,
    feasible_symbols,
    full_visit_set,
    goal_states,
    is_feasible_symbol,
    make_automaton,
    prune_and_index,
    step,
    update_visit_set,
)
from .hoa import HoaSyntaxError, UnsupportedAcceptanceError, parse_hoa, to_hoa
from .labels import FALSE, TRUE, And, Atom, LabelExpr, LabelSyntaxError, Not, Or, parse_label, symbol_from_names
from .native import (
    SchemaError,
    bundled_automaton,
    bundled_names,
    load_automaton,
    load_native,
    load_native_file,
    save_native,
    to_native,
)

__all__ = [
    "DRA", "LDBA", "AtomicProposition", "AutomatonError", "MalformedAutomatonError",
    "NondeterminismError", "OmegaAutomaton", "RabinPair", "Transition", "UnsatisfiableTaskWarning",
    "deadlock_distance", "deadlock_states", "feasible_successors", "feasible_symbols", "full_visit_set",
    "goal_states", "is_feasible_symbol", "make_automaton", "prune_and_index", "step", "update_visit_set",
    "HoaSyntaxError", "UnsupportedAcceptanceError", "parse_hoa", "to_hoa",
    "FALSE", "TRUE", "And", "Atom", "LabelExpr", "LabelSyntaxError", "Not", "Or", "parse_label",
    "symbol_from_names", "SchemaError", "bundled_automaton", "bundled_names", "load_automaton",
    "load_native", "load_native_file", "save_native", "to_native",
]
