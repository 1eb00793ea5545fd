"""Ruleset and instance transformations.

* ``df_decompose``: split a rule into its fully-existential part and single-head datalog rules.
* ``critical_instance``: all facts over a vocabulary built on the constant ``a``.
* ``psi_transform``: route every rule through a fresh frontier predicate.
* ``fe_encode`` / ``fe_decode``: add / drop a trailing fresh position so every rule becomes FE.
* ``freeze``: replace instance variables by fresh constants.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

from .core import Atom, Constant, Instance, Null, Rule, Ruleset, Term, Variable, atom_key

__all__ = [
    "DecompositionResult", "df_decompose", "critical_instance", "psi_transform",
    "fe_encode", "fe_decode", "fe_encode_instance", "fe_encode_rules", "freeze",
    "PLUS",
]

PLUS = "+"


def _fresh(base: str, taken: Set[str]) -> str:
    name = base
    n = 0
    while name in taken:
        n += 1
        name = f"{base}_{n}"
    taken.add(name)
    return name


@dataclass(frozen=True)
class DecompositionResult:
    fe_rules: Tuple[Rule, ...]
    datalog_rules: Tuple[Rule, ...]
    origin: Dict[str, str]
    rules: Ruleset

    def __iter__(self):
        return iter(self.rules)


def df_decompose(rules: Iterable[Rule]) -> DecompositionResult:
    """Split each rule ``B -> H_F, H_D`` into ``B -> H_F`` and ``B -> h`` for each ``h`` in ``H_D``.

    ``H_F`` holds the head atoms containing an existential variable.  A rule
    that is already a pure FE rule, or a single-head datalog rule, is kept
    under its own id; otherwise outputs are named ``<id>_fe`` and ``<id>_d<j>``.
    """
    rules = list(rules)
    taken = {r.id for r in rules}
    fe: List[Rule] = []
    dl: List[Rule] = []
    out: List[Rule] = []
    origin: Dict[str, str] = {}
    for r in rules:
        ex = set(r.existentials)
        h_f = tuple(a for a in r.head if any(t in ex for t in a.terms()))
        h_d = tuple(a for a in r.head if not any(t in ex for t in a.terms()))
        if not h_d or (not h_f and len(h_d) == 1):
            parts = [r]
        else:
            parts = []
            if h_f:
                parts.append(Rule(_fresh(f"{r.id}_fe", taken), r.body, h_f))
            for j, a in enumerate(h_d, 1):
                parts.append(Rule(_fresh(f"{r.id}_d{j}", taken), r.body, (a,)))
        for p in parts:
            origin[p.id] = r.id
            (fe if p.existentials else dl).append(p)
            out.append(p)
    return DecompositionResult(tuple(fe), tuple(dl), origin, Ruleset(tuple(out)))


def critical_instance(predicates: Iterable[Tuple[str, int]], constants: Iterable[Term] = ()) -> Instance:
    """Every fact over ``predicates`` built on ``a`` (and on ``constants``, if given)."""
    pool = sorted({Constant("a"), *constants}, key=lambda t: t.sort_key)
    facts = []
    for pred, arity in sorted(set(predicates)):
        for args in itertools.product(pool, repeat=arity):
            facts.append(Atom(pred, tuple(args)))
    return Instance(facts)


def psi_transform(rules: Iterable[Rule]) -> Ruleset:
    """Replace ``B -> H`` by ``B -> p_σ(fr)`` (``<id>_in``) and ``p_σ(fr) -> H`` (``<id>_out``)."""
    rules = list(rules)
    preds = {a.predicate for r in rules for a in r.body + r.head}
    ids = {r.id for r in rules}
    out = []
    for r in rules:
        name = _fresh(f"p_{r.id}".lower(), preds)
        mid = Atom(name, tuple(r.frontier))
        out.append(Rule(_fresh(f"{r.id}_in", ids), r.body, (mid,)))
        out.append(Rule(_fresh(f"{r.id}_out", ids), (mid,), r.head))
    return Ruleset(tuple(out))


def _check_plain(atoms: Iterable[Atom]) -> None:
    for a in atoms:
        if a.predicate.endswith(PLUS):
            raise ValueError(f"predicate {a.predicate!r} is already in the encoded vocabulary")


def _fresh_vars(taken: Set[str]):
    for n in itertools.count(1):
        name = f"Z{n}"
        if name not in taken:
            yield Variable(name)


def _plus(a: Atom, extra: Term) -> Atom:
    return Atom(a.predicate + PLUS, a.args + (extra,))


def fe_encode_rules(rules: Iterable[Rule]) -> Ruleset:
    """Give every atom a trailing fresh variable; head ones are existential, so every rule is FE."""
    out = []
    for r in rules:
        _check_plain(r.body + r.head)
        taken = {t.name for a in r.body + r.head for t in a.terms() if isinstance(t, Variable)}
        fresh = _fresh_vars(taken)
        body = tuple(_plus(a, next(fresh)) for a in r.body)
        head = tuple(_plus(a, next(fresh)) for a in r.head)
        out.append(Rule(r.id, body, head))
    return Ruleset(tuple(out))


def fe_encode_instance(instance: Iterable[Atom]) -> Instance:
    """``p(t..) -> p+(t.., Z)`` with a distinct fresh instance variable per fact."""
    facts = sorted(set(instance), key=atom_key)
    _check_plain(facts)
    taken = {t.name for a in facts for t in a.args if isinstance(t, Variable)}
    fresh = _fresh_vars(taken)
    return Instance(_plus(a, next(fresh)) for a in facts)


def fe_encode(rules: Iterable[Rule], instance: Iterable[Atom] = ()) -> Tuple[Ruleset, Instance]:
    return fe_encode_rules(rules), fe_encode_instance(instance)


def fe_decode(instance: Iterable[Atom]) -> Instance:
    """Drop the trailing position and the ``+`` suffix; every predicate must be encoded."""
    out = []
    for a in instance:
        if not a.predicate.endswith(PLUS) or not a.args:
            raise ValueError(f"atom {a!r} is not over the encoded vocabulary")
        out.append(Atom(a.predicate[:-1], a.args[:-1]))
    return Instance(out)


def freeze(instance: Iterable[Atom]) -> Tuple[Instance, Dict[Term, Constant]]:
    """Rename variables and nulls to distinct constants ``c_<name>`` absent from the instance."""
    facts = sorted(set(instance), key=atom_key)
    taken = {t.name for a in facts for t in a.args if isinstance(t, Constant)}
    bij: Dict[Term, Constant] = {}
    counter = itertools.count(1)
    for a in facts:
        for t in a.args:
            if isinstance(t, (Variable, Null)) and t not in bij:
                base = f"c_{t.name}" if isinstance(t, Variable) else f"c_n{next(counter)}"
                bij[t] = Constant(_fresh(base, taken))
    return Instance(Atom(a.predicate, tuple(bij.get(t, t) for t in a.args)) for a in facts), bij
