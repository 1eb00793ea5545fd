"""Random rulesets, instances and queries for the property suites, plus slow oracles.

Every generator takes a ``random.Random`` so a failing case is reproducible
from its seed alone.  The oracles deliberately avoid the library's indexed
search: they enumerate substitutions by brute force.
"""

from __future__ import annotations

import itertools
import random
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from chasebound.core import Atom, ConjunctiveQuery, Constant, Instance, Null, Rule, Ruleset, Term, Variable

CONSTANTS = [Constant(c) for c in "abcd"]


def vocabulary(rng: random.Random, max_arity: int = 3, n_preds: Optional[int] = None) -> List[Tuple[str, int]]:
    n = n_preds or rng.randint(1, 3)
    return [(name, rng.randint(1, max_arity)) for name in ["p", "q", "r"][:n]]


def random_rule(rng: random.Random, rid: str, preds: Sequence[Tuple[str, int]], *, fe: bool = False,
                datalog: bool = False, max_body: int = 2, max_head: int = 2) -> Rule:
    pool = [Variable(f"X{i}") for i in range(4)]
    body = []
    for _ in range(rng.randint(1, max_body)):
        name, ar = rng.choice(preds)
        body.append(Atom(name, tuple(rng.choice(pool) for _ in range(ar))))
    bvars = sorted({t for a in body for t in a.args}, key=lambda v: v.name)
    exist = [Variable("Z0"), Variable("Z1")]
    head = []
    for _ in range(rng.randint(1, max_head)):
        name, ar = rng.choice(preds)
        if datalog:
            args = [rng.choice(bvars) for _ in range(ar)]
        else:
            args = [rng.choice(bvars) if rng.random() < 0.6 else rng.choice(exist) for _ in range(ar)]
            if fe and not any(t in exist for t in args):
                args[rng.randrange(ar)] = rng.choice(exist)
        head.append(Atom(name, tuple(args)))
    return Rule(rid, tuple(body), tuple(head))


def random_ruleset(rng: random.Random, max_rules: int = 3, max_arity: int = 3, **kw) -> Ruleset:
    preds = vocabulary(rng, max_arity)
    return Ruleset(tuple(random_rule(rng, f"r{i + 1}", preds, **kw) for i in range(rng.randint(1, max_rules))))


def signatures(rules: Iterable[Rule]) -> List[Tuple[str, int]]:
    return sorted({a.signature for r in rules for a in r.body + r.head})


def random_instance(rng: random.Random, preds: Sequence[Tuple[str, int]], max_atoms: int = 4,
                    min_atoms: int = 0, constants: Sequence[Term] = CONSTANTS) -> Instance:
    out = set()
    for _ in range(rng.randint(min_atoms, max_atoms)):
        name, ar = rng.choice(list(preds))
        out.add(Atom(name, tuple(rng.choice(constants) for _ in range(ar))))
    return Instance(out)


def random_query(rng: random.Random, preds: Sequence[Tuple[str, int]], max_atoms: int = 2) -> ConjunctiveQuery:
    pool = [Variable(f"U{i}") for i in range(3)]
    atoms = []
    for _ in range(rng.randint(1, max_atoms)):
        name, ar = rng.choice(list(preds))
        atoms.append(Atom(name, tuple(Constant("a") if rng.random() < 0.15 else rng.choice(pool)
                                      for _ in range(ar))))
    vs = sorted({t for a in atoms for t in a.args if isinstance(t, Variable)}, key=lambda v: v.name)
    answers = tuple(v for v in vs if rng.random() < 0.5)
    return ConjunctiveQuery(tuple(atoms), answers)


# ---------------------------------------------------------------- oracles

def brute_homomorphisms(source: Iterable[Atom], target: Iterable[Atom], movable_constants: bool = False) -> List[Dict[Term, Term]]:
    """Every substitution of the source's movable terms over adom(target) that maps source into target."""
    source, target = list(source), frozenset(target)
    dom = sorted({t for a in target for t in a.args}, key=lambda t: t.sort_key)
    movable = sorted({t for a in source for t in a.args
                      if movable_constants or not isinstance(t, Constant)}, key=lambda t: t.sort_key)
    out = []
    for images in itertools.product(dom, repeat=len(movable)):
        s = dict(zip(movable, images))
        if all(Atom(a.predicate, tuple(s.get(t, t) for t in a.args)) in target for a in source):
            out.append(s)
    return out


def join_homomorphisms(source: Iterable[Atom], target: Iterable[Atom]) -> List[Dict[Term, Term]]:
    """Nested-loop join of the source atoms against every target atom, in source order."""
    source, target = list(source), list(target)
    out: List[Dict[Term, Term]] = []

    def rec(i: int, s: Dict[Term, Term]):
        if i == len(source):
            out.append(dict(s))
            return
        a = source[i]
        for f in target:
            if f.predicate != a.predicate or len(f.args) != len(a.args):
                continue
            ext = dict(s)
            for t, u in zip(a.args, f.args):
                if isinstance(t, Constant):
                    if t is not u:
                        break
                elif ext.setdefault(t, u) is not u:
                    break
            else:
                rec(i + 1, ext)

    rec(0, {})
    return out


def naive_chase(instance: Iterable[Atom], rules: Sequence[Rule], variant: str, rounds: int) -> List[frozenset]:
    """Breadth-first chase by brute-force substitution, returning the atom set after each round.

    Nulls are built with the same provenance scheme as the engine, so the
    result can be compared to the engine by plain set equality.
    """
    cur = frozenset(instance)
    out = [cur]
    fired = set()
    for _ in range(rounds):
        new = set()
        for r in rules:
            bvars = sorted({t for a in r.body for t in a.args if isinstance(t, Variable)}, key=lambda v: v.name)
            for h in join_homomorphisms(r.body, cur):
                full = tuple(sorted((v.name, h[v]) for v in bvars))
                fr = tuple(sorted((v.name, h[v]) for v in r.frontier))
                key = (r.id, fr if variant == "so" else full)
                if key in fired:
                    continue
                fired.add(key)
                s = dict(h)
                for z in r.existentials:
                    s[z] = Null(variant, r.id, z.name, fr if variant == "so" else full)
                for a in r.head:
                    new.add(Atom(a.predicate, tuple(s.get(t, t) for t in a.args)))
        cur = cur | new
        out.append(cur)
    return out


def brute_answers(query: ConjunctiveQuery, atoms: Iterable[Atom]) -> frozenset:
    out = set()
    for h in brute_homomorphisms(query.atoms, atoms):
        tup = tuple(h.get(t, t) for t in query.answers)
        if all(isinstance(t, Constant) for t in tup):
            out.add(tup)
    return frozenset(out)
