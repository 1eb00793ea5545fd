"""Terms, atoms, rules and homomorphism search.

Terms are hash-consed: building the same constant, variable, null or Skolem
term twice returns the same object, so equality and hashing are O(1) even for
deeply nested chase nulls.  Every term carries a structural ``sort_key`` that
is stable across processes; anything that must be reproducible sorts by it.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Iterator, List, Mapping, NamedTuple, Optional, Sequence, Tuple

__all__ = [
    "Term", "Constant", "Variable", "Null", "SkolemTerm", "Atom", "Instance",
    "Rule", "Ruleset", "adom", "atom_key", "apply_substitution",
    "find_homomorphisms", "find_embeddings", "find_isomorphism",
    "AtomIndex", "canonical_map", "predicates_of", "constants_of",
    "ConjunctiveQuery", "answers",
]


_INTERN: "weakref.WeakValueDictionary[tuple, Term]" = weakref.WeakValueDictionary()


class Term:
    __slots__ = ("sort_key", "_hash", "__weakref__")

    sort_key: tuple

    def __new__(cls, *parts):
        ident = (cls.__name__,) + parts
        found = _INTERN.get(ident)
        if found is not None:
            return found
        self = object.__new__(cls)
        self._init(*parts)
        self._hash = hash(ident)
        _INTERN[ident] = self
        return self

    def _init(self, *parts):  # pragma: no cover - overridden
        raise NotImplementedError

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        return self is other

    def __lt__(self, other):
        return self.sort_key < other.sort_key

    def __reduce__(self):
        return (type(self), self._parts())

    def _parts(self) -> tuple:  # pragma: no cover - overridden
        raise NotImplementedError

    @property
    def is_constant(self) -> bool:
        return False


class Constant(Term):
    __slots__ = ("name",)

    def _init(self, name: str):
        self.name = name
        self.sort_key = (0, name)

    def _parts(self):
        return (self.name,)

    @property
    def is_constant(self) -> bool:
        return True

    def __repr__(self):
        return self.name


class Variable(Term):
    __slots__ = ("name",)

    def _init(self, name: str):
        self.name = name
        self.sort_key = (1, name)

    def _parts(self):
        return (self.name,)

    def __repr__(self):
        return self.name


class Null(Term):
    """A chase-generated term named by its provenance.

    ``kind`` is ``"o"`` (keyed by the full body homomorphism) or ``"so"``
    (keyed by the frontier restriction).  ``hom`` is the canonical sorted
    ``((variable name, term), ...)`` list, so two nulls are equal exactly when
    rule, existential variable and key agree.
    """

    __slots__ = ("kind", "rule", "var", "hom")

    def _init(self, kind: str, rule: str, var: str, hom: Tuple[Tuple[str, Term], ...]):
        self.kind = kind
        self.rule = rule
        self.var = var
        self.hom = hom
        self.sort_key = (2, rule, var, kind, tuple((v, t.sort_key) for v, t in hom))

    def _parts(self):
        return (self.kind, self.rule, self.var, self.hom)

    def __repr__(self):
        key = ",".join(f"{v}:{t!r}" for v, t in self.hom)
        return f"{self.var}[{self.kind}:{self.rule}|{key}]"


class SkolemTerm(Term):
    """Functional term ``f(args)``; with variable args it is a rule-head template."""

    __slots__ = ("fn", "args")

    def _init(self, fn: str, args: Tuple[Term, ...]):
        self.fn = fn
        self.args = args
        self.sort_key = (3, fn, tuple(a.sort_key for a in args))

    def _parts(self):
        return (self.fn, self.args)

    def __repr__(self):
        return f"{self.fn}({','.join(map(repr, self.args))})"


class Atom(NamedTuple):
    predicate: str
    args: Tuple[Term, ...]

    @property
    def arity(self) -> int:
        return len(self.args)

    @property
    def signature(self) -> Tuple[str, int]:
        return (self.predicate, len(self.args))

    def terms(self) -> Iterator[Term]:
        for t in self.args:
            yield t
            if isinstance(t, SkolemTerm):
                yield from _nested(t)

    def __repr__(self):
        return f"{self.predicate}({','.join(map(repr, self.args))})"


def _nested(t: SkolemTerm) -> Iterator[Term]:
    for a in t.args:
        yield a
        if isinstance(a, SkolemTerm):
            yield from _nested(a)


def atom_key(a: Atom) -> tuple:
    return (a.predicate, len(a.args), tuple(t.sort_key for t in a.args))


def adom(atoms: Iterable[Atom]) -> frozenset:
    """Terms occurring as atom arguments (Skolem sub-terms are not listed)."""
    return frozenset(t for a in atoms for t in a.args)


def predicates_of(atoms: Iterable[Atom]) -> frozenset:
    return frozenset(a.signature for a in atoms)


def constants_of(atoms: Iterable[Atom]) -> frozenset:
    return frozenset(t for a in atoms for t in a.terms() if isinstance(t, Constant))


class Instance(frozenset):
    """A finite set of atoms with a cached active domain."""

    @property
    def adom(self) -> frozenset:
        try:
            return self._adom
        except AttributeError:
            self._adom = adom(self)
            return self._adom

    def sorted(self) -> List[Atom]:
        return sorted(self, key=atom_key)

    def __repr__(self):
        return "{" + ", ".join(map(repr, self.sorted())) + "}"


def _vars_in(atoms: Iterable[Atom]) -> List[Variable]:
    seen: Dict[Variable, None] = {}
    for a in atoms:
        for t in a.terms():
            if isinstance(t, Variable):
                seen.setdefault(t)
    return list(seen)


@dataclass(frozen=True)
class Rule:
    """``body -> head`` with frontier in first-occurrence body order."""

    id: str
    body: Tuple[Atom, ...]
    head: Tuple[Atom, ...]
    frontier: Tuple[Variable, ...] = field(init=False, compare=False)
    existentials: Tuple[Variable, ...] = field(init=False, compare=False)

    def __post_init__(self):
        body = tuple(dict.fromkeys(self.body))
        head = tuple(dict.fromkeys(self.head))
        object.__setattr__(self, "body", body)
        object.__setattr__(self, "head", head)
        head_vars = set(_vars_in(head))
        body_vars = _vars_in(body)
        body_set = set(body_vars)
        object.__setattr__(self, "frontier", tuple(v for v in body_vars if v in head_vars))
        object.__setattr__(self, "existentials", tuple(v for v in _vars_in(head) if v not in body_set))

    @property
    def body_variables(self) -> Tuple[Variable, ...]:
        return tuple(_vars_in(self.body))

    @property
    def is_datalog(self) -> bool:
        return not self.existentials

    @property
    def is_fe(self) -> bool:
        ex = set(self.existentials)
        return all(any(t in ex for t in a.terms()) for a in self.head)

    def __repr__(self):
        return f"[{self.id}] {', '.join(map(repr, self.body))} -> {', '.join(map(repr, self.head))}"


@dataclass(frozen=True)
class Ruleset:
    rules: Tuple[Rule, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))
        ids = [r.id for r in self.rules]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate rule ids in {ids}")

    def __iter__(self):
        return iter(self.rules)

    def __len__(self):
        return len(self.rules)

    def __getitem__(self, i):
        return self.rules[i]

    def by_id(self, rule_id: str) -> Rule:
        for r in self.rules:
            if r.id == rule_id:
                return r
        raise KeyError(rule_id)

    def predicates(self) -> frozenset:
        return frozenset(a.signature for r in self.rules for a in r.body + r.head)

    def constants(self) -> frozenset:
        return frozenset(t for r in self.rules for a in r.body + r.head
                         for t in a.terms() if isinstance(t, Constant))


@dataclass(frozen=True)
class ConjunctiveQuery:
    """Atoms plus an ordered answer tuple; repeats encode identified answer positions."""

    atoms: Tuple[Atom, ...]
    answers: Tuple[Term, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple(sorted(set(self.atoms), key=atom_key)))
        object.__setattr__(self, "answers", tuple(self.answers))
        present = {t for a in self.atoms for t in a.args}
        for t in self.answers:
            if isinstance(t, Variable) and t not in present:
                raise ValueError(f"answer variable {t!r} does not occur in the query body")

    @property
    def is_boolean(self) -> bool:
        return not self.answers

    @property
    def is_full_atomic(self) -> bool:
        return (len(self.atoms) == 1 and all(isinstance(t, Variable) for t in self.atoms[0].args)
                and set(self.atoms[0].args) <= set(self.answers))

    @property
    def arity(self) -> int:
        return len(self.answers)

    def variables(self) -> List[Variable]:
        seen: Dict[Variable, None] = {}
        for a in self.atoms:
            for t in a.args:
                if isinstance(t, Variable):
                    seen.setdefault(t)
        return list(seen)

    def __repr__(self):
        head = f"?({','.join(map(repr, self.answers))})" if self.answers else "?"
        return f"{head} :- {', '.join(map(repr, self.atoms))}"



Substitution = Dict[Term, Term]


def _subst_term(t: Term, s: Mapping[Term, Term]) -> Term:
    if isinstance(t, SkolemTerm):
        return SkolemTerm(t.fn, tuple(_subst_term(a, s) for a in t.args))
    return s.get(t, t)


def apply_atom(s: Mapping[Term, Term], a: Atom) -> Atom:
    return Atom(a.predicate, tuple(_subst_term(t, s) for t in a.args))


def apply_substitution(s: Mapping[Term, Term], atoms: Iterable[Atom]) -> frozenset:
    return frozenset(apply_atom(s, a) for a in atoms)


def canonical_map(s: Mapping[Term, Term], keys: Sequence[Variable]) -> Tuple[Tuple[str, Term], ...]:
    """Sorted ``(name, image)`` pairs for ``keys``; the null-naming key."""
    return tuple(sorted(((v.name, s[v]) for v in keys), key=lambda p: p[0]))


class AtomIndex:
    """Per-predicate and per-(predicate, position, term) lookup over a fixed atom set."""

    def __init__(self, atoms: Iterable[Atom]):
        self.atoms = frozenset(atoms)
        self.by_pred: Dict[Tuple[str, int], List[Atom]] = {}
        self.by_pos: Dict[tuple, List[Atom]] = {}
        for a in sorted(self.atoms, key=atom_key):
            sig = a.signature
            self.by_pred.setdefault(sig, []).append(a)
            for i, t in enumerate(a.args):
                self.by_pos.setdefault((sig, i, t), []).append(a)

    def candidates(self, a: Atom, bound: Mapping[Term, Term], movable: Callable[[Term], bool]) -> List[Atom]:
        sig = a.signature
        best = self.by_pred.get(sig, [])
        for i, t in enumerate(a.args):
            if movable(t):
                img = bound.get(t)
                if img is None:
                    continue
            else:
                img = t
            lst = self.by_pos.get((sig, i, img), [])
            if len(lst) < len(best):
                best = lst
                if not best:
                    break
        return best


def _is_movable_hom(t: Term) -> bool:
    return not isinstance(t, Constant)


def _always(t: Term) -> bool:
    return True


def _match(a: Atom, fact: Atom, sub: Dict[Term, Term], movable, image_set: Optional[set]) -> Optional[List[Term]]:
    added: List[Term] = []
    for t, u in zip(a.args, fact.args):
        if movable(t):
            cur = sub.get(t)
            if cur is None:
                if image_set is not None:
                    if u in image_set:
                        break
                    image_set.add(u)
                sub[t] = u
                added.append(t)
            elif cur is not u:
                break
        elif t is not u:
            break
    else:
        return added
    for t in added:
        if image_set is not None:
            image_set.discard(sub[t])
        del sub[t]
    return None


def _search(source: Sequence[Atom], index: AtomIndex, seed: Mapping[Term, Term],
            movable: Callable[[Term], bool], injective: bool = False) -> Iterator[Dict[Term, Term]]:
    atoms = sorted(set(source), key=atom_key)
    sub: Dict[Term, Term] = dict(seed)
    image_set: Optional[set] = None
    if injective:
        image_set = set(sub.values())
        for a in atoms:
            for t in a.args:
                if not movable(t):
                    image_set.add(t)
    remaining = list(atoms)

    def rec():
        if not remaining:
            yield dict(sub)
            return
        best_i, best_c = 0, None
        for i, a in enumerate(remaining):
            c = index.candidates(a, sub, movable)
            if best_c is None or len(c) < len(best_c):
                best_i, best_c = i, c
                if not c:
                    return
        a = remaining.pop(best_i)
        try:
            for fact in best_c:
                added = _match(a, fact, sub, movable, image_set)
                if added is None:
                    continue
                yield from rec()
                for t in added:
                    if image_set is not None:
                        image_set.discard(sub[t])
                    del sub[t]
        finally:
            remaining.insert(best_i, a)

    return rec()


def find_homomorphisms(source: Iterable[Atom], target, seed: Optional[Mapping[Term, Term]] = None) -> Iterator[Dict[Term, Term]]:
    """Lazily yield every extension of ``seed`` mapping ``source`` into ``target``.

    Constants are fixed; variables, nulls and Skolem terms of the source may
    move.  ``target`` is an atom collection or a prebuilt :class:`AtomIndex`.
    Source atoms are matched most-constrained first (ties by atom order) and
    candidate facts in sorted order, so the stream order is deterministic.
    """
    index = target if isinstance(target, AtomIndex) else AtomIndex(target)
    return _search(list(source), index, seed or {}, _is_movable_hom)


def find_embeddings(source: Iterable[Atom], target, seed: Optional[Mapping[Term, Term]] = None) -> Iterator[Dict[Term, Term]]:
    """Like :func:`find_homomorphisms` but constants may move too."""
    index = target if isinstance(target, AtomIndex) else AtomIndex(target)
    return _search(list(source), index, seed or {}, _always)


def find_isomorphism(a: Iterable[Atom], b: Iterable[Atom], fixed: Iterable[Term] = ()) -> Optional[Dict[Term, Term]]:
    """A term bijection mapping ``a`` onto ``b`` fixing constants and ``fixed``, or None."""
    a, b = frozenset(a), frozenset(b)
    if len(a) != len(b) or len(adom(a)) != len(adom(b)):
        return None
    fixed = frozenset(fixed)
    seed = {t: t for t in fixed if t in adom(a)}
    movable = lambda t: not isinstance(t, Constant) and t not in fixed  # noqa: E731
    for h in _search(list(a), AtomIndex(b), seed, movable, injective=True):
        return h
    return None


def answers(query: ConjunctiveQuery, target) -> frozenset:
    """Answer tuples of ``query`` over ``target``; only all-constant tuples count."""
    out = set()
    for h in find_homomorphisms(query.atoms, target):
        tup = tuple(h.get(t, t) for t in query.answers)
        if all(isinstance(t, Constant) for t in tup):
            out.add(tup)
    return frozenset(out)
