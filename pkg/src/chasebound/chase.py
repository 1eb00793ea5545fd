"""Breadth-first oblivious, semi-oblivious and Skolem chase.

Each round enumerates the triggers over the atoms of the previous round,
skips triggers whose key was already consumed, and only then adds the
produced atoms (two buffers).  After round 1 only triggers that use an atom
new in the previous round are enumerated: all others were seen, and their
keys consumed, one round earlier.  Nulls are named by provenance, so the naming
scheme alone decides which triggers can still contribute something new:

* oblivious: ``Null("o", rule, z, full body homomorphism)``
* semi-oblivious: ``Null("so", rule, z, frontier restriction)``
* skolem: oblivious chase over rules whose heads carry ``f_<rule>_<z>(frontier)``
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple

from .core import (
    Atom, ConjunctiveQuery, Constant, Instance, Null, Rule, Ruleset, SkolemTerm, Term,
    Variable, AtomIndex, answers, apply_atom, atom_key, canonical_map, find_homomorphisms,
    find_isomorphism,
)

__all__ = [
    "VARIANTS", "normalize_variant", "Trigger", "TriggerRecord", "ChaseResult",
    "enumerate_triggers", "run_chase", "certain_answers", "skolemize",
    "skolem_function", "skolem_to_null", "EmbeddingExtension", "InvariantError",
    "extend_embedding", "rounds_isomorphic",
]

VARIANTS = ("o", "so", "skolem")
_ALIASES = {"o": "o", "oblivious": "o", "so": "so", "semi-oblivious": "so", "skolem": "skolem"}


def normalize_variant(variant: str) -> str:
    try:
        return _ALIASES[variant]
    except KeyError:
        raise ValueError(f"unknown chase variant {variant!r}; expected one of o, so, skolem") from None


class InvariantError(AssertionError):
    """An engine invariant failed; this indicates a bug, never bad input."""


@dataclass(frozen=True)
class Trigger:
    rule: Rule
    hom: Tuple[Tuple[str, Term], ...]
    frontier_hom: Tuple[Tuple[str, Term], ...]

    def mapping(self) -> Dict[Term, Term]:
        return {Variable(v): t for v, t in self.hom}


@dataclass(frozen=True)
class TriggerRecord:
    round: int
    rule: str
    hom: Tuple[Tuple[str, Term], ...]
    produced: Tuple[Atom, ...]


def _hom_order(rule: Rule, h: Mapping[Term, Term]) -> tuple:
    return tuple(h[v].sort_key for v in rule.body_variables)


def _seed(pattern: Atom, fact: Atom) -> Optional[Dict[Term, Term]]:
    """The substitution mapping a body atom onto ``fact``, if any."""
    sub: Dict[Term, Term] = {}
    for t, u in zip(pattern.args, fact.args):
        if isinstance(t, Variable):
            cur = sub.setdefault(t, u)
            if cur is not u:
                return None
        elif t is not u:
            return None
    return sub


def _homs(rule: Rule, index: AtomIndex, delta: Optional[Dict[tuple, List[Atom]]] = None) -> Iterator[Dict[Term, Term]]:
    """Body homomorphisms of ``rule``; with ``delta``, only those using a delta atom (may repeat)."""
    if delta is None:
        yield from find_homomorphisms(rule.body, index)
        return
    for j, pattern in enumerate(rule.body):
        rest = rule.body[:j] + rule.body[j + 1:]
        for fact in delta.get(pattern.signature, ()):
            seed = _seed(pattern, fact)
            if seed is not None:
                yield from find_homomorphisms(rest, index, seed)


def _sorted_triggers(rule: Rule, homs: Dict[tuple, Dict[Term, Term]]) -> List[Trigger]:
    ordered = sorted(homs.items(), key=lambda kv: _hom_order(rule, kv[1]))
    return [Trigger(rule, key, canonical_map(h, rule.frontier)) for key, h in ordered]


def _triggers_of(rule: Rule, index: AtomIndex) -> List[Trigger]:
    body_vars = rule.body_variables
    return _sorted_triggers(rule, {canonical_map(h, body_vars): h for h in find_homomorphisms(rule.body, index)})


def _head(trig: Trigger, variant: str, key_by_frontier: bool) -> Tuple[Atom, ...]:
    rule = trig.rule
    sub = trig.mapping()
    for z in rule.existentials:
        sub[z] = Null(variant, rule.id, z.name, trig.frontier_hom if key_by_frontier else trig.hom)
    return tuple(sorted({apply_atom(sub, a) for a in rule.head}, key=atom_key))


def enumerate_triggers(instance: Iterable[Atom], rules: Iterable[Rule]) -> List[Trigger]:
    """Every trigger on ``instance``: rules in declaration order, homomorphisms by image sort key."""
    index = AtomIndex(instance)
    out: List[Trigger] = []
    for rule in rules:
        out.extend(_triggers_of(rule, index))
    return out


def skolem_function(rule: Rule, var: Variable) -> str:
    return f"f_{rule.id}_{var.name}"


def skolemize(rules: Iterable[Rule]) -> Ruleset:
    """Replace each existential ``z`` of rule ``r`` by ``f_r_z(frontier)`` (frontier in body order)."""
    out = []
    for r in rules:
        if not r.existentials:
            out.append(r)
            continue
        sub = {z: SkolemTerm(skolem_function(r, z), tuple(r.frontier)) for z in r.existentials}
        out.append(Rule(r.id, r.body, tuple(apply_atom(sub, a) for a in r.head)))
    return Ruleset(tuple(out))


def skolem_to_null(rules: Iterable[Rule]):
    """The per-round bijection from Skolem-chase terms to semi-oblivious nulls."""
    table = {}
    for r in rules:
        for z in r.existentials:
            table[skolem_function(r, z)] = (r, z)
    memo: Dict[Term, Term] = {}

    def convert(t: Term) -> Term:
        if not isinstance(t, SkolemTerm):
            return t
        got = memo.get(t)
        if got is None:
            r, z = table[t.fn]
            args = tuple(convert(a) for a in t.args)
            got = memo[t] = Null("so", r.id, z.name, canonical_map(dict(zip(r.frontier, args)), r.frontier))
        return got

    return convert


@dataclass
class ChaseResult:
    instance: Instance
    variant: str
    atoms: Instance
    rank_of: Dict[Atom, int]
    term_rank: Dict[Term, int]
    depth_of: Dict[Term, int]
    frdepth_of: Dict[Term, int]
    introducer: Dict[Term, Atom]
    terminated: bool
    chase_rank: float
    fuel: int
    fuel_used: int
    exhausted: Optional[str] = None
    trigger_log: List[TriggerRecord] = field(default_factory=list)
    round_sizes: List[int] = field(default_factory=list)

    def atoms_at(self, i: int) -> Instance:
        """Atoms of rank at most ``i``."""
        return Instance(a for a, r in self.rank_of.items() if r <= i)

    def new_at(self, i: int) -> List[Atom]:
        return sorted((a for a, r in self.rank_of.items() if r == i), key=atom_key)

    def generated_terms(self) -> List[Term]:
        return sorted((t for t, r in self.term_rank.items() if r > 0 and not isinstance(t, Constant)),
                      key=lambda t: (self.term_rank[t], t.sort_key))

    def summary(self) -> dict:
        return {
            "variant": self.variant,
            "terminated": self.terminated,
            "exhausted": self.exhausted,
            "rank": None if self.chase_rank == math.inf else int(self.chase_rank),
            "fuel": self.fuel,
            "rounds": self.fuel_used,
            "atoms": len(self.atoms),
            "new_per_round": list(self.round_sizes),
            "max_depth": max(self.depth_of.values(), default=0),
            "max_frontier_depth": max(self.frdepth_of.values(), default=0),
        }


def run_chase(instance: Iterable[Atom], rules: Iterable[Rule], variant: str = "o", fuel: int = 50,
              *, record_triggers: bool = True, atom_budget: Optional[int] = None) -> ChaseResult:
    """Breadth-first chase for at most ``fuel`` rounds.

    Round ``fuel + 1`` is computed only to decide termination; its atoms are
    discarded.  ``chase_rank`` is the last productive round, or ``math.inf``
    when the run did not terminate within fuel.
    """
    if fuel < 0:
        raise ValueError("fuel must be non-negative")
    variant = normalize_variant(variant)
    instance = Instance(instance)
    rules = rules if isinstance(rules, Ruleset) else Ruleset(tuple(rules))
    exec_rules = skolemize(rules) if variant == "skolem" else rules
    key_by_frontier = variant == "so"

    atoms = set(instance)
    rank_of: Dict[Atom, int] = {a: 0 for a in instance}
    term_rank: Dict[Term, int] = {t: 0 for t in instance.adom}
    depth_of: Dict[Term, int] = {t: 0 for t in instance.adom}
    frdepth_of: Dict[Term, int] = dict(depth_of)
    introducer: Dict[Term, Atom] = {}
    consumed = set()
    log: List[TriggerRecord] = []
    sizes: List[int] = []
    i = 0
    terminated = False
    exhausted = None

    # Semi-naive: after round 1 only triggers touching the previous round's new atoms
    # can be fresh; every other trigger was enumerated before and its key consumed.
    delta: Optional[Dict[tuple, List[Atom]]] = None
    while True:
        index = AtomIndex(atoms)
        fired = []
        round_keys = set()
        charged = set()
        produced: Dict[Atom, None] = {}
        limit = None if atom_budget is None else atom_budget - len(atoms)
        over = False
        for rule in exec_rules:
            body_vars = rule.body_variables
            homs: Dict[tuple, Dict[Term, Term]] = {}
            for h in _homs(rule, index, delta):
                c = canonical_map(h, body_vars)
                if c in homs:
                    continue
                homs[c] = h
                if limit is None:
                    continue
                # The atoms a trigger produces depend only on its key, so the budget
                # is charged while enumerating, before the firing order is known.
                trig = Trigger(rule, c, canonical_map(h, rule.frontier))
                key = (rule.id, trig.frontier_hom if key_by_frontier else c)
                if key in consumed or key in charged:
                    continue
                charged.add(key)
                produced.update(dict.fromkeys(a for a in _head(trig, variant, key_by_frontier) if a not in atoms))
                if len(produced) > limit:
                    over = True
                    break
            if over:
                break
            for trig in _sorted_triggers(rule, homs):
                key = (rule.id, trig.frontier_hom if key_by_frontier else trig.hom)
                if key in consumed or key in round_keys:
                    continue
                round_keys.add(key)
                fired.append(trig)
        staged = []
        if not over:
            for trig in fired:
                head = _head(trig, variant, key_by_frontier)
                staged.append((trig, head))
                produced.update(dict.fromkeys(a for a in head if a not in atoms))
        if not produced:
            terminated = True
            break
        if i == fuel:
            exhausted = "fuel"
            break
        if atom_budget is not None and len(atoms) + len(produced) > atom_budget:
            exhausted = "atoms"
            break
        i += 1
        consumed |= round_keys
        for trig, head in staged:
            rule = trig.rule
            if record_triggers:
                log.append(TriggerRecord(i, rule.id, trig.hom, head))
            body_imgs = [t for _, t in trig.hom]
            fr_imgs = [dict(trig.hom)[v.name] for v in rule.frontier]
            d = 1 + max((depth_of[t] for t in body_imgs), default=0)
            fd = 1 + max((frdepth_of[t] for t in fr_imgs), default=0)
            for a in head:
                for t in a.args:
                    if t in term_rank:
                        continue
                    term_rank[t] = i
                    introducer[t] = a
                    if isinstance(t, Constant):
                        depth_of[t] = frdepth_of[t] = 0
                    else:
                        depth_of[t] = d
                        frdepth_of[t] = fd
        new = sorted(produced, key=atom_key)
        for a in new:
            rank_of[a] = i
        atoms.update(new)
        sizes.append(len(new))
        delta = {}
        for a in new:
            delta.setdefault(a.signature, []).append(a)

    return ChaseResult(
        instance=instance, variant=variant, atoms=Instance(atoms), rank_of=rank_of,
        term_rank=term_rank, depth_of=depth_of, frdepth_of=frdepth_of, introducer=introducer,
        terminated=terminated, chase_rank=i if terminated else math.inf, fuel=fuel,
        fuel_used=i, exhausted=exhausted, trigger_log=log, round_sizes=sizes,
    )


def certain_answers(query: ConjunctiveQuery, instance: Iterable[Atom], rules: Iterable[Rule],
                    fuel: int = 50, variant: str = "o", atom_budget: Optional[int] = None) -> Tuple[frozenset, bool]:
    """Answers of ``query`` on the chase; ``complete`` is False when fuel or the atom budget ran out."""
    res = run_chase(instance, rules, variant, fuel, record_triggers=False, atom_budget=atom_budget)
    return answers(query, res.atoms), res.terminated


def rounds_isomorphic(a: ChaseResult, b: ChaseResult, i: int, convert=None) -> bool:
    """Whether rounds ``0..i`` of two runs agree up to a rank-preserving bijection.

    ``convert`` (e.g. :func:`skolem_to_null`) renames ``b``'s terms first; the
    bijection must fix the input's active domain.
    """
    fixed = a.instance.adom | b.instance.adom
    for k in range(i + 1):
        left = a.new_at(k)
        right = b.new_at(k)
        if convert is not None:
            right = [Atom(x.predicate, tuple(convert(t) for t in x.args)) for x in right]
        if len(left) != len(right):
            return False
    la = a.atoms_at(i)
    lb = b.atoms_at(i)
    if convert is not None:
        lb = [Atom(x.predicate, tuple(convert(t) for t in x.args)) for x in lb]
    h = find_isomorphism(la, lb, fixed=fixed)
    if h is None:
        return False
    rb = {}
    for x in b.atoms_at(i):
        y = Atom(x.predicate, tuple(convert(t) for t in x.args)) if convert else x
        rb[y] = b.rank_of[x]
    return all(rb[apply_atom(h, f)] == a.rank_of[f] for f in la)


@dataclass
class EmbeddingExtension:
    mapping: Dict[Term, Term]
    source: ChaseResult
    target: ChaseResult
    depth_kind: str
    checked_terms: int


def extend_embedding(phi: Mapping[Term, Term], instance: Iterable[Atom], target_instance: Iterable[Atom],
                     rules: Iterable[Rule], variant: str = "o", rounds: int = 3) -> EmbeddingExtension:
    """Extend an embedding ``I -> I'`` to round ``rounds`` of both chases and verify it.

    Generated terms are mapped structurally through their provenance:
    ``z(σ,π) -> z(σ,φ'∘π)`` for oblivious nulls, ``z(σ,κ) -> z(σ,φ'∘κ)`` for
    frontier-keyed nulls, ``f(args) -> f(φ'(args))`` for Skolem terms.  The
    result must embed round ``rounds`` of the source chase into the target one
    and preserve existential depth (oblivious) or frontier depth (otherwise).
    """
    variant = normalize_variant(variant)
    instance = Instance(instance)
    target_instance = Instance(target_instance)
    rules = rules if isinstance(rules, Ruleset) else Ruleset(tuple(rules))
    base = {t: phi.get(t, t) for t in instance.adom}
    if not {apply_atom(base, a) for a in instance} <= target_instance:
        raise ValueError("phi does not embed the source instance into the target instance")
    src = run_chase(instance, rules, variant, rounds, record_triggers=False)
    dst = run_chase(target_instance, rules, variant, rounds, record_triggers=False)
    memo: Dict[Term, Term] = dict(base)

    def image(t: Term) -> Term:
        got = memo.get(t)
        if got is not None:
            return got
        if isinstance(t, Null):
            got = Null(t.kind, t.rule, t.var, tuple((v, image(u)) for v, u in t.hom))
        elif isinstance(t, SkolemTerm):
            got = SkolemTerm(t.fn, tuple(image(u) for u in t.args))
        else:
            got = t
        memo[t] = got
        return got

    for a in src.atoms:
        img = Atom(a.predicate, tuple(image(t) for t in a.args))
        if img not in dst.atoms:
            raise InvariantError(f"extended embedding maps {a!r} outside the target chase")
    kinds = ("depth", "frontier depth") if variant == "o" else ("frontier depth",)
    checked = 0
    for t in src.term_rank:
        u = image(t)
        if "depth" in kinds and src.depth_of[t] != dst.depth_of[u]:
            raise InvariantError(f"existential depth not preserved for {t!r}")
        if src.frdepth_of[t] != dst.frdepth_of[u]:
            raise InvariantError(f"frontier depth not preserved for {t!r}")
        checked += 1
    mapping = {t: image(t) for t in src.term_rank}
    return EmbeddingExtension(mapping, src, dst, kinds[0], checked)
