"""Breadth-first UCQ rewriting with piece-unifiers.

A piece-unifier unifies a subset of query atoms (the piece) with atoms of a
renamed rule head.  Unification is a partition of terms kept in a union-find.
A class that contains an existential variable may contain nothing else from
the rule, no constant, no answer variable, and no query variable that also
occurs outside the piece.  Single-piece unifiers are found by closure from a
seed atom: once a query variable sits in an existential class, every query
atom mentioning it must join the piece.

One breadth-first step applies every aggregated unifier (a set of single-piece
unifiers on pairwise disjoint pieces, each with its own copy of its rule) to
the CQs added in the previous step, then prunes by subsumption.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Set, Tuple

from .core import (
    Atom, ConjunctiveQuery, Constant, Rule, Ruleset, Term, Variable, answers, apply_atom,
    atom_key, find_homomorphisms,
)
from .transforms import df_decompose

__all__ = [
    "ConjunctiveQuery", "PieceUnifier", "RewritingState", "KEstimate", "BudgetExhausted",
    "piece_unifiers", "apply_unifiers", "aggregated_unifiers", "aggregate_step", "rewrite",
    "cq_subsumes", "hd_queries", "body_queries", "estimate_kAF", "estimate_kFO",
    "ucq_answers", "canonical_cq",
]


class _UnionFind:
    def __init__(self, parent: Optional[Dict[Term, Term]] = None):
        self.parent: Dict[Term, Term] = dict(parent or {})

    def copy(self) -> "_UnionFind":
        return _UnionFind(self.parent)

    def find(self, x: Term) -> Term:
        p = self.parent.setdefault(x, x)
        if p is x:
            return x
        root = self.find(p)
        self.parent[x] = root
        return root

    def union(self, a: Term, b: Term) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra is not rb:
            if rb.sort_key < ra.sort_key:
                ra, rb = rb, ra
            self.parent[rb] = ra

    def classes(self) -> List[List[Term]]:
        groups: Dict[Term, List[Term]] = {}
        for t in sorted(self.parent, key=lambda t: t.sort_key):
            groups.setdefault(self.find(t), []).append(t)
        return list(groups.values())


def _rename_rule(rule: Rule, avoid: Set[str], tag: int) -> Tuple[Rule, Dict[Variable, Variable]]:
    ren: Dict[Variable, Variable] = {}
    for a in rule.body + rule.head:
        for t in a.args:
            if isinstance(t, Variable) and t not in ren:
                name = f"{t.name}_{tag}"
                while name in avoid:
                    name += "_"
                ren[t] = Variable(name)
    return Rule(rule.id, tuple(apply_atom(ren, a) for a in rule.body),
                tuple(apply_atom(ren, a) for a in rule.head)), ren


def _query_var_names(q: ConjunctiveQuery) -> Set[str]:
    return {t.name for a in q.atoms for t in a.args if isinstance(t, Variable)} | \
        {t.name for t in q.answers if isinstance(t, Variable)}


@dataclass(frozen=True)
class PieceUnifier:
    """A single-piece unifier: query atom ``i`` is unified with head atom ``assignment[i]``."""

    rule: Rule
    rule_index: int
    assignment: Tuple[Tuple[int, int], ...]
    classes: Tuple[Tuple[Term, ...], ...]

    @property
    def piece(self) -> frozenset:
        return frozenset(i for i, _ in self.assignment)

    def head_part(self) -> Tuple[int, ...]:
        return tuple(sorted({j for _, j in self.assignment}))


class _Context:
    """Per-query data shared by unifier search and aggregation."""

    def __init__(self, q: ConjunctiveQuery):
        self.q = q
        self.atoms = q.atoms
        self.avoid = _query_var_names(q)
        self.answer_vars = {t for t in q.answers if isinstance(t, Variable)}
        self.var_atoms: Dict[Variable, Set[int]] = {}
        for i, a in enumerate(self.atoms):
            for t in a.args:
                if isinstance(t, Variable):
                    self.var_atoms.setdefault(t, set()).add(i)


def _admissible(uf: _UnionFind, rule_terms: Set[Term], existentials: Set[Term], ctx: _Context,
                outside: Optional[Set[int]] = None) -> bool:
    """Partition validity; ``outside`` (query atom indices not in any piece) enables the separation check."""
    for cls in uf.classes():
        consts = {t for t in cls if isinstance(t, Constant)}
        if len(consts) > 1:
            return False
        ex = [t for t in cls if t in existentials]
        if not ex:
            continue
        if consts:
            return False
        if sum(1 for t in cls if t in rule_terms) != 1:
            return False
        for t in cls:
            if t in ctx.answer_vars:
                return False
            if outside is not None and t not in rule_terms and isinstance(t, Variable):
                if ctx.var_atoms.get(t, set()) & outside:
                    return False
    return True


def _unify_atoms(uf: _UnionFind, a: Atom, b: Atom) -> None:
    for s, t in zip(a.args, b.args):
        uf.union(s, t)


def _single_piece(ctx: _Context, rule: Rule, rule_index: int) -> List[PieceUnifier]:
    copy, _ = _rename_rule(rule, ctx.avoid, 0)
    rule_terms = {t for a in copy.body + copy.head for t in a.args if isinstance(t, Variable)}
    existentials = set(copy.existentials)
    out: List[PieceUnifier] = []
    seen = set()
    heads = list(copy.head)

    def dfs(assign: List[Tuple[int, int]], uf: _UnionFind):
        if not _admissible(uf, rule_terms, existentials, ctx):
            return
        piece = {i for i, _ in assign}
        ex_roots = {uf.find(z) for z in existentials if z in uf.parent}
        need = None
        if ex_roots:
            for i, a in enumerate(ctx.atoms):
                if i in piece:
                    continue
                if any(isinstance(t, Variable) and t in uf.parent and uf.find(t) in ex_roots for t in a.args):
                    need = i
                    break
        if need is None:
            classes = tuple(tuple(c) for c in uf.classes())
            key = (frozenset(piece), frozenset(frozenset(c) for c in classes))
            if key not in seen:
                seen.add(key)
                out.append(PieceUnifier(rule, rule_index, tuple(sorted(assign)), classes))
            return
        qa = ctx.atoms[need]
        for j, h in enumerate(heads):
            if h.signature == qa.signature:
                nuf = uf.copy()
                _unify_atoms(nuf, qa, h)
                dfs(assign + [(need, j)], nuf)

    for i, qa in enumerate(ctx.atoms):
        for j, h in enumerate(heads):
            if h.signature == qa.signature:
                uf = _UnionFind()
                _unify_atoms(uf, qa, h)
                dfs([(i, j)], uf)
    return out


def piece_unifiers(query: ConjunctiveQuery, rule: Rule) -> List[PieceUnifier]:
    """All single-piece unifiers of ``query`` with ``rule``, in deterministic order."""
    return _single_piece(_Context(query), rule, 0)


def _apply(ctx: _Context, members: Sequence[PieceUnifier]) -> Optional[ConjunctiveQuery]:
    uf = _UnionFind()
    rule_terms: Set[Term] = set()
    existentials: Set[Term] = set()
    bodies: List[Atom] = []
    for tag, m in enumerate(members):
        copy, _ = _rename_rule(m.rule, ctx.avoid, tag)
        rule_terms |= {t for a in copy.body + copy.head for t in a.args if isinstance(t, Variable)}
        existentials |= set(copy.existentials)
        for i, j in m.assignment:
            _unify_atoms(uf, ctx.atoms[i], copy.head[j])
        bodies.extend(copy.body)
    covered = set().union(*(m.piece for m in members))
    outside = set(range(len(ctx.atoms))) - covered
    if not _admissible(uf, rule_terms, existentials, ctx, outside):
        return None
    order = {t: k for k, t in enumerate(ctx.q.answers)}
    sub: Dict[Term, Term] = {}
    for cls in uf.classes():
        consts = [t for t in cls if isinstance(t, Constant)]
        ans = sorted((t for t in cls if t in order), key=order.__getitem__)
        qvars = [t for t in cls if t not in rule_terms and not isinstance(t, Constant)]
        rep = consts[0] if consts else ans[0] if ans else qvars[0] if qvars else cls[0]
        for t in cls:
            sub[t] = rep
    atoms = [apply_atom(sub, ctx.atoms[i]) for i in sorted(outside)] + [apply_atom(sub, a) for a in bodies]
    return canonical_cq(ConjunctiveQuery(tuple(atoms), tuple(sub.get(t, t) for t in ctx.q.answers)))


def apply_unifiers(query: ConjunctiveQuery, members: Sequence[PieceUnifier]) -> Optional[ConjunctiveQuery]:
    """The rewriting induced by a set of unifiers on disjoint pieces, or None if incompatible."""
    return _apply(_Context(query), members)


def aggregated_unifiers(query: ConjunctiveQuery, rules: Iterable[Rule]) -> Iterator[Tuple[Tuple[PieceUnifier, ...], ConjunctiveQuery]]:
    """Every compatible set of single-piece unifiers on disjoint pieces, with its rewriting."""
    ctx = _Context(query)
    singles: List[PieceUnifier] = []
    for k, r in enumerate(rules):
        singles.extend(_single_piece(ctx, r, k))

    def rec(start: int, chosen: List[PieceUnifier], used: frozenset):
        for n in range(start, len(singles)):
            u = singles[n]
            if u.piece & used:
                continue
            members = chosen + [u]
            rw = _apply(ctx, members)
            if rw is None:
                continue
            yield tuple(members), rw
            yield from rec(n + 1, members, used | u.piece)

    return rec(0, [], frozenset())


def canonical_cq(q: ConjunctiveQuery) -> ConjunctiveQuery:
    """Rename non-answer variables to ``U1, U2, ...`` by first occurrence in a name-blind order."""
    keep = {t for t in q.answers if isinstance(t, Variable)}
    taken = {t.name for t in keep}

    def blind(a: Atom):
        return (a.predicate, len(a.args),
                tuple(t.sort_key if (t in keep or not isinstance(t, Variable)) else (9,) for t in a.args))

    ren: Dict[Term, Term] = {}
    n = 0
    for a in sorted(q.atoms, key=lambda a: (blind(a), atom_key(a))):
        for t in a.args:
            if isinstance(t, Variable) and t not in keep and t not in ren:
                n += 1
                while f"U{n}" in taken:
                    n += 1
                ren[t] = Variable(f"U{n}")
    return ConjunctiveQuery(tuple(apply_atom(ren, a) for a in q.atoms), q.answers)


def cq_subsumes(q1: ConjunctiveQuery, q2: ConjunctiveQuery) -> bool:
    """True iff a homomorphism maps ``q1`` into ``q2`` and its answer tuple onto ``q2``'s, position-wise."""
    if q1.arity != q2.arity:
        raise ValueError(f"answer arity mismatch: {q1.arity} vs {q2.arity}")
    seed: Dict[Term, Term] = {}
    for s, t in zip(q1.answers, q2.answers):
        if isinstance(s, Constant):
            if s is not t:
                return False
        elif seed.setdefault(s, t) is not t:
            return False
    for _ in find_homomorphisms(q1.atoms, q2.atoms, seed):
        return True
    return False


def ucq_answers(ucq: Iterable[ConjunctiveQuery], instance) -> frozenset:
    out = set()
    for q in ucq:
        out |= answers(q, instance)
    return frozenset(out)


class BudgetExhausted(Exception):
    """Raised internally when a rewriting step exceeds its work budget."""


@dataclass
class RewritingState:
    ucq: List[ConjunctiveQuery]
    frontier: List[ConjunctiveQuery]
    steps: int = 0
    productive: int = 0
    saturated: bool = False
    budget_hit: bool = False
    sizes: List[int] = field(default_factory=list)
    generated: int = 0

    @classmethod
    def start(cls, query: ConjunctiveQuery) -> "RewritingState":
        q = canonical_cq(query)
        return cls(ucq=[q], frontier=[q], sizes=[1])

    def to_dict(self) -> dict:
        return {"steps": self.steps, "productive_steps": self.productive, "saturated": self.saturated,
                "budget_exhausted": self.budget_hit, "ucq_sizes": list(self.sizes), "generated": self.generated}


def aggregate_step(state: RewritingState, rules: Iterable[Rule], max_cqs: int = 5000,
                   max_atoms: int = 16) -> RewritingState:
    """One breadth-first step over the CQs added last time; prunes by subsumption."""
    rules = list(rules)
    ucq = list(state.ucq)
    new: List[ConjunctiveQuery] = []
    generated = state.generated
    budget_hit = False
    for q in state.frontier:
        for _, rw in aggregated_unifiers(q, rules):
            generated += 1
            if generated > max_cqs or len(rw.atoms) > max_atoms:
                budget_hit = True
                break
            if any(cq_subsumes(old, rw) for old in ucq) or \
                    any(cq_subsumes(old, rw) for old in new):
                continue
            ucq = [old for old in ucq if not cq_subsumes(rw, old)]
            new = [old for old in new if not cq_subsumes(rw, old)]
            new.append(rw)
        if budget_hit:
            break
    ucq.extend(new)
    saturated = not new and not budget_hit
    return RewritingState(ucq=ucq, frontier=new, steps=state.steps + 1,
                          productive=state.productive + (1 if new else 0), saturated=saturated,
                          budget_hit=budget_hit, sizes=state.sizes + [len(ucq)], generated=generated)


def rewrite(query: ConjunctiveQuery, rules: Iterable[Rule], fuel: int = 8, **budget) -> RewritingState:
    """Breadth-first rewriting until saturation, ``fuel`` steps, or the work budget."""
    rules = list(rules)
    state = RewritingState.start(query)
    while state.steps < fuel and not state.saturated and not state.budget_hit:
        state = aggregate_step(state, rules, **budget)
    return state


def _full_atomic(a: Atom) -> ConjunctiveQuery:
    """Generalize a head atom; repeated variables stay repeated, constants become fresh positions."""
    names: Dict[Term, Variable] = {}
    args = []
    for t in a.args:
        v = names.get(t) if isinstance(t, Variable) else None
        if v is None:
            v = Variable(f"X{len(args) + 1}")
            if isinstance(t, Variable):
                names[t] = v
        args.append(v)
    return ConjunctiveQuery((Atom(a.predicate, tuple(args)),), tuple(args))


def hd_queries(rules: Iterable[Rule]) -> List[ConjunctiveQuery]:
    """Full-atomic queries from the datalog heads of the decomposition, one per shape."""
    out: Dict[tuple, ConjunctiveQuery] = {}
    for r in df_decompose(rules).datalog_rules:
        for a in r.head:
            q = _full_atomic(a)
            out.setdefault((a.predicate, q.answers), q)
    return [out[k] for k in sorted(out, key=lambda k: (k[0], tuple(v.name for v in k[1])))]


def body_queries(rules: Iterable[Rule]) -> List[ConjunctiveQuery]:
    """``Q_body(σ)`` per rule: the body with the frontier as answer tuple."""
    return [ConjunctiveQuery(r.body, tuple(r.frontier)) for r in rules if r.body]


@dataclass
class KEstimate:
    saturated: bool
    k: Optional[int]
    per_query: List[dict]

    def to_dict(self) -> dict:
        return {"saturated": self.saturated, "k": self.k, "queries": self.per_query}


def _estimate(queries: List[ConjunctiveQuery], rules: Iterable[Rule], fuel: int, **budget) -> KEstimate:
    from .syntax import format_query
    rules = list(rules)
    per = []
    k = 0
    ok = True
    for q in queries:
        st = rewrite(q, rules, fuel, **budget)
        per.append({"query": format_query(q), **st.to_dict()})
        if st.saturated:
            k = max(k, st.productive)
        else:
            ok = False
    return KEstimate(ok, k if ok else None, per)


def estimate_kAF(rules: Iterable[Rule], fuel: int = 8, **budget) -> KEstimate:
    """Max productive rewriting steps over the full-atomic datalog-head queries."""
    return _estimate(hd_queries(rules), rules, fuel, **budget)


def estimate_kFO(rules: Iterable[Rule], fuel: int = 8, **budget) -> KEstimate:
    """As :func:`estimate_kAF`, over the rule-body queries."""
    rules = list(rules)
    return _estimate(body_queries(rules), rules, fuel, **budget)
