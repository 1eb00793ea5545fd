"""Termination, depth and boundedness analyses.

Everything undecidable is answered with a three-valued :class:`Verdict`;
``unknown`` always carries the budget that ran out and is never turned into
``no``.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Set, Tuple

from .chase import normalize_variant, run_chase
from .core import Atom, Constant, Instance, Rule, Ruleset, Term, Variable, atom_key
from .rewrite import estimate_kAF, estimate_kFO
from .transforms import critical_instance

__all__ = [
    "Verdict", "RulesetStats", "Infeasible", "detect_classes", "weakly_acyclic",
    "richly_acyclic", "ct_check", "depth_bound", "canonical_form", "enumerate_instances",
    "estimate_classes", "k_bounded", "k_bounded_fe_oblivious", "rank_bound", "classify_boundedness",
    "DEFAULT_CEILING", "DEFAULT_MAX_ATOMS",
]

DEFAULT_CEILING = 10 ** 6
# Critical-instance runs that grow past this many atoms are reported as unknown.
DEFAULT_MAX_ATOMS = 20000


@dataclass
class Verdict:
    check: str
    status: str
    variant: Optional[str] = None
    rationale: str = ""
    witness: Optional[dict] = None
    budget: Dict[str, object] = field(default_factory=dict)
    details: Dict[str, object] = field(default_factory=dict)
    components: List["Verdict"] = field(default_factory=list)

    def __post_init__(self):
        if self.status not in ("yes", "no", "unknown"):
            raise ValueError(f"bad verdict status {self.status!r}")
        if self.status == "no" and self.witness is None:
            raise ValueError("a 'no' verdict needs a witness")

    def to_dict(self) -> dict:
        d = {"check": self.check, "verdict": self.status}
        if self.variant is not None:
            d["variant"] = self.variant
        if self.rationale:
            d["rationale"] = self.rationale
        if self.witness is not None:
            d["witness"] = self.witness
        if self.budget:
            d["budget"] = dict(self.budget)
        d.update(self.details)
        if self.components:
            d["components"] = [c.to_dict() for c in self.components]
        return d


class Infeasible(Exception):
    """The instance space is larger than the configured ceiling."""

    def __init__(self, estimate: int, ceiling: int):
        self.estimate = estimate
        self.ceiling = ceiling
        super().__init__(f"about {estimate} isomorphism classes exceed the ceiling of {ceiling}")


def _positions(atoms: Iterable[Atom], var: Variable) -> List[Tuple[str, int]]:
    return [(a.predicate, i) for a in atoms for i, t in enumerate(a.args) if t is var]


def _dependency_graph(rules: Iterable[Rule], all_body_vars: bool):
    normal: Dict[tuple, Set[tuple]] = {}
    special: Dict[tuple, Set[tuple]] = {}
    for r in rules:
        sources = r.body_variables if all_body_vars else r.frontier
        ex_pos = [p for z in r.existentials for p in _positions(r.head, z)]
        for x in sources:
            for src in _positions(r.body, x):
                for dst in _positions(r.head, x):
                    normal.setdefault(src, set()).add(dst)
                if ex_pos and (all_body_vars or x in r.frontier):
                    special.setdefault(src, set()).update(ex_pos)
    return normal, special


def _has_special_cycle(normal, special) -> bool:
    succ: Dict[tuple, Set[tuple]] = {}
    for g in (normal, special):
        for s, ds in g.items():
            succ.setdefault(s, set()).update(ds)

    def reaches(start, goal) -> bool:
        seen = {start}
        stack = [start]
        while stack:
            n = stack.pop()
            if n == goal:
                return True
            for m in succ.get(n, ()):
                if m not in seen:
                    seen.add(m)
                    stack.append(m)
        return False

    return any(reaches(d, s) for s, ds in special.items() for d in ds)


def weakly_acyclic(rules: Iterable[Rule]) -> bool:
    """No cycle through a special edge in the position graph (edges from frontier occurrences)."""
    return not _has_special_cycle(*_dependency_graph(list(rules), all_body_vars=False))


def richly_acyclic(rules: Iterable[Rule]) -> bool:
    """As :func:`weakly_acyclic`, with special edges from every body variable."""
    return not _has_special_cycle(*_dependency_graph(list(rules), all_body_vars=True))


@dataclass
class RulesetStats:
    b: int
    arities: Dict[str, int]
    is_datalog: bool
    is_fe: bool
    is_linear: bool
    is_guarded: bool
    weakly_acyclic: bool
    richly_acyclic: bool

    def to_dict(self) -> dict:
        return {
            "b": self.b, "arities": dict(sorted(self.arities.items())), "datalog": self.is_datalog,
            "fe": self.is_fe, "linear": self.is_linear, "guarded": self.is_guarded,
            "weakly_acyclic": self.weakly_acyclic, "richly_acyclic": self.richly_acyclic,
        }


def detect_classes(rules: Iterable[Rule]) -> RulesetStats:
    rules = list(rules)

    def guarded(r: Rule) -> bool:
        vs = set(r.body_variables)
        return not r.body or any(vs <= set(a.args) for a in r.body)

    return RulesetStats(
        b=max((len(r.body) for r in rules), default=0),
        arities={p: n for r in rules for a in r.body + r.head for p, n in [a.signature]},
        is_datalog=all(r.is_datalog for r in rules),
        is_fe=all(r.is_fe for r in rules),
        is_linear=all(len(r.body) == 1 for r in rules),
        is_guarded=all(guarded(r) for r in rules),
        weakly_acyclic=weakly_acyclic(rules),
        richly_acyclic=richly_acyclic(rules),
    )


def _critical(rules: Ruleset) -> Instance:
    return critical_instance(rules.predicates(), rules.constants())


def _as_ruleset(rules) -> Ruleset:
    return rules if isinstance(rules, Ruleset) else Ruleset(tuple(rules))


def _ct_variant(variant: str) -> str:
    v = normalize_variant(variant)
    return "so" if v == "skolem" else v


def ct_check(rules: Iterable[Rule], variant: str = "o", fuel: int = 50,
             max_atoms: int = DEFAULT_MAX_ATOMS) -> Verdict:
    """Chase termination on all instances, decided through the critical instance.

    A terminating critical run gives ``yes`` with its rank.  Otherwise rich
    acyclicity (oblivious) or weak acyclicity (semi-oblivious) still proves
    termination; failing both, the answer is ``unknown``.
    """
    rules = _as_ruleset(rules)
    variant = _ct_variant(variant)
    res = run_chase(_critical(rules), rules, variant, fuel, record_triggers=False, atom_budget=max_atoms)
    budget = {"fuel": fuel, "max_atoms": max_atoms}
    if res.terminated:
        return Verdict("ct", "yes", variant, "critical instance chase terminates",
                       details={"critical_rank": int(res.chase_rank)}, budget=budget)
    if variant == "o" and richly_acyclic(rules):
        return Verdict("ct", "yes", variant, "richly acyclic", budget=budget)
    if variant == "so" and weakly_acyclic(rules):
        return Verdict("ct", "yes", variant, "weakly acyclic", budget=budget)
    what = "fuel" if res.exhausted == "fuel" else "the atom budget"
    return Verdict("ct", "unknown", variant, f"critical instance chase exceeded {what}",
                   budget=budget, details={"rounds": res.fuel_used})


def depth_bound(rules: Iterable[Rule], variant: str = "o", fuel: int = 50,
                max_atoms: int = DEFAULT_MAX_ATOMS) -> Optional[int]:
    """``k_d`` from the critical-instance chase, or None when it does not terminate within budget.

    Oblivious: the last round that introduced a new term.  Semi-oblivious:
    the largest frontier depth of any term.
    """
    rules = _as_ruleset(rules)
    variant = _ct_variant(variant)
    res = run_chase(_critical(rules), rules, variant, fuel, record_triggers=False, atom_budget=max_atoms)
    if not res.terminated:
        return None
    if variant == "o":
        return max((r for t, r in res.term_rank.items() if not isinstance(t, Constant)), default=0)
    return max(res.frdepth_of.values(), default=0)


# Instances are enumerated as canonical forms: tuples of (predicate, arity, args)
# where an argument is (0, name) for a fixed constant or (1, label) otherwise.

def _encode(pred: str, args: Sequence, labels: Dict) -> Tuple[tuple, Dict]:
    out = []
    added = {}
    for t in args:
        if isinstance(t, Constant):
            out.append((0, t.name))
            continue
        lab = labels.get(t)
        if lab is None:
            lab = added.get(t)
        if lab is None:
            lab = added[t] = len(labels) + len(added)
        out.append((1, lab))
    return (pred, len(args), tuple(out)), added


def _canonical(atoms: Sequence[Tuple[str, tuple]]) -> tuple:
    """Lexicographically least first-appearance encoding over all atom orders."""
    atoms = list(dict.fromkeys(atoms))
    best: List[Optional[list]] = [None]

    def rec(remaining: List[int], labels: Dict, prefix: list):
        if best[0] is not None and prefix > best[0][:len(prefix)]:
            return
        if not remaining:
            if best[0] is None or prefix < best[0]:
                best[0] = list(prefix)
            return
        cands = []
        for i in remaining:
            enc, added = _encode(atoms[i][0], atoms[i][1], labels)
            cands.append((enc, i, added))
        low = min(c[0] for c in cands)
        for enc, i, added in cands:
            if enc != low:
                continue
            nl = dict(labels)
            nl.update(added)
            rec([j for j in remaining if j != i], nl, prefix + [enc])

    rec(list(range(len(atoms))), {}, [])
    return tuple(best[0] or ())


def canonical_form(instance: Iterable[Atom], fixed: Iterable[Term] = ()) -> tuple:
    """Isomorphism-invariant form of a ground instance; ``fixed`` constants are never relabeled."""
    fixed = frozenset(fixed)
    atoms = [(a.predicate, tuple(t if t in fixed else ("t", t) for t in a.args)) for a in instance]
    return _canonical(atoms)


def _default_pool(n: int, avoid: Set[str]) -> List[str]:
    names = []
    for k in itertools.count():
        if len(names) >= n:
            break
        name = chr(ord("a") + k) if k < 26 else f"c{k}"
        if name not in avoid:
            names.append(name)
    return names


def _materialize(form: tuple, pool: Sequence[str]) -> Instance:
    out = []
    for pred, _, args in form:
        out.append(Atom(pred, tuple(Constant(v) if kind == 0 else Constant(pool[v]) for kind, v in args)))
    return Instance(out)


def estimate_classes(predicates: Iterable[Tuple[str, int]], max_atoms: int, n_fixed: int = 0) -> int:
    """A lower bound on the number of isomorphism classes with at most ``max_atoms`` atoms.

    For ``n`` atoms over ``m`` labels there are ``C(A_m, n)`` labelled instances
    (``A_m`` the number of possible atoms) and each class has at most ``m!`` of them.
    """
    preds = list(set(predicates))
    if not preds or max_atoms <= 0:
        return 1
    maxar = max(a for _, a in preds)
    best = 1
    for n in range(1, max_atoms + 1):
        for m in range(1, max(1, n * maxar) + 1):
            a_m = sum((m + n_fixed) ** ar for _, ar in preds)
            if a_m < n:
                continue
            best = max(best, math.comb(a_m, n) // math.factorial(m))
    return best


def enumerate_instances(predicates: Iterable[Tuple[str, int]], max_atoms: int,
                        constant_pool: Optional[Sequence[str]] = None, *, fixed: Iterable[Term] = (),
                        min_atoms: Optional[int] = None, ceiling: int = DEFAULT_CEILING) -> Iterator[Instance]:
    """Ground instances with ``min_atoms..max_atoms`` atoms, one per isomorphism class.

    Sizes ascend; within a size, classes come in canonical-form order.  Size
    ``n + 1`` classes are obtained by adding one atom to every size-``n`` class.
    ``min_atoms`` defaults to 1 (0 when ``max_atoms`` is 0).
    """
    preds = sorted(set(predicates))
    fixed = sorted(set(fixed), key=lambda t: t.sort_key)
    if min_atoms is None:
        min_atoms = min(1, max_atoms)
    maxar = max((a for _, a in preds), default=0)
    need = max_atoms * maxar
    avoid = {t.name for t in fixed}
    pool = list(constant_pool) if constant_pool is not None else _default_pool(need, avoid)
    if len(pool) < need:
        raise ValueError(f"constant pool of {len(pool)} is smaller than {need}")
    est = estimate_classes(preds, max_atoms, len(fixed))
    if est > ceiling:
        raise Infeasible(est, ceiling)
    return _enumerate(preds, max_atoms, pool, fixed, min_atoms, ceiling)


def _enumerate(preds, max_atoms, pool, fixed, min_atoms, ceiling) -> Iterator[Instance]:
    if min_atoms == 0:
        yield Instance()
    level = [()]
    total = 1
    for n in range(1, max_atoms + 1):
        nxt = set()
        for form in level:
            used = 1 + max((v for _, _, args in form for kind, v in args if kind == 1), default=-1)
            base = [(p, tuple(("t", v) if kind == 1 else Constant(v) for kind, v in args)) for p, _, args in form]
            present = set(base)
            for pred, ar in preds:
                for args in _arg_patterns(ar, used, fixed):
                    atom = (pred, args)
                    if atom in present:
                        continue
                    nxt.add(_canonical(base + [atom]))
            if total + len(nxt) > ceiling:
                raise Infeasible(total + len(nxt), ceiling)
        level = sorted(nxt)
        total += len(level)
        if n >= min_atoms:
            for form in level:
                yield _materialize(form, pool)


def _arg_patterns(arity: int, used: int, fixed: Sequence[Term]) -> Iterator[tuple]:
    def rec(i: int, fresh: int, acc: list):
        if i == arity:
            yield tuple(acc)
            return
        for c in fixed:
            yield from rec(i + 1, fresh, acc + [c])
        for v in range(fresh):
            yield from rec(i + 1, fresh, acc + [("t", v)])
        yield from rec(i + 1, fresh + 1, acc + [("t", fresh)])

    return rec(0, used, [])


def _rounds(k: int) -> str:
    return f"{k} round" if k == 1 else f"{k} rounds"


def _format_atoms(atoms) -> List[str]:
    from .syntax import format_atom, TermPrinter
    p = TermPrinter()
    return [format_atom(a, p) for a in sorted(atoms, key=atom_key)]


def _exceeds(args) -> bool:
    instance, rules, variant, k = args
    return not run_chase(instance, rules, variant, k, record_triggers=False).terminated


_WITNESS_FACTS = 20


def _witness(instance: Instance, rules: Ruleset, variant: str, k: int, max_atoms: Optional[int] = None) -> dict:
    """The failing instance plus (up to 20 of) the facts it derives at round ``k + 1``."""
    res = run_chase(instance, rules, variant, k + 1, record_triggers=False, atom_budget=max_atoms)
    new = res.new_at(k + 1) if res.fuel_used > k else []
    w = {"instance": _format_atoms(instance), "fact_of_rank": k + 1,
         "facts": _format_atoms(new)[:_WITNESS_FACTS]}
    if len(new) > _WITNESS_FACTS or res.fuel_used <= k:
        w["facts_total"] = len(new) if res.fuel_used > k else None
    return w


def k_bounded(rules: Iterable[Rule], k: int, variant: str = "o", ceiling: int = DEFAULT_CEILING,
              jobs: int = 1, batch: int = 256) -> Verdict:
    """Decide whether every instance's chase stops within ``k`` rounds.

    It suffices to try ground instances of at most ``b^(k+1)`` atoms (``b`` the
    largest body).  The witness of a ``no`` is the first failing instance in
    enumeration order, whatever ``jobs`` is.
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    rules = _as_ruleset(rules)
    variant = _ct_variant(variant)
    b = max(1, max((len(r.body) for r in rules), default=1))
    max_atoms = b ** (k + 1)
    stream = enumerate_instances(rules.predicates(), max_atoms, fixed=rules.constants(),
                                 min_atoms=0, ceiling=ceiling)
    examined = 0
    pool = ProcessPoolExecutor(jobs) if jobs > 1 else None
    try:
        while True:
            chunk = list(itertools.islice(stream, batch))
            if not chunk:
                break
            work = [(inst, rules, variant, k) for inst in chunk]
            flags = list(pool.map(_exceeds, work, chunksize=16)) if pool else None
            for n, inst in enumerate(chunk):
                bad = flags[n] if flags is not None else _exceeds(work[n])
                if bad:
                    examined += n + 1
                    return Verdict("k-bounded", "no", variant, f"chase of a {len(inst)}-atom instance is productive at round {k + 1}",
                                   witness=_witness(inst, rules, variant, k),
                                   budget={"max_atoms": max_atoms},
                                   details={"k": k, "instances_examined": examined})
            examined += len(chunk)
    finally:
        if pool:
            pool.shutdown()
    return Verdict("k-bounded", "yes", variant, f"all instances of at most {max_atoms} atoms stop within {_rounds(k)}",
                   budget={"max_atoms": max_atoms}, details={"k": k, "instances_examined": examined})


def k_bounded_fe_oblivious(rules: Iterable[Rule], k: int, max_atoms: Optional[int] = None) -> Verdict:
    """k-boundedness of FE rules under the oblivious chase, from the critical instance alone.

    With ``max_atoms`` set, a critical run that outgrows it before round
    ``k + 1`` is decided gives ``unknown``.
    """
    rules = _as_ruleset(rules)
    bad = [r.id for r in rules if not r.is_fe]
    if bad:
        raise ValueError(f"rules {', '.join(bad)} are not fully existential; use k_bounded instead")
    crit = _critical(rules)
    res = run_chase(crit, rules, "o", k, record_triggers=False, atom_budget=max_atoms)
    if res.terminated:
        return Verdict("k-bounded", "yes", "o", f"critical instance chase stops within {_rounds(k)}",
                       details={"k": k, "critical_rank": int(res.chase_rank)})
    if res.exhausted == "atoms":
        return Verdict("k-bounded", "unknown", "o", f"critical instance chase outgrew {max_atoms} atoms",
                       budget={"max_atoms": max_atoms}, details={"k": k})
    return Verdict("k-bounded", "no", "o", f"critical instance chase is productive at round {k + 1}",
                   witness=_witness(crit, rules, "o", k, max_atoms), details={"k": k})


def rank_bound(kd: int, k: int, variant: str = "o") -> int:
    """Upper bound on the chase rank from a depth bound and a rewriting k.

    Oblivious: ``kd * (k_AF + 1) + k_AF``, since k_AF bounds the rank of the
    facts themselves.  Semi-oblivious: k_FO only bounds the rank of some
    trigger body with the same frontier image, so the produced fact may sit
    one round later: ``kd * (k_FO + 1) + k_FO + 1``.
    """
    base = kd * (k + 1) + k
    return base if _ct_variant(variant) == "o" else base + 1


def classify_boundedness(rules: Iterable[Rule], variant: str = "o", fuel: int = 50, rewrite_fuel: int = 8,
                         ceiling: int = DEFAULT_CEILING, max_k: int = 4, jobs: int = 1,
                         max_atoms: int = DEFAULT_MAX_ATOMS, rewrite_cqs: int = 5000,
                         rewrite_atoms: int = 16) -> Verdict:
    """Boundedness from termination plus rewritability, with k-boundedness as fallback evidence.

    Oblivious: CT and saturation of the full-atomic rewriting give the bound
    ``k_d*(k_AF+1)+k_AF``; for FE rules CT alone suffices (bound ``k_d``).
    Semi-oblivious: CT and saturation of the rule-body rewriting, with ``k_d``
    the frontier depth bound.  Otherwise k-boundedness is tried for
    ``k = 0..max_k`` (from the critical instance alone for FE rules under the
    oblivious chase); a ``yes`` there is a proof, failures remain ``unknown``.
    ``rewrite_cqs`` and ``rewrite_atoms`` cap the CQs generated and the CQ
    size during rewriting.
    """
    rules = _as_ruleset(rules)
    variant = _ct_variant(variant)
    stats = detect_classes(rules)
    ct = ct_check(rules, variant, fuel, max_atoms)
    comps = [ct]
    details = {"classes": stats.to_dict()}
    kd = depth_bound(rules, variant, fuel, max_atoms) if ct.status == "yes" else None
    if kd is not None:
        details["k_d"] = kd
    if variant == "o" and stats.is_fe:
        if ct.status == "yes" and kd is not None:
            details["bound"] = kd
            return Verdict("classify", "yes", variant, "fully existential and terminating on the critical instance",
                           budget={"fuel": fuel}, details=details, components=comps)
    else:
        est = (estimate_kAF if variant == "o" else estimate_kFO)(rules, rewrite_fuel, max_cqs=rewrite_cqs,
                                                                       max_atoms=rewrite_atoms)
        rw_budget = {"fuel": rewrite_fuel, "max_cqs": rewrite_cqs, "max_atoms": rewrite_atoms}
        name = "k_AF" if variant == "o" else "k_FO"
        comps.append(Verdict("rewrite", "yes" if est.saturated else "unknown", variant,
                             f"{name} rewriting " + ("saturated" if est.saturated else "did not saturate"),
                             budget=rw_budget, details={name: est.k}))
        if est.saturated:
            details[name] = est.k
        if ct.status == "yes" and est.saturated and kd is not None:
            details["bound"] = rank_bound(kd, est.k, variant)
            return Verdict("classify", "yes", variant, f"terminating and {name} rewriting saturates",
                           budget={"fuel": fuel, "rewrite_fuel": rewrite_fuel}, details=details, components=comps)
    failed = []
    fe_path = variant == "o" and stats.is_fe
    for k in range(max_k + 1):
        try:
            v = k_bounded_fe_oblivious(rules, k, max_atoms) if fe_path else k_bounded(rules, k, variant, ceiling, jobs)
        except Infeasible as exc:
            comps.append(Verdict("k-bounded", "unknown", variant, str(exc), details={"k": k, "estimate": exc.estimate}))
            break
        comps.append(v)
        if v.status == "unknown":
            break
        if v.status == "yes":
            details["bound"] = k
            return Verdict("classify", "yes", variant, f"{k}-bounded", budget={"fuel": fuel, "max_k": max_k},
                           details=details, components=comps)
        failed.append(k)
    details["not_k_bounded_for"] = failed
    return Verdict("classify", "unknown", variant, "no bound proven within budget",
                   budget={"fuel": fuel, "rewrite_fuel": rewrite_fuel, "max_k": max_k, "ceiling": ceiling,
                           "max_atoms": max_atoms},
                   details=details, components=comps)
