import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from chasebound.chase import (
    certain_answers, enumerate_triggers, extend_embedding, normalize_variant,
    rounds_isomorphic, run_chase, skolem_to_null, skolemize,
)
from chasebound.core import Atom, Constant, Instance, Null, SkolemTerm, Variable, find_homomorphisms
from chasebound.repro import data_text
from chasebound.syntax import parse_instance, parse_query, parse_ruleset

from gen import naive_chase, random_instance, random_ruleset, signatures

a, b, c = Constant("a"), Constant("b"), Constant("c")
X, Y, Z = Variable("X"), Variable("Y"), Variable("Z")

EX1 = "p(X,Y) -> p(X,Z)."
SWAP = "p(X,Y,U) -> p(Y,X,Z)."
SIGMA1 = "p(X,Y), p(Y,Z) -> p(X,Z)."


def test_single_trigger_on_example_instance():
    (t,) = enumerate_triggers(parse_instance("p(a,b)."), parse_ruleset(EX1))
    assert t.mapping() == {X: a, Y: b}
    assert t.frontier_hom == (("X", a),)


def test_no_triggers_on_empty_instance():
    assert enumerate_triggers(Instance(), parse_ruleset(EX1 + SIGMA1)) == []


def test_transitivity_trigger_on_loop():
    (t,) = enumerate_triggers(parse_instance("p(a,a)."), parse_ruleset(SIGMA1))
    assert t.mapping() == {X: a, Y: a, Z: a}


def test_triggers_follow_declaration_order():
    rules = parse_ruleset("[r10] p(X,Y) -> q(X). [r2] p(X,Y) -> q(Y).")
    trigs = enumerate_triggers(parse_instance("p(b,a). p(a,b)."), rules)
    assert [(t.rule.id, t.mapping()[X]) for t in trigs] == [("r10", a), ("r10", b), ("r2", a), ("r2", b)]


def test_example_one_oblivious_diverges():
    res = run_chase(parse_instance("p(a,b)."), parse_ruleset(EX1), "o", 5)
    assert not res.terminated and res.chase_rank == math.inf
    assert res.round_sizes == [1] * 5
    assert all(a_.args[0] is a for a_ in res.atoms)


def test_example_one_semi_oblivious_stops():
    res = run_chase(parse_instance("p(a,b)."), parse_ruleset(EX1), "so", 10)
    assert res.terminated and res.chase_rank == 1
    (new,) = res.new_at(1)
    n = new.args[1]
    assert isinstance(n, Null) and n.hom == (("X", a),)


def test_swap_example_ranks_and_frontier_depths():
    rules = parse_ruleset(SWAP)
    res = run_chase(parse_instance("p(a,b,c)."), rules, "so", 10)
    assert res.chase_rank == 2
    terms = res.generated_terms()
    assert len(terms) == 2 and all(res.frdepth_of[t] == 1 for t in terms)
    o = run_chase(parse_instance("p(a,b,c)."), rules, "o", 8)
    assert not o.terminated
    assert [o.depth_of[t] for t in o.generated_terms()] == list(range(1, 9))


def test_fuel_zero_and_negative():
    res = run_chase(parse_instance("p(a,b)."), parse_ruleset(EX1), "so", 0)
    assert not res.terminated and res.fuel_used == 0
    res = run_chase(parse_instance("q(a)."), parse_ruleset(EX1), "o", 0)
    assert res.terminated and res.chase_rank == 0
    with pytest.raises(ValueError):
        run_chase(Instance(), parse_ruleset(EX1), "o", -1)
    with pytest.raises(ValueError):
        normalize_variant("restricted")


def test_empty_body_rule_depths():
    rules = parse_ruleset("-> p(Z). p(X) -> q(X,Z).")
    for variant in ("o", "so"):
        res = run_chase(Instance(), rules, variant, 5)
        assert res.terminated and res.chase_rank == 2
        depths = sorted((res.depth_of[t], res.frdepth_of[t]) for t in res.generated_terms())
        assert depths == [(1, 1), (2, 2)]


def test_head_constant_gets_depth_zero():
    res = run_chase(parse_instance("p(a)."), parse_ruleset("p(X) -> q(X,k,Z)."), "o", 3)
    k = Constant("k")
    assert res.term_rank[k] == 1 and res.depth_of[k] == 0
    assert k not in res.generated_terms()


def test_certain_answers_examples():
    q = parse_query("?(X) :- q(X).")
    ans, complete = certain_answers(q, parse_instance("p(a,b)."), parse_ruleset("p(X,Y) -> q(X)."))
    assert ans == {(a,)} and complete
    prop4 = parse_ruleset(data_text("prop4.erl"))
    ans, _ = certain_answers(parse_query(data_text("prop4_query.q")), parse_instance("p(a,c). p(c,b)."), prop4, fuel=0)
    assert ans == {()}
    ans, complete = certain_answers(parse_query("?(X) :- p(X,Y)."), Instance(), parse_ruleset(EX1))
    assert ans == frozenset() and complete


def test_skolemize():
    (r,) = skolemize(parse_ruleset("[s] " + EX1))
    assert r.head == (Atom("p", (X, SkolemTerm("f_s_Z", (X,)))),)
    dl = parse_ruleset(SIGMA1)
    assert skolemize(dl) == dl
    (e,) = skolemize(parse_ruleset("[e] p(X) -> q(Z)."))
    assert e.head[0].args == (SkolemTerm("f_e_Z", ()),)


def test_empty_frontier_skolem_matches_semi_oblivious():
    rules = parse_ruleset("[e] p(X) -> q(Z).")
    inst = parse_instance("p(a). p(b).")
    so = run_chase(inst, rules, "so", 5)
    sk = run_chase(inst, rules, "skolem", 5)
    assert so.chase_rank == sk.chase_rank == 1
    (atom,) = so.new_at(1)
    assert atom.args[0] is Null("so", "e", "Z", ())
    assert rounds_isomorphic(so, sk, 1, skolem_to_null(rules))


def test_trace_is_deterministic():
    rules = parse_ruleset(SIGMA1 + EX1)
    inst = parse_instance("p(a,b). p(b,c). p(c,a).")
    r1 = run_chase(inst, rules, "so", 6)
    r2 = run_chase(Instance(reversed(sorted(inst, key=repr))), rules, "so", 6)
    assert r1.trigger_log == r2.trigger_log


def test_extend_embedding_into_critical_instance():
    ext = extend_embedding({b: a}, parse_instance("p(a,b)."), parse_instance("p(a,a)."), parse_ruleset(EX1), "o", 3)
    assert ext.depth_kind == "depth"
    src = ext.source.generated_terms()
    assert [ext.source.depth_of[t] for t in src] == [1, 2, 3]
    assert [ext.target.depth_of[ext.mapping[t]] for t in src] == [1, 2, 3]
    assert [ext.source.term_rank[t] for t in src] == [ext.target.term_rank[ext.mapping[t]] for t in src]


def test_extend_embedding_identity():
    inst = parse_instance("p(a,b).")
    ext = extend_embedding({}, inst, inst, parse_ruleset(EX1 + SIGMA1), "so", 3)
    assert all(k is v for k, v in ext.mapping.items())


def test_frontier_depth_survives_where_depth_does_not():
    rules = parse_ruleset(data_text("lemma3.erl"))
    src = parse_instance(data_text("lemma3_instance.erl"))
    dst = parse_instance(data_text("lemma3_target.erl"))
    ext = extend_embedding({}, src, dst, rules, "so", 2)
    s_terms = [t for t in ext.source.generated_terms() if ext.source.term_rank[t] == 2]
    assert len(s_terms) == 1
    (t,) = s_terms
    u = ext.mapping[t]
    assert (ext.source.depth_of[t], ext.target.depth_of[u]) == (2, 1)
    assert ext.source.frdepth_of[t] == ext.target.frdepth_of[u] == 1
    # The oblivious chase names nulls by the whole trigger, so there depth survives too.
    assert extend_embedding({}, src, dst, rules, "o", 2).depth_kind == "depth"


def test_extend_embedding_rejects_non_embedding():
    with pytest.raises(ValueError):
        extend_embedding({}, parse_instance("p(a,b)."), parse_instance("p(a,a)."), parse_ruleset(EX1), "o", 1)


# ---------------------------------------------------------------- properties

seeds = st.integers(0, 2 ** 32 - 1)
VARIANTS = ("o", "so")


def case(seed, fe=False, max_atoms=4):
    rng = random.Random(seed)
    rules = random_ruleset(rng, fe=fe)
    inst = random_instance(rng, signatures(rules), max_atoms, 1)
    return rng, rules, inst


@settings(max_examples=150, deadline=None)
@given(seeds, st.sampled_from(VARIANTS))
def test_engine_matches_naive_oracle(seed, variant):
    _, rules, inst = case(seed, max_atoms=3)
    res = run_chase(inst, rules, variant, 3, atom_budget=400)
    if res.exhausted == "atoms":
        return
    rounds = naive_chase(inst, rules, variant, res.fuel_used)
    for i in range(res.fuel_used + 1):
        assert res.atoms_at(i) == rounds[i]


@settings(max_examples=150, deadline=None)
@given(seeds, st.sampled_from(VARIANTS + ("skolem",)))
def test_rounds_are_monotone_and_ranks_consistent(seed, variant):
    _, rules, inst = case(seed)
    res = run_chase(inst, rules, variant, 4, atom_budget=300)
    prev = set()
    for i in range(res.fuel_used + 1):
        cur = set(res.atoms_at(i))
        assert prev <= cur
        prev = cur
    for t in res.generated_terms():
        assert res.depth_of[t] <= res.rank_of[res.introducer[t]]
        assert res.frdepth_of[t] <= res.depth_of[t]


@settings(max_examples=120, deadline=None)
@given(seeds)
def test_oblivious_maps_onto_semi_oblivious(seed):
    _, rules, inst = case(seed)
    o = run_chase(inst, rules, "o", 4, atom_budget=200)
    so = run_chase(inst, rules, "so", 4, atom_budget=200)
    i = min(o.fuel_used, so.fuel_used)
    seed_map = {t: t for t in inst.adom}
    src, tgt = o.atoms_at(i), so.atoms_at(i)
    if len(src) > 60:
        return
    h = next(find_homomorphisms(src, tgt, seed_map), None)
    assert h is not None


@settings(max_examples=120, deadline=None)
@given(seeds)
def test_skolem_isomorphic_to_semi_oblivious(seed):
    _, rules, inst = case(seed)
    so = run_chase(inst, rules, "so", 4, atom_budget=400)
    sk = run_chase(inst, rules, "skolem", 4, atom_budget=400)
    assert so.round_sizes == sk.round_sizes
    assert so.terminated == sk.terminated
    conv = skolem_to_null(rules)
    for i in range(min(so.fuel_used, sk.fuel_used) + 1):
        assert {Atom(x.predicate, tuple(conv(t) for t in x.args)) for x in sk.atoms_at(i)} == set(so.atoms_at(i))


@settings(max_examples=150, deadline=None)
@given(seeds)
def test_fe_depth_equals_rank(seed):
    _, rules, inst = case(seed, fe=True)
    res = run_chase(inst, rules, "o", 5, atom_budget=300)
    for t in res.generated_terms():
        assert res.depth_of[t] == res.rank_of[res.introducer[t]]


@settings(max_examples=80, deadline=None)
@given(seeds, st.sampled_from(VARIANTS))
def test_identical_inputs_identical_logs(seed, variant):
    _, rules, inst = case(seed)
    r1 = run_chase(inst, rules, variant, 3, atom_budget=500)
    r2 = run_chase(Instance(list(inst)), rules, variant, 3, atom_budget=500)
    assert r1.trigger_log == r2.trigger_log
