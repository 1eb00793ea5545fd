import random

import pytest
from hypothesis import given, settings, strategies as st

from chasebound.chase import rounds_isomorphic, run_chase
from chasebound.core import Atom, Constant, Instance, Null, Rule, Variable
from chasebound.syntax import format_ruleset, parse_instance, parse_ruleset
from chasebound.transforms import (
    PLUS, critical_instance, df_decompose, fe_decode, fe_encode, fe_encode_instance, fe_encode_rules,
    freeze, psi_transform,
)

from gen import random_instance, random_ruleset, signatures

a, b = Constant("a"), Constant("b")
X, Y, Z = Variable("X"), Variable("Y"), Variable("Z")


def test_df_splits_mixed_rule():
    res = df_decompose(parse_ruleset("[s] p(X,Y) -> p(X,Z), q(X)."))
    assert format_ruleset(res.rules) == "[s_fe] p(X,Y) -> p(X,Z).\n[s_d1] p(X,Y) -> q(X).\n"
    assert res.origin == {"s_fe": "s", "s_d1": "s"}
    assert [r.id for r in res.fe_rules] == ["s_fe"]
    assert [r.id for r in res.datalog_rules] == ["s_d1"]


def test_df_datalog_and_fe_rules():
    res = df_decompose(parse_ruleset("[t] p(X,Y) -> q(X), q(Y). [u] p(X,Y) -> p(Y,Z)."))
    assert [(r.id, len(r.head)) for r in res.rules] == [("t_d1", 1), ("t_d2", 1), ("u", 1)]
    assert res.fe_rules[0] == parse_ruleset("[u] p(X,Y) -> p(Y,Z).")[0]


def test_df_output_count_and_head_cover():
    rng = random.Random(7)
    for _ in range(50):
        rules = random_ruleset(rng)
        res = df_decompose(rules)
        expected = sum(1 for r in rules if any(set(a_.args) & set(r.existentials) for a_ in r.head))
        expected += sum(1 for r in rules for a_ in r.head if not set(a_.args) & set(r.existentials))
        assert len(res.rules) == expected
        for r in rules:
            heads = [h for o in res.rules if res.origin[o.id] == r.id for h in o.head]
            assert sorted(heads, key=repr) == sorted(r.head, key=repr)
        assert all(r.is_fe for r in res.fe_rules) and all(r.is_datalog and len(r.head) == 1 for r in res.datalog_rules)


def test_critical_instance():
    assert critical_instance([("p", 2)]) == Instance([Atom("p", (a, a))])
    assert critical_instance([("p", 1), ("q", 2)]) == Instance([Atom("p", (a,)), Atom("q", (a, a))])
    assert critical_instance([("p", 0)]) == Instance([Atom("p", ())])
    k = Constant("k")
    assert critical_instance([("p", 1)], [k]) == Instance([Atom("p", (a,)), Atom("p", (k,))])


def test_psi_examples():
    out = psi_transform(parse_ruleset("[s] p(X,Y) -> p(X,Z)."))
    assert format_ruleset(out) == "[s_in] p(X,Y) -> p_s(X).\n[s_out] p_s(X) -> p(X,Z).\n"
    out = psi_transform(parse_ruleset("[e] p(X) -> q(Z)."))
    assert format_ruleset(out) == "[e_in] p(X) -> p_e().\n[e_out] p_e() -> q(Z).\n"
    out = psi_transform(parse_ruleset("[s2] p(X,Y), p(W,Z) -> p(X,Z)."))
    assert format_ruleset(out) == "[s2_in] p(X,Y), p(W,Z) -> p_s2(X,Z).\n[s2_out] p_s2(X,Z) -> p(X,Z).\n"


def test_psi_avoids_name_collisions():
    out = psi_transform(parse_ruleset("[s] p_s(X) -> p_s(Z)."))
    assert len(out) == 2
    fresh = out[0].head[0].predicate
    assert fresh != "p_s" and fresh.startswith("p_s")


def test_fe_encode_examples():
    inst = fe_encode_instance(parse_instance("p(a,b)."))
    (atom,) = inst
    assert atom.predicate == "p" + PLUS and atom.args[:2] == (a, b) and isinstance(atom.args[2], Variable)
    (r,) = fe_encode_rules(parse_ruleset("p(X,Y) -> p(Y,X)."))
    assert r.body == (Atom("p+", (X, Y, Variable("Z1"))),)
    assert r.head == (Atom("p+", (Y, X, Variable("Z2"))),)
    assert r.existentials == (Variable("Z2"),) and r.is_fe


def test_fe_encode_distinct_fresh_terms_per_fact():
    inst = fe_encode_instance(parse_instance("p(a,b). p(b,a). q(a)."))
    lasts = [x.args[-1] for x in inst]
    assert len(set(lasts)) == 3


def test_fe_decode():
    inst = parse_instance("p(a,b). q(b).")
    assert fe_decode(fe_encode_instance(inst)) == inst
    with pytest.raises(ValueError):
        fe_decode(parse_instance("p+(a,Z). q(a)."))


def test_freeze():
    inst, bij = freeze(parse_instance("p(a,X)."))
    assert inst == parse_instance("p(a,c_X).") and bij == {X: Constant("c_X")}
    ground = parse_instance("p(a,b).")
    assert freeze(ground) == (ground, {})
    inst, bij = freeze(parse_instance("p(X,Y). q(Y)."))
    assert inst == parse_instance("p(c_X,c_Y). q(c_Y).")


def test_freeze_avoids_existing_constants_and_handles_nulls():
    inst, bij = freeze(Instance([Atom("p", (Constant("c_X"), X)), Atom("q", (Null("o", "r", "Z", ()),))]))
    assert len(set(bij.values())) == 2
    assert Constant("c_X") not in bij.values()
    assert all(isinstance(t, Constant) for t in inst.adom)


def test_df_footnote_example():
    rules = parse_ruleset("p(X,Y) -> p(X,Z), q(X,Y).")
    inst = parse_instance("p(a,b).")
    assert not run_chase(inst, rules, "so", 50).terminated
    res = run_chase(inst, df_decompose(rules).rules, "so", 50)
    # The datalog part keeps Y in its frontier, so q(a,_) on the new null needs a second round.
    assert res.terminated and res.chase_rank == 2


# ---------------------------------------------------------------- properties

seeds = st.integers(0, 2 ** 32 - 1)


def _case(seed):
    rng = random.Random(seed)
    rules = random_ruleset(rng)
    return rules, random_instance(rng, signatures(rules), 4, 1)


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_df_preserves_oblivious_rounds(seed):
    rules, inst = _case(seed)
    full = run_chase(inst, rules, "o", 4, atom_budget=150)
    dfr = run_chase(inst, df_decompose(rules).rules, "o", 4, atom_budget=150)
    i = min(full.fuel_used, dfr.fuel_used)
    assert full.round_sizes[:i] == dfr.round_sizes[:i]
    assert rounds_isomorphic(full, dfr, i)


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_psi_rank_relation(seed):
    rules, inst = _case(seed)
    so = run_chase(inst, rules, "so", 6, atom_budget=300)
    if not so.terminated:
        return
    r = int(so.chase_rank)
    psi = run_chase(inst, psi_transform(rules), "o", 2 * r + 2)
    assert psi.terminated and 2 * r <= psi.chase_rank <= 2 * r + 1


@settings(max_examples=100, deadline=None)
@given(seeds, st.integers(0, 3))
def test_psi_termination_within_fuel(seed, r):
    rules, inst = _case(seed)
    so = run_chase(inst, rules, "so", r, atom_budget=300)
    if so.exhausted == "atoms":
        return
    psi = run_chase(inst, psi_transform(rules), "o", 2 * r + 1, atom_budget=600)
    if psi.exhausted == "atoms":
        return
    assert so.terminated == psi.terminated


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_fe_encoding_round_trip_and_shape(seed):
    rules, inst = _case(seed)
    enc_rules, enc_inst = fe_encode(rules, inst)
    assert fe_decode(enc_inst) == inst
    assert all(r.is_fe for r in enc_rules)
    assert len(enc_rules) == len(rules)


@settings(max_examples=100, deadline=None)
@given(seeds, seeds)
def test_fe_encoding_is_injective(s1, s2):
    r1, i1 = _case(s1)
    r2, i2 = _case(s2)
    e1, e2 = fe_encode(r1, i1), fe_encode(r2, i2)
    if e1[0] == e2[0]:
        assert r1 == r2
    if fe_decode(e1[1]) == fe_decode(e2[1]):
        assert i1 == i2


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_fe_encoding_never_lowers_rank(seed):
    rules, inst = _case(seed)
    so = run_chase(inst, rules, "so", 6, atom_budget=300)
    if not so.terminated:
        return
    er, ei = fe_encode(rules, inst)
    enc = run_chase(ei, er, "so", 8, atom_budget=2000)
    assert not enc.terminated or enc.chase_rank >= so.chase_rank


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_fe_encoding_keeps_rank_for_fe_rules(seed):
    rng = random.Random(seed)
    rules = random_ruleset(rng, fe=True)
    inst = random_instance(rng, signatures(rules), 4, 1)
    so = run_chase(inst, rules, "so", 6, atom_budget=300)
    if not so.terminated:
        return
    er, ei = fe_encode(rules, inst)
    enc = run_chase(ei, er, "so", 8, atom_budget=2000)
    assert enc.terminated and enc.chase_rank == so.chase_rank


def test_fe_encoding_rank_gap_example():
    rules = parse_ruleset("p(X) -> q(X). r(X) -> s(X). s(X) -> q(X).")
    inst = parse_instance("p(a). r(a).")
    er, ei = fe_encode(rules, inst)
    assert run_chase(inst, rules, "so", 10).chase_rank == 1
    assert run_chase(ei, er, "so", 10).chase_rank == 2
