"""Scripted end-to-end scenarios with committed golden reports."""

from __future__ import annotations

import difflib
from importlib import resources
from typing import Callable, Dict, List

from .analysis import ct_check, k_bounded
from .chase import extend_embedding, rounds_isomorphic, run_chase, skolem_to_null
from .rewrite import cq_subsumes, estimate_kAF, estimate_kFO, rewrite
from .syntax import TermPrinter, emit_report, format_atom, format_query, parse_instance, parse_query, parse_ruleset
from .transforms import df_decompose

__all__ = ["SCENARIOS", "data_text", "data_path", "run_scenario", "golden_text", "check_scenario"]


def data_path(name: str):
    return resources.files("chasebound") / "data" / name


def data_text(name: str) -> str:
    return data_path(name).read_text(encoding="utf-8")


def golden_text(scenario: str) -> str:
    return (resources.files("chasebound") / "golden" / f"{scenario}.json").read_text(encoding="utf-8")


def chase_record(res, printer: TermPrinter = None, atoms: bool = True) -> dict:
    p = printer or TermPrinter()
    d = res.summary()
    if atoms:
        d["atoms"] = [format_atom(a, p) for k in range(res.fuel_used + 1) for a in res.new_at(k)]
        d["depths"] = {p(t): [res.depth_of[t], res.frdepth_of[t]] for t in res.generated_terms()}
    return d


def _ex1() -> dict:
    rules = parse_ruleset(data_text("ex1.erl"))
    inst = parse_instance(data_text("ex1_instance.erl"))
    o = run_chase(inst, rules, "o", 50)
    so = run_chase(inst, rules, "so", 50)
    sk = run_chase(inst, rules, "skolem", 50)
    p = TermPrinter()
    so_rec = chase_record(so, p)
    return {
        "chases": [chase_record(o, atoms=False), so_rec, chase_record(sk, atoms=False)],
        "so_nulls": p.provenance(),
        "skolem_isomorphic_to_so": rounds_isomorphic(so, sk, sk.fuel_used, skolem_to_null(rules)),
    }


def _ex2() -> dict:
    checks = []
    for name in ("ex2_sigma2.erl", "ex2_sigma1.erl", "ex2_both.erl"):
        v = k_bounded(parse_ruleset(data_text(name)), 1, "o")
        checks.append({"ruleset": name, **v.to_dict()})
    return {"checks": checks}


def _ex3() -> dict:
    rules = parse_ruleset(data_text("ex3.erl"))
    inst = parse_instance(data_text("ex3_instance.erl"))
    so = run_chase(inst, rules, "so", 50)
    o = run_chase(inst, rules, "o", 50)
    depths = [o.depth_of[t] for t in o.generated_terms()]
    return {"chases": [chase_record(so), chase_record(o, atoms=False)], "o_depths": depths}


def _prop4() -> dict:
    rules = parse_ruleset(data_text("prop4.erl"))
    q = parse_query(data_text("prop4_query.q"))
    kaf = estimate_kAF(rules)
    st = rewrite(q, rules, 3)
    antichain = all(not cq_subsumes(a, b) for a in st.ucq for b in st.ucq if a is not b)
    return {
        "k_AF": kaf.to_dict(),
        "rewriting": {**st.to_dict(), "ucq": [format_query(x) for x in st.ucq], "antichain": antichain},
        "k_FO": estimate_kFO(rules, 3).to_dict(),
    }


def _df_footnote() -> dict:
    rules = parse_ruleset(data_text("df_footnote.erl"))
    inst = parse_instance("p(a,b).")
    df = df_decompose(rules).rules
    return {
        "chases": [
            {"ruleset": "original", **chase_record(run_chase(inst, rules, "so", 50), atoms=False)},
            {"ruleset": "decomposed", **chase_record(run_chase(inst, df, "so", 50))},
        ],
        "ct": [ct_check(rules, "so").to_dict(), ct_check(df, "so").to_dict()],
    }


def _lemma3() -> dict:
    rules = parse_ruleset(data_text("lemma3.erl"))
    src = parse_instance(data_text("lemma3_instance.erl"))
    dst = parse_instance(data_text("lemma3_target.erl"))
    ext = extend_embedding({}, src, dst, rules, "so", 2)
    p = TermPrinter()
    q = TermPrinter()
    rows = []
    for t in ext.source.generated_terms():
        u = ext.mapping[t]
        rows.append({"source": p(t), "target": q(u),
                     "depth": [ext.source.depth_of[t], ext.target.depth_of[u]],
                     "frontier_depth": [ext.source.frdepth_of[t], ext.target.frdepth_of[u]]})
    return {"extension": rows, "verified": ext.depth_kind, "checked_terms": ext.checked_terms}


SCENARIOS: Dict[str, Callable[[], dict]] = {
    "ex1": _ex1,
    "ex2": _ex2,
    "ex3": _ex3,
    "prop4": _prop4,
    "df-footnote": _df_footnote,
    "lemma3": _lemma3,
}


def run_scenario(name: str) -> str:
    try:
        fn = SCENARIOS[name]
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; known: {', '.join(SCENARIOS)}") from None
    body = fn()
    checks = body.pop("checks", [])
    chases = body.pop("chases", [])
    return emit_report(checks, chases, scenario=name, **body)


def check_scenario(name: str) -> List[str]:
    """Unified diff lines between the fresh report and the golden one (empty when equal)."""
    fresh = run_scenario(name)
    golden = golden_text(name)
    return list(difflib.unified_diff(golden.splitlines(), fresh.splitlines(), "golden", "fresh", lineterm=""))
