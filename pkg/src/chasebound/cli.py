"""Command-line entry point.

Exit codes: 0 yes/success, 1 no (or a golden mismatch), 2 unknown/infeasible
or a chase that ran out of fuel, 64 usage error, 65 input error, 66 missing file.
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from . import __version__
from .analysis import (
    DEFAULT_CEILING, DEFAULT_MAX_ATOMS, Infeasible, Verdict, classify_boundedness, ct_check, depth_bound, detect_classes,
    k_bounded, k_bounded_fe_oblivious,
)
from .chase import run_chase
from .repro import SCENARIOS, chase_record, check_scenario, run_scenario
from .rewrite import estimate_kAF, estimate_kFO, rewrite
from .syntax import (
    ParseError, TermPrinter, emit_report, format_instance, format_query, format_ruleset,
    parse_instance, parse_query, parse_ruleset,
)
from .transforms import (
    critical_instance, df_decompose, fe_decode, fe_encode_instance, fe_encode_rules, freeze, psi_transform,
)

EXIT_OK, EXIT_NO, EXIT_UNKNOWN = 0, 1, 2
EXIT_USAGE, EXIT_DATA, EXIT_NOINPUT = 64, 65, 66
_STATUS_EXIT = {"yes": EXIT_OK, "no": EXIT_NO, "unknown": EXIT_UNKNOWN}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _read(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except IsADirectoryError:
        raise FileNotFoundError(2, "is a directory", path) from None


def _emit(args, text: str, human: Optional[str] = None) -> None:
    sys.stdout.write(human if args.human and human is not None else text)


def _human_verdict(v: dict, indent: str = "") -> str:
    line = f"{indent}{v['check']}"
    if "variant" in v:
        line += f" [{v['variant']}]"
    line += f": {v['verdict']}"
    if v.get("rationale"):
        line += f" ({v['rationale']})"
    out = [line]
    if "witness" in v:
        w = v["witness"]
        out.append(f"{indent}  witness: {' '.join(w['instance'])}")
        if w.get("facts"):
            out.append(f"{indent}  rank {w['fact_of_rank']} facts: {' '.join(w['facts'])}")
    for c in v.get("components", []):
        out.append(_human_verdict(c, indent + "  "))
    return "\n".join(out)


def _verdict_report(args, v: Verdict) -> int:
    d = v.to_dict()
    _emit(args, emit_report([d]), _human_verdict(d) + "\n")
    return _STATUS_EXIT[v.status]


def cmd_chase(args) -> int:
    rules = parse_ruleset(_read(args.rules))
    inst = parse_instance(_read(args.instance))
    res = run_chase(inst, rules, args.variant, args.fuel, record_triggers=args.trace, atom_budget=args.max_atoms)
    p = TermPrinter()
    rec = chase_record(res, p)
    extra = {}
    if args.trace:
        extra["triggers"] = [
            {"round": t.round, "rule": t.rule, "hom": {v: p(x) for v, x in t.hom},
             "produced": [f"{a.predicate}({','.join(p(x) for x in a.args)})" for a in t.produced]}
            for t in res.trigger_log
        ]
        extra["nulls"] = p.provenance()
    if args.figure:
        from .plotting import plot_chase
        plot_chase(res, args.figure)
    human = (f"{res.variant} chase: " + (f"terminated at rank {rec['rank']}" if res.terminated
                                         else f"no fixpoint within {res.fuel} rounds") + "\n"
             + "".join(f"  {a}\n" for a in rec["atoms"]))
    _emit(args, emit_report([], [rec], **extra), human)
    return EXIT_OK if res.terminated else EXIT_UNKNOWN


def cmd_transform(args) -> int:
    op = args.op
    note = None
    if op == "fe-decode":
        if not args.rules:
            raise UsageError("transform: fe-decode needs an instance file")
        out = format_instance(fe_decode(parse_instance(_read(args.rules))))
    elif op == "freeze":
        inst_path = args.instance or args.rules
        frozen, bij = freeze(parse_instance(_read(inst_path)))
        p = TermPrinter()
        out = "".join(f"% {v.name} -> {p(c)}\n" for v, c in sorted(bij.items(), key=lambda kv: kv[0].sort_key))
        out += format_instance(frozen)
    else:
        rules = parse_ruleset(_read(args.rules))
        if op == "df":
            out = format_ruleset(df_decompose(rules).rules)
            note = ("the decomposition preserves oblivious termination; under the semi-oblivious chase "
                    "the frontier of the existential part may shrink, which can change termination")
        elif op == "psi":
            out = format_ruleset(psi_transform(rules))
        elif op == "critical":
            out = format_instance(critical_instance(rules.predicates(), rules.constants()))
        elif op == "fe-encode":
            out = format_ruleset(fe_encode_rules(rules))
            if args.instance:
                out += "\n" + format_instance(fe_encode_instance(parse_instance(_read(args.instance))))
        else:  # pragma: no cover - argparse restricts choices
            raise UsageError(f"unknown op {op}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(out)
    extra = {"transform": {"op": op, "output": out}}
    if note:
        extra["transform"]["note"] = note
    _emit(args, emit_report([], **extra), out + (f"% note: {note}\n" if note else ""))
    return EXIT_OK


def cmd_rewrite(args) -> int:
    rules = parse_ruleset(_read(args.rules))
    if args.kaf or args.kfo:
        if args.query:
            raise UsageError("rewrite: --kaf/--kfo take only a ruleset")
        checks = []
        for flag, fn, name in ((args.kaf, estimate_kAF, "k_AF"), (args.kfo, estimate_kFO, "k_FO")):
            if flag:
                est = fn(rules, args.fuel)
                checks.append({"check": name, "verdict": "yes" if est.saturated else "unknown",
                               "budget": {"fuel": args.fuel}, **est.to_dict()})
        human = "".join(f"{c['check']}: " + (f"saturated, k = {c['k']}" if c["saturated"] else "budget exhausted") + "\n"
                        for c in checks)
        _emit(args, emit_report(checks), human)
        return EXIT_OK if all(c["saturated"] for c in checks) else EXIT_UNKNOWN
    if not args.query:
        raise UsageError("rewrite: a query file is required unless --kaf or --kfo is given")
    q = parse_query(_read(args.query))
    st = rewrite(q, rules, args.fuel)
    ucq = [format_query(x) for x in st.ucq]
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("".join(x + "\n" for x in ucq))
    if args.figure:
        from .plotting import plot_rewriting
        plot_rewriting(st.sizes, args.figure)
    check = {"check": "rewrite", "verdict": "yes" if st.saturated else "unknown", "budget": {"fuel": args.fuel},
             **st.to_dict(), "ucq": ucq}
    human = ("saturated" if st.saturated else "not saturated") + f" after {st.steps} steps\n" + "".join(x + "\n" for x in ucq)
    _emit(args, emit_report([check]), human)
    return EXIT_OK if st.saturated else EXIT_UNKNOWN


def cmd_ct(args) -> int:
    return _verdict_report(args, ct_check(parse_ruleset(_read(args.rules)), args.variant, args.fuel, args.max_atoms))


def cmd_kbounded(args) -> int:
    rules = parse_ruleset(_read(args.rules))
    if args.critical:
        if args.variant != "o":
            raise UsageError("check-kbounded: --critical applies to the oblivious chase only")
        return _verdict_report(args, k_bounded_fe_oblivious(rules, args.k, args.max_atoms))
    try:
        v = k_bounded(rules, args.k, args.variant, args.ceiling, args.jobs)
    except Infeasible as exc:
        v = Verdict("k-bounded", "unknown", args.variant, str(exc),
                    budget={"ceiling": exc.ceiling}, details={"k": args.k, "estimate": exc.estimate})
    return _verdict_report(args, v)


def cmd_classify(args) -> int:
    rules = parse_ruleset(_read(args.rules))
    v = classify_boundedness(rules, args.variant, args.fuel, args.rewrite_fuel, args.ceiling, args.max_k, args.jobs,
                             args.max_atoms, args.rewrite_cqs, args.rewrite_atoms)
    return _verdict_report(args, v)


def cmd_depth(args) -> int:
    rules = parse_ruleset(_read(args.rules))
    kd = depth_bound(rules, args.variant, args.fuel, args.max_atoms)
    stats = detect_classes(rules)
    if kd is None:
        v = Verdict("depth", "unknown", args.variant, "critical instance chase exceeded its budget",
                    budget={"fuel": args.fuel, "max_atoms": args.max_atoms}, details={"classes": stats.to_dict()})
    else:
        v = Verdict("depth", "yes", args.variant, "critical instance chase terminates",
                    budget={"fuel": args.fuel, "max_atoms": args.max_atoms},
                    details={"k_d": kd, "classes": stats.to_dict()})
    return _verdict_report(args, v)


def cmd_repro(args) -> int:
    if args.scenario not in SCENARIOS:
        raise UsageError(f"repro: unknown scenario {args.scenario!r}; known: {', '.join(SCENARIOS)}")
    text = run_scenario(args.scenario)
    sys.stdout.write(text)
    diff = check_scenario(args.scenario)
    if diff:
        sys.stderr.write("\n".join(diff) + "\n")
        return EXIT_NO
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="chasebound", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"chasebound {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    def common(p, variants=("o", "so"), max_atoms=DEFAULT_MAX_ATOMS):
        p.add_argument("--variant", choices=variants, default="o")
        p.add_argument("--fuel", type=int, default=50, help="maximum chase rounds (default 50)")
        p.add_argument("--max-atoms", type=int, default=max_atoms,
                       help="stop a chase that grows past this many atoms (default %(default)s)")
        mode = p.add_mutually_exclusive_group()
        mode.add_argument("--json", dest="human", action="store_false", help="JSON report (default)")
        mode.add_argument("--human", dest="human", action="store_true", help="plain-text summary")
        p.set_defaults(human=False)

    p = sub.add_parser("chase", help="run a breadth-first chase")
    common(p, ("o", "so", "skolem"), None)
    p.add_argument("--trace", action="store_true", help="include the trigger log and null provenance")
    p.add_argument("--figure", metavar="PATH", help="write a per-round figure")
    p.add_argument("rules")
    p.add_argument("instance")
    p.set_defaults(func=cmd_chase)

    p = sub.add_parser("transform", help="rewrite a ruleset or instance")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--json", dest="human", action="store_false")
    mode.add_argument("--human", dest="human", action="store_true", help="print the transformed file only")
    p.set_defaults(human=False)
    p.add_argument("--op", required=True, choices=["df", "psi", "fe-encode", "fe-decode", "freeze", "critical"])
    p.add_argument("--out", metavar="PATH", help="also write the transformed text here")
    p.add_argument("rules", help="ruleset (for fe-decode and freeze: the instance)")
    p.add_argument("instance", nargs="?")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("rewrite", help="breadth-first UCQ rewriting")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--json", dest="human", action="store_false")
    mode.add_argument("--human", dest="human", action="store_true")
    p.set_defaults(human=False)
    p.add_argument("--fuel", type=int, default=8, help="maximum rewriting steps (default 8)")
    p.add_argument("--kaf", action="store_true", help="estimate k_AF over full-atomic datalog-head queries")
    p.add_argument("--kfo", action="store_true", help="estimate k_FO over rule-body queries")
    p.add_argument("--out", metavar="PATH", help="write the UCQ here")
    p.add_argument("--figure", metavar="PATH", help="write UCQ size per step")
    p.add_argument("rules")
    p.add_argument("query", nargs="?")
    p.set_defaults(func=cmd_rewrite)

    p = sub.add_parser("ct", help="chase termination via the critical instance")
    common(p)
    p.add_argument("rules")
    p.set_defaults(func=cmd_ct)

    p = sub.add_parser("check-kbounded", help="decide k-boundedness by instance enumeration")
    common(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--ceiling", type=int, default=DEFAULT_CEILING)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--critical", action="store_true", help="FE rules, oblivious chase: use the critical instance only")
    p.add_argument("rules")
    p.set_defaults(func=cmd_kbounded)

    p = sub.add_parser("classify", help="boundedness classification")
    common(p)
    p.add_argument("--rewrite-fuel", type=int, default=8)
    p.add_argument("--rewrite-cqs", type=int, default=5000, help="cap on CQs generated while rewriting")
    p.add_argument("--rewrite-atoms", type=int, default=16, help="cap on atoms per rewritten CQ")
    p.add_argument("--ceiling", type=int, default=DEFAULT_CEILING)
    p.add_argument("--max-k", type=int, default=4)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("rules")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("depth", help="depth bound from the critical instance")
    common(p)
    p.add_argument("rules")
    p.set_defaults(func=cmd_depth)

    p = sub.add_parser("repro", help="run a scripted scenario and diff against its golden report")
    p.add_argument("scenario", help=", ".join(SCENARIOS))
    p.set_defaults(func=cmd_repro, human=False)
    return parser


def _validate(args) -> None:
    for name in ("fuel", "k", "ceiling", "max_k", "rewrite_fuel", "max_atoms", "rewrite_cqs", "rewrite_atoms"):
        val = getattr(args, name, None)
        if val is not None and val < 0:
            raise UsageError(f"--{name.replace('_', '-')} must be non-negative")
    if getattr(args, "jobs", 1) < 1:
        raise UsageError("--jobs must be at least 1")


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _validate(args)
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"no such file: {exc.filename or exc}", file=sys.stderr)
        return EXIT_NOINPUT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
