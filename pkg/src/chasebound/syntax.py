"""Text formats for rulesets, instances and queries, plus the JSON report.

Grammar (``%`` starts a line comment, every statement ends with ``.``)::

    rule     ::= [ "[" label "]" ] atoms? "->" atoms "."
    facts    ::= atom ("," atom)* "."
    query    ::= "?" [ "(" terms? ")" ] ":-" atoms "."
    atom     ::= pred [ "(" terms? ")" ]
    term     ::= Var | _var | const | "quoted" | digits

Predicates and constants start lowercase, variables uppercase or ``_``.
A predicate may end in ``+`` (the FE-encoding vocabulary).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from . import __version__
from .core import Atom, ConjunctiveQuery, Constant, Instance, Null, Rule, Ruleset, SkolemTerm, Term, Variable, atom_key

__all__ = [
    "ParseError", "ArityError", "ConjunctiveQuery", "SourceFile", "parse_file",
    "parse_ruleset", "parse_instance", "parse_query", "format_atom",
    "format_rule", "format_ruleset", "format_instance", "format_query",
    "TermPrinter", "emit_report",
]


class ParseError(ValueError):
    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        super().__init__(f"{line}:{column}: {message}" if line else message)


class ArityError(ParseError):
    def __init__(self, predicate: str, expected: int, got: int, line: int = 0, column: int = 0):
        self.predicate = predicate
        super().__init__(f"predicate {predicate!r} used with arity {got}, previously {expected}", line, column)


@dataclass
class SourceFile:
    facts: List[Atom] = field(default_factory=list)
    rules: List[Rule] = field(default_factory=list)
    queries: List[ConjunctiveQuery] = field(default_factory=list)
    spans: List[Tuple[str, int, int]] = field(default_factory=list)


_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>%[^\n]*)
  | (?P<arrow>->)
  | (?P<neck>:-)
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<lower>[a-z][A-Za-z0-9_]*\+?)
  | (?P<upper>[A-Z_][A-Za-z0-9_]*)
  | (?P<number>[0-9]+)
  | (?P<punct>[(),.?\[\]])
""", re.VERBOSE)


class _Tokens:
    def __init__(self, text: str):
        self.toks: List[Tuple[str, str, int, int]] = []
        line, line_start, pos = 1, 0, 0
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if m is None:
                raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
            kind = m.lastgroup
            value = m.group()
            if kind not in ("ws", "comment"):
                if kind == "punct":
                    kind = value
                self.toks.append((kind, value, line, m.start() - line_start + 1))
            nl = value.count("\n")
            if nl:
                line += nl
                line_start = m.start() + value.rindex("\n") + 1
            pos = m.end()
        self.end = (line, pos - line_start + 1)
        self.i = 0

    def peek(self, offset: int = 0) -> Optional[Tuple[str, str, int, int]]:
        j = self.i + offset
        return self.toks[j] if j < len(self.toks) else None

    def where(self) -> Tuple[int, int]:
        t = self.peek()
        return (t[2], t[3]) if t else self.end

    def expect(self, kind: str) -> Tuple[str, str, int, int]:
        t = self.peek()
        if t is None or t[0] != kind:
            got = "end of input" if t is None else repr(t[1])
            raise ParseError(f"expected {kind!r}, got {got}", *self.where())
        self.i += 1
        return t

    def accept(self, kind: str) -> bool:
        t = self.peek()
        if t is not None and t[0] == kind:
            self.i += 1
            return True
        return False


class _Parser:
    def __init__(self, text: str):
        self.tokens = _Tokens(text)
        self.arities: Dict[str, Tuple[int, int, int]] = {}
        self.rule_count = 0

    def term(self) -> Term:
        t = self.tokens.peek()
        if t is None:
            raise ParseError("expected a term, got end of input", *self.tokens.where())
        kind, value = t[0], t[1]
        if kind == "upper":
            self.tokens.i += 1
            return Variable(value)
        if kind == "lower" and not value.endswith("+"):
            self.tokens.i += 1
            return Constant(value)
        if kind == "number":
            self.tokens.i += 1
            return Constant(value)
        if kind == "string":
            self.tokens.i += 1
            return Constant(json.loads(value))
        raise ParseError(f"expected a term, got {value!r}", t[2], t[3])

    def atom(self) -> Atom:
        kind, name, line, col = self.tokens.expect("lower")
        args: List[Term] = []
        if self.tokens.accept("("):
            if not self.tokens.accept(")"):
                args.append(self.term())
                while self.tokens.accept(","):
                    args.append(self.term())
                self.tokens.expect(")")
        known = self.arities.get(name)
        if known is None:
            self.arities[name] = (len(args), line, col)
        elif known[0] != len(args):
            raise ArityError(name, known[0], len(args), line, col)
        return Atom(name, tuple(args))

    def atoms(self) -> List[Atom]:
        out = [self.atom()]
        while self.tokens.accept(","):
            out.append(self.atom())
        return out

    def statement(self, src: SourceFile) -> None:
        toks = self.tokens
        line, col = toks.where()
        if toks.accept("?"):
            answers: List[Term] = []
            if toks.accept("("):
                if not toks.accept(")"):
                    answers.append(self.term())
                    while toks.accept(","):
                        answers.append(self.term())
                    toks.expect(")")
            toks.expect("neck")
            body = self.atoms()
            toks.expect(".")
            present = {t for a in body for t in a.args}
            for t in answers:
                if isinstance(t, Variable) and t not in present:
                    raise ParseError(f"answer variable {t.name} does not occur in the query body", line, col)
            src.queries.append(ConjunctiveQuery(tuple(body), tuple(answers)))
            src.spans.append(("query", line, col))
            return
        label = None
        if toks.accept("["):
            t = toks.peek()
            if t is None or t[0] not in ("lower", "upper", "number"):
                raise ParseError("expected a rule label", *toks.where())
            toks.i += 1
            label = t[1]
            toks.expect("]")
        body: List[Atom] = []
        if not toks.accept("arrow"):
            body = self.atoms()
            if not toks.accept("arrow"):
                if label is not None:
                    raise ParseError("expected '->' after labelled rule body", *toks.where())
                toks.expect(".")
                src.facts.extend(body)
                src.spans.append(("fact", line, col))
                return
        head = self.atoms()
        toks.expect(".")
        self.rule_count += 1
        rid = label if label is not None else f"r{self.rule_count}"
        for a in head:
            for t in a.args:
                if isinstance(t, Variable) and t.name.startswith("_"):
                    raise ParseError("anonymous variables are not allowed in rule heads", line, col)
        src.rules.append(Rule(rid, tuple(body), tuple(head)))
        src.spans.append(("rule", line, col))

    def parse(self) -> SourceFile:
        src = SourceFile()
        while self.tokens.peek() is not None:
            self.statement(src)
        ids = [r.id for r in src.rules]
        dup = {i for i in ids if ids.count(i) > 1}
        if dup:
            raise ParseError(f"duplicate rule label(s): {', '.join(sorted(dup))}")
        return src


def parse_file(text: str) -> SourceFile:
    """Parse any mix of facts, rules and queries, enforcing one arity per predicate."""
    return _Parser(text).parse()


def _only(src: SourceFile, keep: str) -> None:
    for kind, line, col in src.spans:
        if kind != keep:
            raise ParseError(f"unexpected {kind} in a {keep} file", line, col)


def parse_ruleset(text: str) -> Ruleset:
    src = parse_file(text)
    _only(src, "rule")
    return Ruleset(tuple(src.rules))


def parse_instance(text: str) -> Instance:
    src = parse_file(text)
    _only(src, "fact")
    return Instance(src.facts)


def parse_query(text: str) -> ConjunctiveQuery:
    src = parse_file(text)
    _only(src, "query")
    if len(src.queries) != 1:
        raise ParseError(f"expected exactly one query, found {len(src.queries)}")
    return src.queries[0]


_PLAIN_CONST = re.compile(r"[a-z][A-Za-z0-9_]*\Z|[0-9]+\Z")


class TermPrinter:
    """Prints terms; chase nulls become ``_n1, _n2, ...`` in first-print order.

    ``table`` keeps the provenance of every printed null for verbose output.
    """

    def __init__(self):
        self.names: Dict[Term, str] = {}
        self.table: List[Tuple[str, Null]] = []

    def __call__(self, t: Term) -> str:
        if isinstance(t, Constant):
            return t.name if _PLAIN_CONST.match(t.name) else json.dumps(t.name)
        if isinstance(t, Variable):
            return t.name
        if isinstance(t, SkolemTerm):
            return f"{t.fn}({','.join(self(a) for a in t.args)})"
        name = self.names.get(t)
        if name is None:
            name = self.names[t] = f"_n{len(self.names) + 1}"
            self.table.append((name, t))
        return name

    def provenance(self) -> List[dict]:
        return [{"null": name, "kind": n.kind, "rule": n.rule, "var": n.var,
                 "key": {v: self(t) for v, t in n.hom}} for name, n in self.table]


def format_atom(a: Atom, printer: Optional[TermPrinter] = None) -> str:
    p = printer or TermPrinter()
    return f"{a.predicate}({','.join(p(t) for t in a.args)})"


def format_rule(r: Rule) -> str:
    p = TermPrinter()
    body = ", ".join(format_atom(a, p) for a in r.body)
    head = ", ".join(format_atom(a, p) for a in r.head)
    return f"[{r.id}] {body} -> {head}." if body else f"[{r.id}] -> {head}."


def format_ruleset(rules: Iterable[Rule]) -> str:
    return "".join(format_rule(r) + "\n" for r in rules)


def format_instance(atoms: Iterable[Atom], printer: Optional[TermPrinter] = None) -> str:
    p = printer or TermPrinter()
    return "".join(format_atom(a, p) + ".\n" for a in sorted(atoms, key=atom_key))


def format_query(q: ConjunctiveQuery) -> str:
    p = TermPrinter()
    body = ", ".join(format_atom(a, p) for a in q.atoms)
    if q.answers:
        return f"?({','.join(p(t) for t in q.answers)}) :- {body}."
    return f"? :- {body}."


def emit_report(checks: Sequence[dict] = (), chases: Sequence[dict] = (), **extra) -> str:
    """Serialize checks (and optional chase summaries) with sorted keys."""
    doc = {"tool_version": __version__, "checks": list(checks)}
    if chases:
        doc["chases"] = list(chases)
    doc.update(extra)
    return json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n"
