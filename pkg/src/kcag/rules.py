"""Horn-clause rule language for attack techniques.

A ruleset file holds Prolog-style clauses plus ``@`` directives carrying the
ATT&CK metadata of the clause that follows::

    @asset(account, actor).
    @technique("T1110", "Brute Force", ["Credential Access"], [authentication], actor).
    account(2, authentication, User, Identity, H, Software) :-
        networkConnection(2, authentication, H, Protocol, Port),
        networkService(H, Software, Protocol, Port, _),
        hasAccount(Identity, User, H, Software),
        strongPasswordPolicy(no),
        multifactorAuthentication(no).

The grammar is documented in ``docs/rules.md``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from functools import lru_cache
from importlib import resources
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping, Union

from .domain import (
    DEFAULT_PHASES,
    AssetCategory,
    Constant,
    ControlLevel,
    Fact,
    SecurityProperty,
    Technique,
    allowed_properties,
    format_constant,
    resolve_phase,
    transition_allowed,
)
from .errors import ArityError, RangeRestrictionError, RuleSyntaxError


# -- AST -------------------------------------------------------------------------

@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Const:
    value: Constant

    def __str__(self) -> str:
        return format_constant(self.value)


@dataclass(frozen=True)
class Wildcard:
    def __str__(self) -> str:
        return "_"


WILDCARD = Wildcard()
Term = Union[Var, Const, Wildcard]


@dataclass(frozen=True)
class Atom:
    predicate: str
    terms: tuple[Term, ...] = ()

    @property
    def arity(self) -> int:
        return len(self.terms)

    def variables(self) -> set[str]:
        return {t.name for t in self.terms if isinstance(t, Var)}

    def is_ground(self) -> bool:
        return all(isinstance(t, Const) for t in self.terms)

    def to_fact(self) -> Fact:
        if not self.is_ground():
            raise ValueError(f"{self} is not ground")
        return Fact(self.predicate, tuple(t.value for t in self.terms))

    def is_countermeasure(self) -> bool:
        """Countermeasure literals have the form ``name(no)``."""
        return self.terms == (Const("no"),)

    def __str__(self) -> str:
        if not self.terms:
            return self.predicate
        return f"{self.predicate}({', '.join(map(str, self.terms))})"


@dataclass(frozen=True)
class TechniqueAnnotation:
    attack_id: str
    name: str
    phases: tuple[str, ...]
    violated: frozenset[SecurityProperty]
    output_category: AssetCategory
    # derived from the clause body once the whole file is read
    input_categories: frozenset[AssetCategory] = frozenset()
    countermeasure_predicates: frozenset[str] = frozenset()

    def technique(self) -> Technique:
        return Technique(self.attack_id, self.name, frozenset(self.phases), self.violated,
                         self.countermeasure_predicates)


@dataclass(frozen=True)
class Clause:
    head: Atom
    body: tuple[Atom, ...] = ()
    annotation: TechniqueAnnotation | None = None
    helper: bool = False
    line: int = field(default=0, compare=False)

    @property
    def is_fact(self) -> bool:
        return not self.body

    def label(self) -> str:
        if self.annotation:
            return f"{self.annotation.attack_id} (line {self.line})"
        return f"{self.head.predicate}/{self.head.arity} (line {self.line})"

    def __str__(self) -> str:
        if not self.body:
            return f"{self.head}."
        body = ",\n    ".join(map(str, self.body))
        return f"{self.head} :-\n    {body}."


@dataclass(frozen=True)
class Ruleset:
    clauses: tuple[Clause, ...] = ()
    phases: tuple[str, ...] = DEFAULT_PHASES
    categories: Mapping[str, AssetCategory] = field(default_factory=lambda: MappingProxyType({}))
    forbidden: frozenset[tuple[str, str]] = frozenset()
    source: str = field(default="<string>", compare=False)

    def __hash__(self) -> int:
        return hash((self.clauses, self.phases, tuple(sorted((k, v.value) for k, v in self.categories.items())),
                     self.forbidden))

    @property
    def rules(self) -> tuple[Clause, ...]:
        return tuple(c for c in self.clauses if not c.is_fact)

    def facts(self) -> frozenset[Fact]:
        return frozenset(c.head.to_fact() for c in self.clauses if c.is_fact)

    def phase_index(self, phase: str) -> int:
        return self.phases.index(phase)

    def category_of(self, predicate: str) -> AssetCategory | None:
        return self.categories.get(predicate)

    def techniques(self) -> dict[str, Technique]:
        """Technique metadata by ATT&CK id, merged over every clause annotated with it."""
        merged: dict[str, TechniqueAnnotation] = {}
        cms: dict[str, set[str]] = {}
        for c in self.clauses:
            if c.annotation:
                merged.setdefault(c.annotation.attack_id, c.annotation)
                cms.setdefault(c.annotation.attack_id, set()).update(c.annotation.countermeasure_predicates)
        return {k: replace(a.technique(), countermeasures=frozenset(cms[k])) for k, a in merged.items()}

    def phase_map(self) -> dict[str, frozenset[str]]:
        """The technique -> phases mapping."""
        return {k: t.phases for k, t in self.techniques().items()}

    def helper_predicates(self) -> set[str]:
        return {c.head.predicate for c in self.clauses if c.helper and not c.is_fact}

    def with_clauses(self, clauses: Iterable[Clause]) -> "Ruleset":
        return _finish(replace(self, clauses=tuple(clauses)))


# -- tokenizer ---------------------------------------------------------------------

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r\n]+|%[^\n]*)
  | (?P<neck>:-)
  | (?P<int>-?\d+)
  | (?P<var>[A-Z][A-Za-z0-9_]*|_[A-Za-z0-9_]+)
  | (?P<wild>_)
  | (?P<ident>[a-z][A-Za-z0-9_]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*"|'(?:[^'\\\n]|\\.)*')
  | (?P<punct>[(),.\[\]@])
""", re.VERBOSE)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str, source: str) -> list[_Tok]:
    tokens: list[_Tok] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise RuleSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1, source)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(_Tok(kind if kind != "punct" else m.group(), m.group(), line, pos - line_start + 1))
        newlines = m.group().count("\n")
        if newlines:
            line += newlines
            line_start = m.start() + m.group().rindex("\n") + 1
        pos = m.end()
    tokens.append(_Tok("eof", "", line, pos - line_start + 1))
    return tokens


def _unquote(text: str) -> str:
    body = text[1:-1]
    return re.sub(r"\\(.)", r"\1", body)


# -- parser --------------------------------------------------------------------------

class _Parser:
    def __init__(self, text: str, source: str):
        self.source = source
        self.tokens = _tokenize(text, source)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.tokens[self.i]

    def error(self, expected: str) -> RuleSyntaxError:
        t = self.tok
        found = "end of file" if t.kind == "eof" else repr(t.text)
        return RuleSyntaxError(f"expected {expected}, found {found}", t.line, t.col, self.source)

    def take(self, kind: str, expected: str | None = None) -> _Tok:
        if self.tok.kind != kind:
            raise self.error(expected or repr(kind))
        t = self.tok
        self.i += 1
        return t

    def accept(self, kind: str) -> bool:
        if self.tok.kind == kind:
            self.i += 1
            return True
        return False

    # constant := ident | string | int
    def constant(self) -> Constant:
        t = self.tok
        if t.kind == "ident":
            self.i += 1
            return t.text
        if t.kind == "string":
            self.i += 1
            return _unquote(t.text)
        if t.kind == "int":
            self.i += 1
            return int(t.text)
        raise self.error("a constant")

    def term(self) -> Term:
        t = self.tok
        if t.kind == "var":
            self.i += 1
            return Var(t.text)
        if t.kind == "wild":
            self.i += 1
            return WILDCARD
        if t.kind in ("ident", "string", "int"):
            return Const(self.constant())
        raise self.error("a term")

    def atom(self) -> Atom:
        name = self.take("ident", "a predicate name").text
        terms: list[Term] = []
        if self.accept("("):
            terms.append(self.term())
            while self.accept(","):
                terms.append(self.term())
            self.take(")", "',' or ')'")
        return Atom(name, tuple(terms))

    def directive_arg(self):
        if self.accept("["):
            items: list[Constant] = []
            if not self.accept("]"):
                items.append(self.constant())
                while self.accept(","):
                    items.append(self.constant())
                self.take("]", "',' or ']'")
            return items
        t = self.tok
        if t.kind == "var":
            # bare technique ids such as T1110 lex as variables
            self.i += 1
            return t.text
        return self.constant()

    def directive(self) -> tuple[str, list, _Tok]:
        at = self.take("@")
        name = self.take("ident", "a directive name").text
        args = []
        if self.accept("("):
            args.append(self.directive_arg())
            while self.accept(","):
                args.append(self.directive_arg())
            self.take(")", "',' or ')'")
        self.take(".", "'.' after directive")
        return name, args, at

    def parse(self) -> Ruleset:
        clauses: list[Clause] = []
        phases: tuple[str, ...] | None = None
        categories: dict[str, AssetCategory] = {}
        forbidden: set[tuple[str, str]] = set()
        pending: TechniqueAnnotation | None = None
        pending_helper = False
        pending_tok: _Tok | None = None
        while self.tok.kind != "eof":
            if self.tok.kind == "@":
                name, args, at = self.directive()
                fail = lambda msg: RuleSyntaxError(msg, at.line, at.col, self.source)  # noqa: E731
                if name == "phases":
                    if not args or not all(isinstance(a, str) for a in args):
                        raise fail("@phases expects one or more phase names")
                    phases = tuple(args)
                elif name == "asset":
                    if len(args) != 2 or not all(isinstance(a, str) for a in args):
                        raise fail("@asset expects (predicate, category)")
                    try:
                        categories[args[0]] = AssetCategory.parse(args[1])
                    except ValueError as exc:
                        raise fail(str(exc)) from None
                elif name == "forbid":
                    if len(args) != 2 or not all(isinstance(a, str) for a in args):
                        raise fail("@forbid expects (earlier phase, later phase)")
                    forbidden.add((args[0], args[1]))
                elif name == "technique":
                    if pending or pending_helper:
                        raise fail("directive is not followed by a clause")
                    pending = self._annotation(args, fail)
                    pending_tok = at
                elif name == "helper":
                    if pending or pending_helper or args:
                        raise fail("@helper takes no arguments and must precede a clause")
                    pending_helper = True
                    pending_tok = at
                else:
                    raise fail(f"unknown directive @{name}")
                continue
            start = self.tok
            head = self.atom()
            body: list[Atom] = []
            if self.accept("neck"):
                body.append(self.atom())
                while self.accept(","):
                    body.append(self.atom())
                self.take(".", "',' or '.' ending the clause")
            else:
                self.take(".", "':-' or '.' ending the clause")
            clause = Clause(head, tuple(body), pending, pending_helper, start.line)
            self._range_check(clause, start)
            clauses.append(clause)
            pending, pending_helper, pending_tok = None, False, None
        if pending_tok is not None:
            raise RuleSyntaxError("directive is not followed by a clause", pending_tok.line, pending_tok.col,
                                  self.source)
        ruleset = Ruleset(tuple(clauses), phases or DEFAULT_PHASES, MappingProxyType(categories),
                          frozenset(forbidden), self.source)
        _check_arity(ruleset.clauses, self.source)
        return _finish(ruleset)

    def _annotation(self, args: list, fail) -> TechniqueAnnotation:
        if len(args) != 5:
            raise fail("@technique expects (id, name, [phases], [properties], output_category)")
        attack_id, name, phases, props, output = args
        if not isinstance(attack_id, str) or not isinstance(name, str):
            raise fail("@technique id and name must be strings")
        if not isinstance(phases, list) or not phases or not all(isinstance(p, str) for p in phases):
            raise fail("@technique phases must be a non-empty list of names")
        if not isinstance(props, list) or not props:
            raise fail("@technique properties must be a non-empty list")
        if not isinstance(output, str):
            raise fail("@technique output category must be a name")
        try:
            violated = frozenset(SecurityProperty.parse(str(p)) for p in props)
            category = AssetCategory.parse(output)
        except ValueError as exc:
            raise fail(str(exc)) from None
        return TechniqueAnnotation(attack_id, name, tuple(phases), violated, category)

    def _range_check(self, clause: Clause, start: _Tok) -> None:
        body_vars = set().union(*(a.variables() for a in clause.body)) if clause.body else set()
        loose = clause.head.variables() - body_vars
        if loose:
            raise RangeRestrictionError(
                f"head variable(s) {', '.join(sorted(loose))} of {clause.head.predicate} do not occur in the body",
                start.line, start.col, self.source)
        if any(isinstance(t, Wildcard) for t in clause.head.terms) and not clause.is_fact:
            raise RangeRestrictionError(f"wildcard in head of {clause.head.predicate}", start.line, start.col,
                                        self.source)
        if clause.is_fact and not clause.head.is_ground():
            raise RangeRestrictionError(f"fact {clause.head} must be ground", start.line, start.col, self.source)


def _check_arity(clauses: Iterable[Clause], source: str) -> None:
    seen: dict[str, tuple[int, int]] = {}
    for c in clauses:
        for atom in (c.head, *c.body):
            arity, line = seen.setdefault(atom.predicate, (atom.arity, c.line))
            if arity != atom.arity:
                raise ArityError(f"{source}:{c.line}: {atom.predicate} used with arity {atom.arity}, "
                                 f"but with arity {arity} on line {line}")


def _finish(ruleset: Ruleset) -> Ruleset:
    """Fill in annotation fields that depend on the whole file."""
    helper_cats = _helper_categories(ruleset)
    clauses = []
    for c in ruleset.clauses:
        if c.annotation:
            inputs: set[AssetCategory] = set()
            for atom in c.body:
                cat = ruleset.categories.get(atom.predicate)
                if cat is not None:
                    inputs.add(cat)
                inputs |= helper_cats.get(atom.predicate, set())
            cms = frozenset(a.predicate for a in c.body if a.is_countermeasure())
            c = replace(c, annotation=replace(c.annotation, input_categories=frozenset(inputs),
                                              countermeasure_predicates=cms))
        clauses.append(c)
    return replace(ruleset, clauses=tuple(clauses))


def _helper_categories(ruleset: Ruleset) -> dict[str, set[AssetCategory]]:
    """Control categories a helper predicate can stand in for, transitively."""
    helpers = [c for c in ruleset.clauses if c.helper and not c.is_fact]
    cats: dict[str, set[AssetCategory]] = {c.head.predicate: set() for c in helpers}
    changed = True
    while changed:
        changed = False
        for c in helpers:
            acc = cats[c.head.predicate]
            before = len(acc)
            for atom in c.body:
                if atom.predicate in ruleset.categories:
                    acc.add(ruleset.categories[atom.predicate])
                acc |= cats.get(atom.predicate, set())
            changed |= len(acc) != before
    return cats


def parse_ruleset(text: str, source: str = "<string>") -> Ruleset:
    """Parse ruleset text into clauses (file order) plus declarations."""
    return _Parser(text, source).parse()


def parse_atom(text: str) -> Atom:
    """Parse a single atom such as ``networkService(server, ssh, tcp, 22, root)``."""
    p = _Parser(text, "<atom>")
    atom = p.atom()
    p.take("eof", "end of input")
    return atom


def parse_fact(text: str) -> Fact:
    return parse_atom(text).to_fact()


def load_ruleset(path) -> Ruleset:
    from pathlib import Path
    path = Path(path)
    return parse_ruleset(path.read_text(encoding="utf-8"), str(path))


@lru_cache(maxsize=1)
def builtin_ruleset() -> Ruleset:
    """The shipped ruleset covering the selected ATT&CK techniques."""
    text = resources.files("kcag").joinpath("data/builtin.rules").read_text(encoding="utf-8")
    return parse_ruleset(text, "builtin.rules")


# -- printing ----------------------------------------------------------------------

def _q(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def format_ruleset(ruleset: Ruleset) -> str:
    """Render ``ruleset`` back into parseable rule text."""
    lines: list[str] = []
    if ruleset.phases != DEFAULT_PHASES:
        lines.append("@phases(" + ", ".join(_q(p) for p in ruleset.phases) + ").")
    for pred, cat in sorted(ruleset.categories.items()):
        lines.append(f"@asset({pred}, {cat.value}).")
    for a, b in sorted(ruleset.forbidden):
        lines.append(f"@forbid({_q(a)}, {_q(b)}).")
    for c in ruleset.clauses:
        lines.append("")
        if c.annotation:
            a = c.annotation
            props = ", ".join(sorted(p.value for p in a.violated))
            phases = ", ".join(_q(p) for p in a.phases)
            lines.append(f"@technique({_q(a.attack_id)}, {_q(a.name)}, [{phases}], [{props}], "
                         f"{a.output_category.value}).")
        if c.helper:
            lines.append("@helper.")
        lines.append(str(c))
    return "\n".join(lines) + "\n"


# -- validation ----------------------------------------------------------------------

@dataclass(frozen=True)
class Diagnostic:
    rule: str
    constraint: str
    detail: str

    def __str__(self) -> str:
        return f"{self.rule}: {self.constraint}: {self.detail}"


def validate_ruleset(ruleset: Ruleset, phase_set: Iterable[str] | None = None) -> list[Diagnostic]:
    """Check every annotated clause against the asset-category and property rules."""
    phases = tuple(phase_set) if phase_set is not None else ruleset.phases
    out: list[Diagnostic] = []
    for a, b in sorted(ruleset.forbidden):
        for p in (a, b):
            if resolve_phase(p, phases) is None:
                out.append(Diagnostic("@forbid", "phase not in P", p))
    helpers = ruleset.helper_predicates()
    for c in ruleset.clauses:
        if c.helper and c.head.predicate in ruleset.categories:
            out.append(Diagnostic(c.label(), "helper head is a control-level predicate", c.head.predicate))
        if c.annotation is None:
            continue
        a = c.annotation
        rule = c.label()
        for p in a.phases:
            if resolve_phase(p, phases) is None:
                out.append(Diagnostic(rule, "phase not in P", p))
        bad = a.violated - allowed_properties(a.output_category)
        for prop in sorted(bad, key=lambda p: p.value):
            out.append(Diagnostic(rule, "property not allowed for output category",
                                  f"{prop.value} on {a.output_category.title} "
                                  f"(allowed: {sorted(p.value for p in allowed_properties(a.output_category))})"))
        declared = ruleset.categories.get(c.head.predicate)
        if declared is None:
            out.append(Diagnostic(rule, "head is not a declared control-level predicate", c.head.predicate))
        elif declared != a.output_category:
            out.append(Diagnostic(rule, "output category disagrees with @asset declaration",
                                  f"{c.head.predicate} is {declared.title}, annotation says {a.output_category.title}"))
        out.extend(_head_shape(c, rule))
        if not a.input_categories:
            out.append(Diagnostic(rule, "no control-level prerequisite", "technique body needs a prior control level"))
        for cat in sorted(a.input_categories, key=lambda x: x.value):
            if not transition_allowed(cat, a.output_category):
                out.append(Diagnostic(rule, "forbidden asset-type transition",
                                      f"{cat.title} -> {a.output_category.title}"))
        if c.head.predicate in helpers:
            out.append(Diagnostic(rule, "technique head also defined by a helper rule", c.head.predicate))
    return out


def _head_shape(c: Clause, rule: str) -> Iterator[Diagnostic]:
    terms = c.head.terms
    if len(terms) < 3:
        yield Diagnostic(rule, "head shape", "expected (Level, Property, asset...)")
        return
    level, prop = terms[0], terms[1]
    if not (isinstance(level, Const) and level.value in (1, 2)):
        yield Diagnostic(rule, "head level", f"technique output level must be 1 or 2, got {level}")
    if not isinstance(prop, Const):
        yield Diagnostic(rule, "head property", f"expected a property constant, got {prop}")
        return
    try:
        parsed = SecurityProperty.parse(str(prop.value))
    except ValueError:
        yield Diagnostic(rule, "head property", f"unknown property {prop}")
        return
    if parsed not in c.annotation.violated:
        yield Diagnostic(rule, "head property not among violated properties", str(prop))


def control_shape(fact: Fact) -> tuple[int, SecurityProperty | None, tuple[Constant, ...]] | None:
    """Split a control-level fact into (level, property, asset terms)."""
    if len(fact.terms) < 3 or not isinstance(fact.terms[0], int):
        return None
    level = fact.terms[0]
    if level not in tuple(ControlLevel):
        return None
    try:
        prop = SecurityProperty.parse(str(fact.terms[1]))
    except ValueError:
        prop = None
    return level, prop, fact.terms[2:]
