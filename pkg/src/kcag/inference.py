"""Positive Datalog saturation with a recorded derivation graph.

:func:`saturate` computes the least fixpoint of a ruleset over base facts by
semi-naive evaluation and records every rule firing as an AND vertex whose
inputs are the instantiated body facts.  :func:`prune_to_goals` keeps only the
part of that graph that supports the requested goals.
"""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Iterator, Mapping, Union

from .domain import AssetCategory, Constant, Fact, GoalSpec
from .errors import ArityError, ResourceLimit
from .rules import Atom, Clause, Const, Ruleset, Var, Wildcard

log = logging.getLogger(__name__)

DEFAULT_FACT_LIMIT = 1_000_000


@dataclass(frozen=True)
class RuleApplication:
    """One firing of one clause: ``body`` facts jointly derive ``head``."""

    clause: int
    head: Fact
    body: tuple[Fact, ...]
    substitution: tuple[tuple[str, Constant], ...] = ()

    def sort_key(self) -> tuple:
        return (self.clause, self.head.sort_key(), tuple(b.sort_key() for b in self.body))

    def __lt__(self, other: "RuleApplication") -> bool:
        return self.sort_key() < other.sort_key()


Vertex = Union[Fact, RuleApplication]


@dataclass(frozen=True)
class DerivationGraph:
    """AND/OR graph: facts are OR vertices, rule applications AND vertices."""

    base: frozenset[Fact]
    facts: frozenset[Fact]
    applications: tuple[RuleApplication, ...]

    @cached_property
    def _derivers(self) -> dict[Fact, list[RuleApplication]]:
        out: dict[Fact, list[RuleApplication]] = defaultdict(list)
        for app in self.applications:
            out[app.head].append(app)
        return out

    @cached_property
    def _consumers(self) -> dict[Fact, list[RuleApplication]]:
        out: dict[Fact, list[RuleApplication]] = defaultdict(list)
        for app in self.applications:
            for b in dict.fromkeys(app.body):
                out[b].append(app)
        return out

    def derived_by(self, fact: Fact) -> list[RuleApplication]:
        return self._derivers.get(fact, [])

    def consumed_by(self, fact: Fact) -> list[RuleApplication]:
        return self._consumers.get(fact, [])

    def is_empty(self) -> bool:
        return not self.facts

    def sorted_facts(self) -> list[Fact]:
        return sorted(self.facts, key=Fact.sort_key)

    def edges(self) -> Iterator[tuple[Vertex, Vertex]]:
        for app in self.applications:
            for b in dict.fromkeys(app.body):
                yield b, app
            yield app, app.head

    def to_dict(self, ruleset: Ruleset | None = None) -> dict:
        """JSON-ready dump, used by the CLI debug flag."""
        facts = self.sorted_facts()
        ids = {f: i for i, f in enumerate(facts)}
        apps = []
        for app in self.applications:
            entry = {"clause": app.clause, "head": ids[app.head], "body": [ids[b] for b in app.body],
                     "substitution": dict(app.substitution)}
            if ruleset is not None:
                entry["rule"] = ruleset.clauses[app.clause].label()
            apps.append(entry)
        return {"facts": [{"id": ids[f], "fact": str(f), "base": f in self.base} for f in facts],
                "applications": apps}


# -- saturation ----------------------------------------------------------------

def _compile(clause: Clause) -> tuple[Atom, tuple[Atom, ...]]:
    """Replace wildcards by fresh variables so every body position binds."""
    counter = 0
    body = []
    for atom in clause.body:
        terms = []
        for t in atom.terms:
            if isinstance(t, Wildcard):
                counter += 1
                t = Var(f"_#{counter}")
            terms.append(t)
        body.append(Atom(atom.predicate, tuple(terms)))
    return clause.head, tuple(body)


def check_arities(facts: Iterable[Fact], rules: Ruleset) -> None:
    arity: dict[str, int] = {}
    for c in rules.clauses:
        for a in (c.head, *c.body):
            arity.setdefault(a.predicate, a.arity)
    for f in facts:
        expected = arity.setdefault(f.predicate, f.arity)
        if expected != f.arity:
            raise ArityError(f"fact {f} has arity {f.arity}, rules use {f.predicate}/{expected}")


class _Store:
    """Facts with their derivation round, indexed by (predicate, position, value)."""

    def __init__(self):
        self.stamp: dict[Fact, int] = {}
        self.by_pred: dict[str, list[Fact]] = defaultdict(list)
        self.index: dict[tuple[str, int, Constant], list[Fact]] = defaultdict(list)

    def add(self, fact: Fact, stamp: int) -> None:
        self.stamp[fact] = stamp
        self.by_pred[fact.predicate].append(fact)
        for pos, value in enumerate(fact.terms):
            self.index[(fact.predicate, pos, value)].append(fact)

    def candidates(self, atom: Atom, subst: Mapping[str, Constant]) -> list[Fact]:
        best = None
        for pos, t in enumerate(atom.terms):
            if isinstance(t, Const):
                value = t.value
            elif isinstance(t, Var) and t.name in subst:
                value = subst[t.name]
            else:
                continue
            bucket = self.index.get((atom.predicate, pos, value), [])
            if best is None or len(bucket) < len(best):
                best = bucket
                if not best:
                    break
        return best if best is not None else self.by_pred.get(atom.predicate, [])


def _unify(atom: Atom, fact: Fact, subst: dict[str, Constant]) -> dict[str, Constant] | None:
    if atom.predicate != fact.predicate or len(atom.terms) != len(fact.terms):
        return None
    out = subst
    for t, value in zip(atom.terms, fact.terms):
        if isinstance(t, Const):
            if t.value != value or type(t.value) is not type(value):
                return None
        else:
            bound = out.get(t.name)
            if bound is None:
                if out is subst:
                    out = dict(subst)
                out[t.name] = value
            elif bound != value or type(bound) is not type(value):
                return None
    return out


def _instantiate(atom: Atom, subst: Mapping[str, Constant]) -> Fact:
    return Fact(atom.predicate, tuple(t.value if isinstance(t, Const) else subst[t.name] for t in atom.terms))


def saturate(facts: Iterable[Fact], rules: Ruleset,
             fact_limit: int = DEFAULT_FACT_LIMIT) -> tuple[frozenset[Fact], DerivationGraph]:
    """Least fixpoint of ``rules`` over ``facts`` plus the derivation graph.

    Fact clauses of the ruleset are added to the base facts.  Raises
    :class:`ResourceLimit` when more than ``fact_limit`` facts are derived.
    """
    if fact_limit <= 0:
        raise ValueError("fact_limit must be positive")
    base = frozenset(facts) | rules.facts()
    check_arities(base, rules)
    compiled = [(i, *_compile(c)) for i, c in enumerate(rules.clauses) if not c.is_fact]

    store = _Store()
    for f in sorted(base, key=Fact.sort_key):
        store.add(f, 0)
    seen: set[tuple[int, tuple[Fact, ...]]] = set()
    applications: list[RuleApplication] = []
    derived = 0
    rnd = 0
    delta = list(store.stamp)
    while delta:
        by_pred: dict[str, list[Fact]] = defaultdict(list)
        for f in delta:
            by_pred[f.predicate].append(f)
        fresh: list[Fact] = []
        fresh_set: set[Fact] = set()
        for idx, head, body in compiled:
            for i, atom in enumerate(body):
                for f in by_pred.get(atom.predicate, ()):
                    s = _unify(atom, f, {})
                    if s is None:
                        continue
                    for subst, chosen in _join(store, body, i, rnd, 0, s, {i: f}):
                        key = (idx, tuple(chosen[k] for k in range(len(body))))
                        if key in seen:
                            continue
                        seen.add(key)
                        h = _instantiate(head, subst)
                        named = tuple(sorted((k, v) for k, v in subst.items() if not k.startswith("_#")))
                        applications.append(RuleApplication(idx, h, key[1], named))
                        if h not in store.stamp and h not in fresh_set:
                            fresh_set.add(h)
                            fresh.append(h)
                            derived += 1
                            if derived > fact_limit:
                                raise ResourceLimit(f"derived more than {fact_limit} facts; "
                                                    "raise the fact limit or check the ruleset")
        rnd += 1
        for f in fresh:
            store.add(f, rnd)
        delta = fresh
        log.debug("round %d: %d new facts", rnd, len(fresh))

    all_facts = frozenset(store.stamp)
    graph = DerivationGraph(base, all_facts, tuple(sorted(applications)))
    return all_facts, graph


def _join(store: _Store, body: tuple[Atom, ...], pivot: int, rnd: int, j: int,
          subst: dict[str, Constant], chosen: dict[int, Fact]):
    if j == len(body):
        yield subst, chosen
        return
    if j == pivot:
        yield from _join(store, body, pivot, rnd, j + 1, subst, chosen)
        return
    atom = body[j]
    # atoms after the delta position must match facts older than this round
    limit = rnd if j < pivot else rnd - 1
    for f in store.candidates(atom, subst):
        if store.stamp[f] > limit:
            continue
        s = _unify(atom, f, subst)
        if s is None:
            continue
        chosen[j] = f
        yield from _join(store, body, pivot, rnd, j + 1, s, chosen)
    chosen.pop(j, None)


# -- pruning ------------------------------------------------------------------------

@dataclass(frozen=True)
class NotDerivable:
    goals: tuple[GoalSpec | Fact, ...]

    def __str__(self) -> str:
        if not self.goals:
            return "no goals given; nothing to derive"
        return "goal(s) not derivable: " + ", ".join(map(str, self.goals))


def goal_matches(fact: Fact, goal: GoalSpec, categories: Mapping[str, AssetCategory]) -> bool:
    """A fact realizes a goal when category, level and property agree and it names the asset."""
    if categories.get(fact.predicate) != goal.asset_category or len(fact.terms) < 3:
        return False
    level, prop, *assets = fact.terms
    return level == goal.level and prop == goal.property.value and goal.asset_ref in assets


def goal_facts(facts: Iterable[Fact], goal: GoalSpec | Fact,
               categories: Mapping[str, AssetCategory]) -> list[Fact]:
    if isinstance(goal, Fact):
        return [goal] if goal in set(facts) else []
    return sorted((f for f in facts if goal_matches(f, goal, categories)), key=Fact.sort_key)


@dataclass(frozen=True)
class PruneResult:
    graph: DerivationGraph
    goals: tuple[Fact, ...]
    diagnostics: tuple[NotDerivable, ...] = ()


def prune_to_goals(graph: DerivationGraph, goals: Iterable[GoalSpec | Fact],
                   categories: Mapping[str, AssetCategory] | None = None) -> PruneResult:
    """Keep only vertices on some derivation of some goal fact.

    Goals given as :class:`GoalSpec` are resolved against ``graph.facts`` using
    the predicate ``categories`` of the ruleset; goals without any matching
    fact are reported in a :class:`NotDerivable` diagnostic.
    """
    categories = categories or {}
    targets: list[Fact] = []
    missing = []
    for g in goals:
        found = goal_facts(graph.facts, g, categories)
        if not found:
            missing.append(g)
        targets.extend(f for f in found if f not in targets)
    diagnostics = (NotDerivable(tuple(missing)),) if missing else ()

    keep_facts: set[Fact] = set()
    keep_apps: set[RuleApplication] = set()
    stack = list(targets)
    while stack:
        f = stack.pop()
        if f in keep_facts:
            continue
        keep_facts.add(f)
        for app in graph.derived_by(f):
            if app not in keep_apps:
                keep_apps.add(app)
                stack.extend(app.body)
    # a firing is kept only when all of its inputs are kept
    apps = tuple(a for a in graph.applications if a in keep_apps and all(b in keep_facts for b in a.body))
    pruned = DerivationGraph(graph.base & keep_facts, frozenset(keep_facts), apps)
    return PruneResult(pruned, tuple(sorted(targets, key=Fact.sort_key)), diagnostics)
