"""Kill chain attack graph: typed vertices, phase mapping and phase assignment."""

from __future__ import annotations

import itertools
import logging
from collections import defaultdict
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from types import MappingProxyType
from typing import Callable, Iterable, Iterator, Mapping

from .domain import (
    AssetCategory,
    Fact,
    OrganizationDescription,
    SecurityProperty,
    countermeasure_predicate,
    is_countermeasure_fact,
    resolve_phase,
    transition_allowed,
)
from .errors import KcagError, PhaseConflict, TransitionViolation, UnannotatedRule
from .inference import PruneResult, RuleApplication
from .rules import Ruleset, control_shape

log = logging.getLogger(__name__)

DEFAULT_SPINE_LIMIT = 20_000


class VertexKind(Enum):
    CONTROL = "control"
    PROPERTY = "property"
    COUNTERMEASURE = "countermeasure"
    TECHNIQUE = "technique"
    GOAL = "goal"


class PhaseOrder(Enum):
    MONOTONE = "monotone"
    FORBIDDEN_PAIRS = "forbidden_pairs"

    @classmethod
    def parse(cls, text: str) -> "PhaseOrder":
        return cls(text.replace("-", "_").lower())


@dataclass(frozen=True)
class AssetRef:
    category: AssetCategory
    ref: str
    level: int
    property: SecurityProperty | None


@dataclass(frozen=True)
class KcagVertex:
    id: int
    kind: VertexKind
    label: str
    fact: Fact | None = None
    asset: AssetRef | None = None
    attack_id: str | None = None
    name: str = ""
    phases: tuple[str, ...] = ()
    countermeasure: str | None = None


@dataclass(frozen=True)
class Kcag:
    """The triple (graph, ordered phases, technique -> phases mapping)."""

    vertices: tuple[KcagVertex, ...] = ()
    edges: tuple[tuple[int, int], ...] = ()
    phases: tuple[str, ...] = ()
    mapping: Mapping[str, frozenset[str]] = field(default_factory=lambda: MappingProxyType({}))
    forbidden: frozenset[tuple[str, str]] = frozenset()
    order: PhaseOrder = PhaseOrder.MONOTONE

    @cached_property
    def _by_id(self) -> dict[int, KcagVertex]:
        return {v.id: v for v in self.vertices}

    @cached_property
    def _succ(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = defaultdict(list)
        for u, v in self.edges:
            out[u].append(v)
        return out

    @cached_property
    def _pred(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = defaultdict(list)
        for u, v in self.edges:
            out[v].append(u)
        return out

    def vertex(self, vid: int) -> KcagVertex:
        return self._by_id[vid]

    def successors(self, vid: int) -> list[int]:
        return self._succ.get(vid, [])

    def predecessors(self, vid: int) -> list[int]:
        return self._pred.get(vid, [])

    def of_kind(self, kind: VertexKind) -> list[KcagVertex]:
        return [v for v in self.vertices if v.kind is kind]

    def external_actors(self) -> list[KcagVertex]:
        return [v for v in self.vertices if v.kind is VertexKind.CONTROL and v.asset is not None
                and v.asset.category is AssetCategory.EXTERNAL_ACTOR]

    def roots(self) -> list[KcagVertex]:
        """Control-level vertices without incoming edges (spine starting points)."""
        return [v for v in self.vertices if v.kind is VertexKind.CONTROL and not self.predecessors(v.id)]

    def is_empty(self) -> bool:
        return not self.vertices

    def phase_index(self, phase: str) -> int:
        return self.phases.index(phase)

    def output_of(self, technique: int) -> int:
        (out,) = self.successors(technique)
        return out

    def __len__(self) -> int:
        return len(self.vertices)


# -- building --------------------------------------------------------------------

_KIND_ORDER = {VertexKind.CONTROL: 0, VertexKind.GOAL: 0, VertexKind.PROPERTY: 1,
               VertexKind.COUNTERMEASURE: 2, VertexKind.TECHNIQUE: 3}


@dataclass(frozen=True)
class _Tech:
    app: RuleApplication
    prereqs: tuple  # vertex keys, canonical order
    twin: bool = False


def build_kcag(pruned: PruneResult, ruleset: Ruleset, org: OrganizationDescription | None = None) -> Kcag:
    """Type every vertex of a pruned derivation graph and attach phase data.

    Firings of ``@helper`` clauses are inlined: their body facts become direct
    prerequisites of the consuming technique.  When a helper fact has several
    derivations, the consuming technique is split into one vertex per choice.
    """
    graph = pruned.graph
    if graph.is_empty():
        raise KcagError("cannot build a kill chain attack graph from an empty derivation graph")
    goals = set(pruned.goals)
    for g in sorted(goals, key=Fact.sort_key):
        if g in graph.base:
            raise KcagError(f"goal {g} is a base fact; goals must be derived by techniques")
    cats = ruleset.categories
    cm_ids = {}
    if org is not None:
        cm_ids = {countermeasure_predicate(cm): cm for cm in org.countermeasure_flags}

    def is_inlined(fact: Fact) -> bool:
        return (fact not in graph.base and fact.predicate not in cats
                and any(ruleset.clauses[a.clause].helper for a in graph.derived_by(fact)))

    def expand(fact: Fact, stack: frozenset) -> list[frozenset]:
        if not is_inlined(fact):
            return [frozenset({fact})]
        options: list[frozenset] = []
        for app in graph.derived_by(fact):
            if not ruleset.clauses[app.clause].helper or app in stack:
                continue
            parts = [expand(b, stack | {app}) for b in app.body]
            for combo in itertools.product(*parts):
                s = frozenset().union(*combo)
                if s not in options:
                    options.append(s)
        return options

    techniques: list[tuple[RuleApplication, frozenset]] = []
    seen = set()
    for app in graph.applications:
        clause = ruleset.clauses[app.clause]
        if clause.helper:
            continue
        if clause.annotation is None:
            raise UnannotatedRule(f"rule {clause.label()} fired on a goal derivation but has no "
                                  "@technique annotation or @helper marker")
        for combo in itertools.product(*(expand(b, frozenset({app})) for b in app.body)):
            prereqs = frozenset().union(*combo)
            key = (app.clause, app.head, prereqs)
            if key not in seen:
                seen.add(key)
                techniques.append((app, prereqs))

    consumed = set().union(*(p for _, p in techniques)) if techniques else set()
    twinned = {g for g in goals if g in consumed}

    def fact_kind(f: Fact) -> VertexKind:
        if f in goals:
            return VertexKind.GOAL
        if f.predicate in cats:
            return VertexKind.CONTROL
        if is_countermeasure_fact(f):
            return VertexKind.COUNTERMEASURE
        return VertexKind.PROPERTY

    # vertex keys: ("fact", f) | ("twin", f) | ("tech", _Tech)
    kinds: dict[tuple, VertexKind] = {}
    preds: dict[tuple, list[tuple]] = defaultdict(list)

    def fact_key(f: Fact) -> tuple:
        return ("twin", f) if f in twinned else ("fact", f)

    for app, prereqs in techniques:
        pkeys = tuple(sorted((fact_key(p) for p in prereqs), key=_key_order))
        for p in prereqs:
            kinds[fact_key(p)] = VertexKind.CONTROL if p in twinned else fact_kind(p)
        outs = [("fact", app.head)]
        if app.head in twinned:
            outs.append(("twin", app.head))
        for out in outs:
            tech = ("tech", _Tech(app, pkeys, out[0] == "twin"))
            kinds[tech] = VertexKind.TECHNIQUE
            kinds[out] = VertexKind.CONTROL if out[0] == "twin" else fact_kind(app.head)
            preds[tech] = list(pkeys)
            preds[out].append(tech)

    ids = _number(kinds, preds, goals)
    phase_map = {}
    for attack_id, phases in ruleset.phase_map().items():
        phase_map[attack_id] = frozenset(resolve_phase(p, ruleset.phases) or p for p in phases)

    vertices = []
    for key, vid in ids.items():
        vertices.append(_make_vertex(vid, key, kinds[key], ruleset, cm_ids, phase_map))
    vertices.sort(key=lambda v: v.id)
    edges = sorted((ids[p], ids[v]) for v, ps in preds.items() for p in ps)

    forbidden = frozenset((resolve_phase(a, ruleset.phases) or a, resolve_phase(b, ruleset.phases) or b)
                          for a, b in ruleset.forbidden)
    kcag = Kcag(tuple(vertices), tuple(edges), ruleset.phases, MappingProxyType(phase_map), forbidden)

    for v in kcag.of_kind(VertexKind.TECHNIQUE):
        out = kcag.vertex(kcag.output_of(v.id))
        for p in kcag.predecessors(v.id):
            src = kcag.vertex(p)
            if src.asset is not None and out.asset is not None and \
                    not transition_allowed(src.asset.category, out.asset.category):
                raise TransitionViolation(
                    f"{v.label}: {src.label} ({src.asset.category.title}) -> {out.label} "
                    f"({out.asset.category.title}) is not an allowed asset-type transition")
    problems = structural_violations(kcag)
    if problems:
        raise KcagError("generated graph violates structural invariants: " + "; ".join(problems))
    return kcag


def _key_order(key: tuple) -> tuple:
    kind, payload = key
    if kind == "tech":
        a = payload.app
        return (1, a.sort_key(), tuple(_key_order(p) for p in payload.prereqs), payload.twin)
    return (0, payload.sort_key(), kind == "twin")


def _number(kinds: dict[tuple, VertexKind], preds: dict[tuple, list[tuple]], goals: set[Fact]) -> dict[tuple, int]:
    """Depth-first numbering from the goals: prerequisites before what they enable."""
    ids: dict[tuple, int] = {}
    visiting: set[tuple] = set()

    def order(k: tuple) -> tuple:
        return (_KIND_ORDER[kinds[k]], _key_order(k))

    def visit(k: tuple) -> None:
        if k in ids or k in visiting:
            return
        visiting.add(k)
        for p in sorted(preds.get(k, ()), key=order):
            visit(p)
        visiting.discard(k)
        ids[k] = len(ids) + 1

    sinks = sorted((k for k, kind in kinds.items() if kind is VertexKind.GOAL), key=order)
    for k in sinks:
        visit(k)
    for k in sorted(kinds, key=order):
        visit(k)
    return ids


def _make_vertex(vid: int, key: tuple, kind: VertexKind, ruleset: Ruleset, cm_ids: dict[str, str],
                 phase_map: Mapping[str, frozenset[str]]) -> KcagVertex:
    tag, payload = key
    if tag == "tech":
        ann = ruleset.clauses[payload.app.clause].annotation
        phases = tuple(sorted(phase_map[ann.attack_id], key=lambda p: _index(ruleset.phases, p)))
        return KcagVertex(vid, kind, f"{ann.attack_id} - {ann.name}", attack_id=ann.attack_id,
                          name=ann.name, phases=phases)
    fact: Fact = payload
    asset = None
    if kind in (VertexKind.CONTROL, VertexKind.GOAL):
        asset = _asset_ref(fact, ruleset.categories.get(fact.predicate))
    cm = cm_ids.get(fact.predicate, fact.predicate) if kind is VertexKind.COUNTERMEASURE else None
    return KcagVertex(vid, kind, str(fact), fact=fact, asset=asset, countermeasure=cm)


def _asset_ref(fact: Fact, category: AssetCategory | None) -> AssetRef | None:
    shape = control_shape(fact)
    if shape is None or category is None:
        return None
    level, prop, assets = shape
    ref = f"{fact.predicate}({', '.join(map(str, assets))})"
    return AssetRef(category, ref, level, prop)


def _index(phases: tuple[str, ...], phase: str) -> int:
    return phases.index(phase) if phase in phases else len(phases)


def structural_violations(kcag: Kcag) -> list[str]:
    """Degree, typing and transition invariants; empty when the graph is well-formed."""
    out = []
    for v in kcag.vertices:
        indeg, outdeg = len(kcag.predecessors(v.id)), len(kcag.successors(v.id))
        if v.kind is VertexKind.GOAL and outdeg:
            out.append(f"goal {v.id} has outgoing edges")
        if v.kind in (VertexKind.PROPERTY, VertexKind.COUNTERMEASURE) and indeg:
            out.append(f"{v.kind.value} {v.id} has incoming edges")
        if v.kind is VertexKind.CONTROL and v.asset is not None \
                and v.asset.category is AssetCategory.EXTERNAL_ACTOR and indeg:
            out.append(f"external actor {v.id} has incoming edges")
        if v.kind is VertexKind.TECHNIQUE:
            if indeg < 1:
                out.append(f"technique {v.id} has no prerequisites")
            if outdeg != 1:
                out.append(f"technique {v.id} has {outdeg} outgoing edges")
            else:
                target = kcag.vertex(kcag.successors(v.id)[0])
                if target.kind not in (VertexKind.CONTROL, VertexKind.GOAL):
                    out.append(f"technique {v.id} leads to a {target.kind.value} vertex")
                for p in kcag.predecessors(v.id):
                    src = kcag.vertex(p)
                    if src.kind is VertexKind.TECHNIQUE or src.kind is VertexKind.GOAL:
                        out.append(f"technique {v.id} has a {src.kind.value} prerequisite")
                    elif src.asset is not None and target.asset is not None and \
                            not transition_allowed(src.asset.category, target.asset.category):
                        out.append(f"technique {v.id}: {src.asset.category.title} -> "
                                   f"{target.asset.category.title} is forbidden")
            allowed = kcag.mapping.get(v.attack_id, frozenset())
            if not v.phases or not set(v.phases) <= allowed:
                out.append(f"technique {v.id} phases {v.phases} not a non-empty subset of f({v.attack_id})")
    for u, w in kcag.edges:
        if kcag.vertex(u).kind is not VertexKind.TECHNIQUE and kcag.vertex(w).kind is not VertexKind.TECHNIQUE:
            out.append(f"edge {u}->{w} does not touch a technique")
    return out


# -- spines and phases ------------------------------------------------------------------

def iter_spines(kcag: Kcag, starts: Iterable[KcagVertex] | None = None) -> Iterator[tuple[int, ...]]:
    """Simple alternating control/technique paths from ``starts`` to a goal, depth first."""
    starts = kcag.roots() if starts is None else list(starts)
    for s in sorted(starts, key=lambda v: v.id):
        path = [s.id]
        on_path = {s.id}
        yield from _extend(kcag, path, on_path)


def _extend(kcag: Kcag, path: list[int], on_path: set[int]) -> Iterator[tuple[int, ...]]:
    for t in sorted(kcag.successors(path[-1])):
        tv = kcag.vertex(t)
        if tv.kind is not VertexKind.TECHNIQUE or t in on_path:
            continue
        out = kcag.output_of(t)
        if out in on_path:
            continue
        kind = kcag.vertex(out).kind
        if kind is VertexKind.GOAL:
            yield tuple(path) + (t, out)
        elif kind is VertexKind.CONTROL:
            path += [t, out]
            on_path.update((t, out))
            yield from _extend(kcag, path, on_path)
            del path[-2:]
            on_path.difference_update((t, out))


def phase_relation(kcag: Kcag, order: PhaseOrder | str = PhaseOrder.MONOTONE) -> Callable[[str, str], bool]:
    """Whether phase ``b`` may follow phase ``a`` on consecutive techniques."""
    order = PhaseOrder.parse(order) if isinstance(order, str) else order
    if order is PhaseOrder.MONOTONE:
        return lambda a, b: kcag.phase_index(a) <= kcag.phase_index(b)
    forbidden = kcag.forbidden
    return lambda a, b: (a, b) not in forbidden


def feasible_monotone(candidates: list[list[int]]) -> list[list[int]]:
    """Per-position phase indices lying on some non-decreasing selection.

    A forward pass computes the smallest reachable index at every position,
    a backward pass the largest index still extendable to the end.
    """
    n = len(candidates)
    lo = [0] * n
    floor = -1
    for i, cands in enumerate(candidates):
        ok = [c for c in cands if c >= floor]
        if not ok:
            return [[] for _ in candidates]
        lo[i] = floor = min(ok)
    hi = [0] * n
    ceil = float("inf")
    for i in range(n - 1, -1, -1):
        ok = [c for c in candidates[i] if c <= ceil]
        if not ok:
            return [[] for _ in candidates]
        hi[i] = ceil = max(ok)
    return [sorted(c for c in cands if lo[i] <= c <= hi[i]) for i, cands in enumerate(candidates)]


def feasible_general(candidates: list[list[str]], allowed: Callable[[str, str], bool]) -> list[list[str]]:
    """Arc-consistency over a chain of consecutive-pair constraints (exact on chains)."""
    n = len(candidates)
    fwd = [list(candidates[0])] if n else []
    for i in range(1, n):
        fwd.append([p for p in candidates[i] if any(allowed(q, p) for q in fwd[i - 1])])
    bwd = [[] for _ in range(n)]
    if n:
        bwd[-1] = list(candidates[-1])
    for i in range(n - 2, -1, -1):
        bwd[i] = [p for p in candidates[i] if any(allowed(p, q) for q in bwd[i + 1])]
    return [[p for p in candidates[i] if p in fwd[i] and p in bwd[i]] for i in range(n)]


def spine_phases(kcag: Kcag, spine: tuple[int, ...], order: PhaseOrder | str | None = None,
                 use_assigned: bool = False) -> list[list[str]]:
    """Feasible phases for every technique on one spine, in spine order."""
    order = kcag.order if order is None else order
    order = PhaseOrder.parse(order) if isinstance(order, str) else order
    techs = [kcag.vertex(v) for v in spine if kcag.vertex(v).kind is VertexKind.TECHNIQUE]
    cands = []
    for t in techs:
        pool = t.phases if use_assigned else kcag.mapping.get(t.attack_id, ())
        cands.append(sorted(pool, key=kcag.phase_index))
    if order is PhaseOrder.MONOTONE:
        idx = feasible_monotone([[kcag.phase_index(p) for p in c] for c in cands])
        return [[kcag.phases[i] for i in row] for row in idx]
    return feasible_general(cands, phase_relation(kcag, order))


def walk_phases(kcag: Kcag, order: PhaseOrder | str | None = PhaseOrder.MONOTONE) -> dict[int, set[str]]:
    """Phases usable at each technique on some root-to-goal walk (vertices may repeat).

    A fixpoint of forward and backward phase sets through the control
    vertices.  Every spine is a walk, so the result contains the per-spine
    answer, and on acyclic graphs the two coincide.  ``order=None`` drops
    the ordering constraint.
    """
    if order is None:
        allowed = lambda a, b: True  # noqa: E731
    else:
        allowed = phase_relation(kcag, PhaseOrder.parse(order) if isinstance(order, str) else order)
    techs = kcag.of_kind(VertexKind.TECHNIQUE)
    cands = {t.id: set(kcag.mapping.get(t.attack_id, ())) for t in techs}
    start, end = object(), object()

    def fixpoint(step) -> dict[int, set]:
        out: dict[int, set] = defaultdict(set)
        changed = True
        while changed:
            changed = False
            for t in techs:
                new = step(t.id, out) - out[t.id]
                if new:
                    out[t.id] |= new
                    changed = True
        return out

    roots = {v.id for v in kcag.roots()}

    def forward(t: int, fwd: dict[int, set]) -> set:
        prev: set = set()
        for c in kcag.predecessors(t):
            kind = kcag.vertex(c).kind
            if kind is not VertexKind.CONTROL:
                continue
            if c in roots:
                prev.add(start)
            prev.update(*(fwd[u] for u in kcag.predecessors(c)))
        return {p for p in cands[t] if any(q is start or allowed(q, p) for q in prev)}

    def backward(t: int, bwd: dict[int, set]) -> set:
        out = kcag.output_of(t)
        nxt: set = {end} if kcag.vertex(out).kind is VertexKind.GOAL else set()
        nxt.update(*(bwd[w] for w in kcag.successors(out)))
        return {p for p in cands[t] if any(q is end or allowed(p, q) for q in nxt)}

    fwd, bwd = fixpoint(forward), fixpoint(backward)
    return {t.id: fwd[t.id] & bwd[t.id] for t in techs}


def assign_phases(kcag: Kcag, order: PhaseOrder | str = PhaseOrder.MONOTONE,
                  spine_limit: int = DEFAULT_SPINE_LIMIT) -> Kcag:
    """Narrow every technique's phases to those usable on some root-to-goal spine.

    Raises :class:`PhaseConflict` when a technique has no usable phase on
    any spine through it.  Techniques on no spine keep their full mapping.
    Beyond ``spine_limit`` spines the walk-based fixpoint of
    :func:`walk_phases` is used instead, which may keep extra phases.
    """
    order = PhaseOrder.parse(order) if isinstance(order, str) else order
    union: dict[int, set[str]] = defaultdict(set)
    conflict_spine: dict[int, tuple[int, ...]] = {}
    count = 0
    for spine in iter_spines(kcag):
        count += 1
        if count > spine_limit:
            log.warning("more than %d spines; using walk-based phase propagation", spine_limit)
            on_walk = walk_phases(kcag, None)
            union = defaultdict(set, walk_phases(kcag, order))
            conflict_spine = {t: () for t, p in union.items() if not p and on_walk[t]}
            union = defaultdict(set, {t: p for t, p in union.items() if p})
            break
        feasible = spine_phases(kcag, spine, order)
        techs = [v for v in spine if kcag.vertex(v).kind is VertexKind.TECHNIQUE]
        for t, phases in zip(techs, feasible):
            union[t].update(phases)
            if not phases:
                conflict_spine.setdefault(t, spine)
    vertices = []
    for v in kcag.vertices:
        if v.kind is VertexKind.TECHNIQUE and (v.id in union or v.id in conflict_spine):
            phases = union.get(v.id, set())
            if not phases:
                spine = conflict_spine[v.id]
                hint = " (kill chain loops need the forbidden-pairs order)" \
                    if order is PhaseOrder.MONOTONE else ""
                where = f" on spine {' -> '.join(map(str, spine))}" if spine else ""
                raise PhaseConflict(f"no {order.value} phase ordering exists for {v.label}{where}{hint}", spine)
            v = replace(v, phases=tuple(sorted(phases, key=kcag.phase_index)))
        vertices.append(v)
    return replace(kcag, vertices=tuple(vertices), order=order)
