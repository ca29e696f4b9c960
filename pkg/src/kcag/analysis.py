"""Attack paths, strategic techniques and countermeasure recommendations."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Sequence

from .errors import KcagError, Uncoverable
from .graph import Kcag, PhaseOrder, VertexKind, iter_spines, spine_phases

log = logging.getLogger(__name__)

DEFAULT_PATH_LIMIT = 10_000
EXACT_MAX_COUNTERMEASURES = 24
EXACT_MAX_PATHS = 10_000
DEFAULT_REPORT_LIMIT = 100


@dataclass(frozen=True)
class AttackPath:
    """A simple control/technique spine from the external actor to a goal."""

    spine: tuple[int, ...]
    techniques: tuple[int, ...]
    attack_ids: tuple[str, ...]
    # technique vertex id -> property/countermeasure prerequisite ids
    attachments: tuple[tuple[int, tuple[int, ...]], ...]
    phases: tuple[tuple[str, ...], ...]

    @property
    def goal(self) -> int:
        return self.spine[-1]

    def attachment_ids(self) -> set[int]:
        return {a for _, ids in self.attachments for a in ids}

    def to_dict(self) -> dict:
        return {"spine": list(self.spine),
                "techniques": [{"id": t, "attack_id": a, "phases": list(p), "attachments": list(att)}
                               for t, a, p, (_, att) in zip(self.techniques, self.attack_ids,
                                                            self.phases, self.attachments)]}


@dataclass(frozen=True)
class PathLimit:
    limit: int

    def __str__(self) -> str:
        return f"path enumeration stopped at the limit of {self.limit} paths; results are partial"


@dataclass(frozen=True)
class PathEnumeration(Sequence):
    paths: tuple[AttackPath, ...] = ()
    limit_hit: PathLimit | None = None

    @property
    def truncated(self) -> bool:
        return self.limit_hit is not None

    def __getitem__(self, i):
        return self.paths[i]

    def __len__(self) -> int:
        return len(self.paths)


def make_path(kcag: Kcag, spine: tuple[int, ...], order: PhaseOrder | str | None = None) -> AttackPath:
    techs = tuple(v for v in spine if kcag.vertex(v).kind is VertexKind.TECHNIQUE)
    attachments = []
    for t in techs:
        att = tuple(sorted(p for p in kcag.predecessors(t)
                           if kcag.vertex(p).kind in (VertexKind.PROPERTY, VertexKind.COUNTERMEASURE)))
        attachments.append((t, att))
    phases = spine_phases(kcag, spine, order, use_assigned=True)
    return AttackPath(spine, techs, tuple(kcag.vertex(t).attack_id for t in techs),
                      tuple(attachments), tuple(tuple(p) for p in phases))


def enumerate_paths(kcag: Kcag, limit: int = DEFAULT_PATH_LIMIT,
                    order: PhaseOrder | str | None = None) -> PathEnumeration:
    """All simple spines from external-actor vertices to goals, depth first in vertex-id order.

    Per-path phases use ``order``, by default the order the KCAG was
    assigned with.  Hitting ``limit`` returns the paths found so far with a :class:`PathLimit`
    marker rather than truncating silently.
    """
    if limit <= 0:
        raise ValueError("path limit must be positive")
    paths = []
    for spine in iter_spines(kcag, kcag.external_actors()):
        if len(paths) == limit:
            log.warning("path limit %d reached", limit)
            return PathEnumeration(tuple(paths), PathLimit(limit))
        paths.append(make_path(kcag, spine, order))
    return PathEnumeration(tuple(paths))


# -- strategic techniques and phases ----------------------------------------------------

@dataclass(frozen=True)
class StrategicReport:
    total: int = 0
    techniques: tuple[tuple[str, int], ...] = ()
    phases: tuple[tuple[str, int], ...] = ()
    strategic_techniques: tuple[str, ...] = ()
    strategic_phases: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"paths": self.total, "techniques": dict(self.techniques), "phases": dict(self.phases),
                "strategic_techniques": list(self.strategic_techniques),
                "strategic_phases": list(self.strategic_phases)}


def _attack_key(attack_id: str) -> tuple:
    head, _, sub = attack_id.partition(".")
    return (head, int(sub) if sub.isdigit() else -1, attack_id)


def strategic(paths: Iterable[AttackPath], phase_order: Sequence[str] = ()) -> StrategicReport:
    """Histograms of techniques and assigned phases, each counted once per path."""
    paths = list(paths)
    tech = Counter()
    phase = Counter()
    for p in paths:
        tech.update(set(p.attack_ids))
        phase.update({ph for row in p.phases for ph in row})
    rank = {name: i for i, name in enumerate(phase_order)}

    def phase_key(name: str) -> tuple:
        return (rank.get(name, len(rank)), name)

    techniques = tuple(sorted(tech.items(), key=lambda kv: _attack_key(kv[0])))
    phases = tuple(sorted(phase.items(), key=lambda kv: phase_key(kv[0])))
    top_t = max(tech.values(), default=0)
    top_p = max(phase.values(), default=0)
    return StrategicReport(
        total=len(paths), techniques=techniques, phases=phases,
        strategic_techniques=tuple(k for k, n in techniques if n == top_t),
        strategic_phases=tuple(k for k, n in phases if n == top_p))


# -- countermeasure hitting sets ----------------------------------------------------------

class Method(Enum):
    EXACT = "exact"
    GREEDY = "greedy"


@dataclass(frozen=True)
class CountermeasurePlan:
    destroyed: tuple[tuple[str, int], ...]
    hitting_sets: tuple[tuple[str, ...], ...]
    method: Method
    total_paths: int
    complete: bool = True  # False when more minimum sets exist than were reported

    def to_dict(self) -> dict:
        return {"paths": self.total_paths, "method": self.method.value,
                "destroyed": dict(self.destroyed), "hitting_sets": [list(s) for s in self.hitting_sets],
                "complete": self.complete}


def coverage(kcag: Kcag, paths: Iterable[AttackPath]) -> dict[str, int]:
    """Countermeasure id -> bitmask of paths it destroys."""
    cover: dict[str, int] = {}
    for v in kcag.of_kind(VertexKind.COUNTERMEASURE):
        cover[v.countermeasure or v.label] = 0
    for i, p in enumerate(paths):
        for _, att in p.attachments:
            for a in att:
                v = kcag.vertex(a)
                if v.kind is VertexKind.COUNTERMEASURE:
                    cover[v.countermeasure or v.label] |= 1 << i
    return cover


def minimum_hitting_sets(cover: dict[str, int], n_paths: int,
                         max_sets: int = DEFAULT_REPORT_LIMIT) -> tuple[list[tuple[str, ...]], bool]:
    """All minimum-cardinality sets of keys whose masks jointly cover ``n_paths`` bits.

    Iterative deepening over the set size; each level branches on the
    uncovered path with the fewest candidate covers.  Candidates already
    branched on are excluded from later siblings, so every set is produced
    exactly once.  Returns (sets, complete).
    """
    full = (1 << n_paths) - 1
    if full == 0:
        return [()], True
    names = sorted(k for k, m in cover.items() if m)
    masks = [cover[k] for k in names]
    union = 0
    for m in masks:
        union |= m
    if union != full:
        raise Uncoverable("some attack paths cannot be blocked by any countermeasure",
                          tuple(i for i in range(n_paths) if not (union >> i) & 1))
    path_covers = [[j for j, m in enumerate(masks) if (m >> i) & 1] for i in range(n_paths)]
    best_single = max(bin(m).count("1") for m in masks)

    found: list[tuple[str, ...]] = []
    complete = True

    def search(covered: int, budget: int, banned: int, chosen: list[int]) -> None:
        nonlocal complete
        if not complete:
            return
        if covered == full:
            if len(found) == max_sets:
                complete = False
            else:
                found.append(tuple(names[j] for j in chosen))
            return
        if budget == 0:
            return
        remaining = bin(full & ~covered).count("1")
        if remaining > budget * best_single:
            return
        options = None
        rest = full & ~covered
        while rest:
            low = rest & -rest
            i = low.bit_length() - 1
            rest ^= low
            opts = [j for j in path_covers[i] if not (banned >> j) & 1]
            if not opts:
                return
            if options is None or len(opts) < len(options):
                options = opts
                if len(opts) == 1:
                    break
        local_ban = banned
        for j in options:
            chosen.append(j)
            search(covered | masks[j], budget - 1, local_ban | (1 << j), chosen)
            chosen.pop()
            local_ban |= 1 << j

    for k in range(1, len(names) + 1):
        search(0, k, 0, [])
        if found:
            break
    sets = sorted({tuple(sorted(s)) for s in found})
    return sets, complete


def greedy_hitting_set(cover: dict[str, int], n_paths: int) -> tuple[str, ...]:
    full = (1 << n_paths) - 1
    covered = 0
    chosen = []
    names = sorted(cover)
    while covered != full:
        gain, name = 0, None
        for k in names:
            g = bin(cover[k] & ~covered).count("1")
            if g > gain:
                gain, name = g, k
        if not gain:
            raise Uncoverable("some attack paths cannot be blocked by any countermeasure",
                              tuple(i for i in range(n_paths) if not (covered >> i) & 1))
        chosen.append(name)
        covered |= cover[name]
    return tuple(sorted(chosen))


def without_countermeasures(kcag: Kcag, applied: Iterable[str]) -> Kcag:
    """Graph-level what-if: drop the applied countermeasures and every technique they feed."""
    applied = set(applied)
    drop = {v.id for v in kcag.of_kind(VertexKind.COUNTERMEASURE) if (v.countermeasure or v.label) in applied}
    drop |= {w for d in drop for w in kcag.successors(d)}
    return replace(kcag, vertices=tuple(v for v in kcag.vertices if v.id not in drop),
                   edges=tuple(e for e in kcag.edges if e[0] not in drop and e[1] not in drop))


def recommend_countermeasures(kcag: Kcag, paths: Sequence[AttackPath], *,
                              exact_max_countermeasures: int = EXACT_MAX_COUNTERMEASURES,
                              exact_max_paths: int = EXACT_MAX_PATHS,
                              max_sets: int = DEFAULT_REPORT_LIMIT) -> CountermeasurePlan:
    """Destroyed-path counts per countermeasure and the minimum sets destroying every path.

    Every reported set is checked by re-enumerating paths on the graph with
    that set applied.
    """
    paths_in, paths = paths, list(paths)
    cover = coverage(kcag, paths)
    destroyed = tuple(sorted((k, bin(m).count("1")) for k, m in cover.items()))
    if len(cover) <= exact_max_countermeasures and len(paths) <= exact_max_paths:
        sets, complete = minimum_hitting_sets(cover, len(paths), max_sets)
        method = Method.EXACT
    else:
        sets, complete = [greedy_hitting_set(cover, len(paths))], True
        method = Method.GREEDY
    if getattr(paths_in, "truncated", False):
        log.warning("path set is partial; countermeasure sets are not verified")
        return CountermeasurePlan(destroyed, tuple(sets), method, len(paths), complete)
    for s in sets:
        left = enumerate_paths(without_countermeasures(kcag, s), limit=max(1, len(paths)) + 1)
        if len(left):
            raise KcagError(f"internal error: countermeasure set {s} leaves {len(left)} paths")
    return CountermeasurePlan(destroyed, tuple(sets), method, len(paths), complete)


def what_if(org, ruleset, applied: Iterable[str], **options) -> tuple[Kcag, PathEnumeration]:
    """Re-run the whole pipeline with ``applied`` countermeasures switched on."""
    from .pipeline import generate

    path_limit = options.pop("path_limit", DEFAULT_PATH_LIMIT)
    result = generate(org.with_applied(applied), ruleset, **options)
    return result.kcag, enumerate_paths(result.kcag, path_limit)

