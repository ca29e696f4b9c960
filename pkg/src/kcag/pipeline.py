"""End-to-end generation: organization + ruleset -> phase-assigned KCAG."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable

from .domain import Fact, GoalSpec, OrganizationDescription, ground_facts
from .graph import DEFAULT_SPINE_LIMIT, Kcag, PhaseOrder, assign_phases, build_kcag
from .inference import DEFAULT_FACT_LIMIT, DerivationGraph, NotDerivable, PruneResult, prune_to_goals, saturate
from .rules import Ruleset, builtin_ruleset

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GenerationResult:
    kcag: Kcag
    base: frozenset[Fact]
    derivation: DerivationGraph
    pruned: PruneResult
    phase_order: PhaseOrder
    diagnostics: tuple[NotDerivable, ...] = ()


def generate(org: OrganizationDescription, ruleset: Ruleset | None = None, *,
             goals: Iterable[GoalSpec | Fact] | None = None,
             phase_order: PhaseOrder | str = PhaseOrder.MONOTONE,
             fact_limit: int = DEFAULT_FACT_LIMIT,
             spine_limit: int = DEFAULT_SPINE_LIMIT) -> GenerationResult:
    """Ground, saturate, prune, build and phase-assign.

    ``goals`` overrides the organization's goals.  With no goal at all, or
    none derivable, the KCAG is empty and a :class:`NotDerivable` diagnostic
    is attached.
    """
    ruleset = ruleset if ruleset is not None else builtin_ruleset()
    order = PhaseOrder.parse(phase_order) if isinstance(phase_order, str) else phase_order
    goals = tuple(org.goals if goals is None else goals)
    base = ground_facts(org)
    _, derivation = saturate(base, ruleset, fact_limit)
    log.info("saturated: %d facts, %d rule firings", len(derivation.facts), len(derivation.applications))
    pruned = prune_to_goals(derivation, goals, ruleset.categories)
    diagnostics = pruned.diagnostics
    if not goals:
        diagnostics = (NotDerivable(()),)
    if pruned.graph.is_empty():
        kcag = Kcag(phases=ruleset.phases, order=order)
    else:
        kcag = assign_phases(build_kcag(pruned, ruleset, org), order, spine_limit)
    log.info("kcag: %d vertices, %d edges", len(kcag.vertices), len(kcag.edges))
    return GenerationResult(kcag, base, derivation, pruned, order, diagnostics)
