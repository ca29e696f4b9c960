"""Kill chain attack graph generation and analysis."""

from __future__ import annotations

from .analysis import (
    AttackPath,
    CountermeasurePlan,
    PathEnumeration,
    StrategicReport,
    enumerate_paths,
    recommend_countermeasures,
    strategic,
    what_if,
)
from .domain import (
    AssetCategory,
    ControlLevel,
    Fact,
    GoalSpec,
    OrganizationDescription,
    SecurityProperty,
    allowed_properties,
    ground_facts,
    load_organization,
    parse_organization,
    transition_allowed,
)
from .errors import KcagError
from .graph import Kcag, KcagVertex, PhaseOrder, VertexKind, assign_phases, build_kcag
from .inference import prune_to_goals, saturate
from .pipeline import generate
from .rules import Ruleset, builtin_ruleset, load_ruleset, parse_ruleset, validate_ruleset

__version__ = "0.1.0"

__all__ = [
    "AssetCategory", "AttackPath", "ControlLevel", "CountermeasurePlan", "Fact", "GoalSpec", "Kcag",
    "KcagError", "KcagVertex", "OrganizationDescription", "PathEnumeration", "PhaseOrder", "Ruleset",
    "SecurityProperty", "StrategicReport", "VertexKind", "allowed_properties", "assign_phases",
    "build_kcag", "builtin_ruleset", "enumerate_paths", "generate", "ground_facts", "load_organization",
    "load_ruleset", "parse_organization", "parse_ruleset", "prune_to_goals", "recommend_countermeasures",
    "saturate", "strategic", "transition_allowed", "validate_ruleset", "what_if",
]
