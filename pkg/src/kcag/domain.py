"""Security-domain vocabulary, organization descriptions and fact grounding.

The organization description is a YAML document (see ``docs/organization.md``)
listing hosts, services, topology, accounts, vulnerabilities, countermeasure
flags and goals.  :func:`ground_facts` turns a validated description into the
ground facts consumed by the inference engine.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from pathlib import Path
from typing import Any, Iterable, Mapping, Union

import yaml

from .errors import DanglingReference, ParseError, SchemaError

Constant = Union[str, int]

INTERNET = "internet"


def _norm(name: str) -> str:
    return re.sub(r"[^a-z0-9]", "", str(name).lower())


class AssetCategory(Enum):
    EXTERNAL_ACTOR = "external_actor"
    ACTOR = "actor"
    SECONDARY_ASSET = "secondary_asset"
    ACTION = "action"
    DATA = "data"

    @classmethod
    def parse(cls, name: str) -> "AssetCategory":
        """Accept ``Data``, ``data``, ``SecondaryAsset``, ``secondary_asset``..."""
        key = _norm(name)
        for member in cls:
            if _norm(member.value) == key:
                return member
        raise ValueError(f"unknown asset category {name!r}")

    @property
    def title(self) -> str:
        return "".join(part.capitalize() for part in self.value.split("_"))


class SecurityProperty(Enum):
    AUTHENTICATION = "authentication"
    INTEGRITY = "integrity"
    NON_REPUDIATION = "non_repudiation"
    CONFIDENTIALITY = "confidentiality"
    AVAILABILITY = "availability"
    AUTHORIZATION = "authorization"

    @classmethod
    def parse(cls, name: str) -> "SecurityProperty":
        key = _norm(name)
        for member in cls:
            if _norm(member.value) == key:
                return member
        raise ValueError(f"unknown security property {name!r}")


class ControlLevel(IntEnum):
    UNKNOWN = 0
    KNOWN = 1
    CONTROLLED = 2


class Impact(Enum):
    CODE_EXECUTION = "codeExecution"
    PRIVILEGE_ESCALATION = "privilegeEscalation"
    CONFIDENTIALITY_LOSS = "confidentialityLoss"
    INTEGRITY_LOSS = "integrityLoss"
    AVAILABILITY_LOSS = "availabilityLoss"

    @classmethod
    def parse(cls, name: str) -> "Impact":
        key = _norm(name)
        for member in cls:
            if _norm(member.value) == key:
                return member
        raise ValueError(f"unknown vulnerability impact {name!r}")


class AttackVector(Enum):
    NETWORK = "NETWORK"
    ADJACENT = "ADJACENT"
    LOCAL = "LOCAL"
    PHYSICAL = "PHYSICAL"

    @property
    def access(self) -> str:
        """Rule-level locality: remote vectors need a network connection first."""
        return "remote" if self in (AttackVector.NETWORK, AttackVector.ADJACENT) else "local"


_ALLOWED_PROPERTIES = {
    AssetCategory.EXTERNAL_ACTOR: frozenset(),
    AssetCategory.ACTOR: frozenset({SecurityProperty.AUTHENTICATION,
                                    SecurityProperty.NON_REPUDIATION}),
    AssetCategory.SECONDARY_ASSET: frozenset(SecurityProperty),
    AssetCategory.ACTION: frozenset(SecurityProperty),
    AssetCategory.DATA: frozenset({SecurityProperty.CONFIDENTIALITY,
                                   SecurityProperty.INTEGRITY,
                                   SecurityProperty.AVAILABILITY}),
}

_C = AssetCategory
_TRANSITIONS = {
    _C.EXTERNAL_ACTOR: frozenset({_C.ACTION}),
    _C.ACTOR: frozenset({_C.SECONDARY_ASSET, _C.ACTION}),
    _C.SECONDARY_ASSET: frozenset({_C.ACTOR, _C.SECONDARY_ASSET, _C.ACTION, _C.DATA}),
    _C.ACTION: frozenset({_C.ACTOR, _C.SECONDARY_ASSET, _C.ACTION, _C.DATA}),
    _C.DATA: frozenset({_C.SECONDARY_ASSET, _C.ACTION}),
}


def allowed_properties(category: AssetCategory) -> frozenset[SecurityProperty]:
    """Security properties an asset of ``category`` can have violated."""
    return _ALLOWED_PROPERTIES[category]


def transition_allowed(source: AssetCategory, target: AssetCategory) -> bool:
    """Whether a technique may turn control over ``source`` into control over ``target``."""
    return target in _TRANSITIONS[source]


DEFAULT_PHASES: tuple[str, ...] = (
    "Reconnaissance",
    "Resource Development",
    "Initial Access",
    "Execution",
    "Persistence",
    "Privilege Escalation",
    "Defense Evasion",
    "Credential Access",
    "Discovery",
    "Lateral Movement",
    "Collection",
    "Command and Control",
    "Exfiltration",
    "Impact",
)


@dataclass(frozen=True, order=True)
class KillChainPhase:
    index: int
    name: str


def resolve_phase(name: str, phases: Iterable[str]) -> str | None:
    """Canonical spelling of ``name`` within ``phases`` (case/space-insensitive)."""
    key = _norm(name)
    for phase in phases:
        if _norm(phase) == key:
            return phase
    return None


@dataclass(frozen=True)
class Technique:
    attack_id: str
    name: str
    phases: frozenset[str]
    violated: frozenset[SecurityProperty]
    countermeasures: frozenset[str] = frozenset()

    def __post_init__(self):
        if not self.phases:
            raise ValueError(f"{self.attack_id}: technique needs at least one phase")
        if not self.violated:
            raise ValueError(f"{self.attack_id}: technique must violate a property")


# -- facts -------------------------------------------------------------------

_IDENT = re.compile(r"[a-z][A-Za-z0-9_]*\Z")


def format_constant(value: Constant) -> str:
    if isinstance(value, bool):
        raise TypeError("booleans are not rule constants")
    if isinstance(value, int):
        return str(value)
    if _IDENT.match(value):
        return value
    return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'


def constant_key(value: Constant) -> tuple:
    """Total order over mixed int/str constants: integers first."""
    return (0, value, "") if isinstance(value, int) else (1, 0, value)


@dataclass(frozen=True)
class Fact:
    predicate: str
    terms: tuple[Constant, ...] = ()

    @property
    def arity(self) -> int:
        return len(self.terms)

    def sort_key(self) -> tuple:
        return (self.predicate, tuple(constant_key(t) for t in self.terms))

    def __lt__(self, other: "Fact") -> bool:
        return self.sort_key() < other.sort_key()

    def __str__(self) -> str:
        if not self.terms:
            return self.predicate
        return f"{self.predicate}({', '.join(format_constant(t) for t in self.terms)})"


# predicate -> arity for every base fact ground_facts may emit; countermeasure
# facts (``<name>(no)``) are checked separately by is_countermeasure_fact.
PREDICATE_SCHEMA: dict[str, int] = {
    "externalActor": 3,
    "host": 1,
    "networkDevice": 1,
    "installed": 2,
    "opensFiles": 1,
    "opensLinks": 1,
    "networkService": 5,
    "remoteService": 2,
    "storesData": 2,
    "reachable": 4,
    "hasAccount": 4,
    "defaultCredentials": 3,
    "clicksAttachments": 1,
    "clicksLinks": 1,
    "publishedEmail": 2,
    "vulnerability": 4,
    "mission": 3,
}


def countermeasure_predicate(identifier: str) -> str:
    """``data_backup`` -> ``dataBackup``; camelCase input passes through."""
    head, *rest = identifier.split("_")
    return head + "".join(part[:1].upper() + part[1:] for part in rest)


def is_countermeasure_fact(fact: Fact) -> bool:
    return fact.terms == ("no",)


# -- organization description --------------------------------------------------

@dataclass(frozen=True)
class Software:
    id: str
    name: str = ""
    opens_files: bool = False
    opens_links: bool = False


@dataclass(frozen=True)
class Host:
    id: str
    type: str = "workstation"
    os: Software | None = None
    software: tuple[Software, ...] = ()

    @property
    def installed(self) -> tuple[Software, ...]:
        return ((self.os,) if self.os else ()) + self.software


@dataclass(frozen=True)
class Service:
    host: str
    software: str
    protocol: str
    port: Constant
    owner: str = "root"
    id: str = ""
    remote_access: bool = False
    stores_data: bool = False


@dataclass(frozen=True)
class Reachability:
    source: str
    target: str
    protocol: str
    port: Constant


@dataclass(frozen=True)
class Identity:
    id: str
    email: str = ""
    opens_attachments: bool = False
    clicks_links: bool = False


@dataclass(frozen=True)
class Account:
    identity: str
    account: str
    host: str
    software: str
    default_credentials: bool = False


@dataclass(frozen=True)
class Vulnerability:
    cve_id: str
    software: str
    impact: Impact
    attack_vector: AttackVector
    exploit_exists: bool


@dataclass(frozen=True)
class GoalSpec:
    property: SecurityProperty
    asset_category: AssetCategory
    asset_ref: str
    level: int = int(ControlLevel.CONTROLLED)

    def __post_init__(self):
        if self.level != ControlLevel.CONTROLLED:
            raise ValueError("goals are violations at control level 2")

    @classmethod
    def parse(cls, text: str) -> "GoalSpec":
        """Parse the CLI form ``property:Category:asset``."""
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"goal {text!r} is not property:Category:asset")
        prop, category, asset = parts
        return cls(SecurityProperty.parse(prop), AssetCategory.parse(category), asset)

    def __str__(self) -> str:
        return f"{self.property.value}:{self.asset_category.title}:{self.asset_ref}"


@dataclass(frozen=True)
class Mission:
    asset: str
    category: AssetCategory
    property: SecurityProperty


@dataclass(frozen=True)
class OrganizationDescription:
    hosts: tuple[Host, ...] = ()
    services: tuple[Service, ...] = ()
    topology: tuple[Reachability, ...] = ()
    identities: tuple[Identity, ...] = ()
    accounts: tuple[Account, ...] = ()
    published_emails: frozenset[str] = frozenset()
    vulnerabilities: tuple[Vulnerability, ...] = ()
    countermeasure_flags: Mapping[str, bool] = field(default_factory=dict)
    missions: tuple[Mission, ...] = ()
    goals: tuple[GoalSpec, ...] = ()
    name: str = ""

    @property
    def software(self) -> dict[str, Software]:
        out: dict[str, Software] = {}
        for host in self.hosts:
            for sw in host.installed:
                out.setdefault(sw.id, sw)
        return out

    def declared_assets(self) -> set[str]:
        assets = {h.id for h in self.hosts} | set(self.software)
        assets |= {i.id for i in self.identities} | {i.email for i in self.identities if i.email}
        assets |= {a.account for a in self.accounts}
        assets |= {s.id for s in self.services if s.id}
        return assets

    def with_applied(self, applied: Iterable[str]) -> "OrganizationDescription":
        """Copy with the given countermeasures switched on."""
        applied = set(applied)
        unknown = applied - set(self.countermeasure_flags)
        if unknown:
            raise DanglingReference(f"unknown countermeasure(s): {', '.join(sorted(unknown))}")
        flags = {cm: (on or cm in applied) for cm, on in self.countermeasure_flags.items()}
        return _replace(self, countermeasure_flags=flags)

    def with_goals(self, goals: Iterable[GoalSpec]) -> "OrganizationDescription":
        goals = tuple(goals)
        _check_goals(self, goals)
        return _replace(self, goals=goals)


def _replace(org: OrganizationDescription, **changes) -> OrganizationDescription:
    from dataclasses import replace
    return replace(org, **changes)


# -- loading -----------------------------------------------------------------

_TOP_KEYS = {"hosts", "services", "topology", "identities", "accounts", "vulnerabilities",
             "countermeasures", "general", "missions", "goals"}


class _Reader:
    """Schema-checking accessors that report the offending path."""

    def __init__(self, source: str):
        self.source = source

    def fail(self, path: str, message: str) -> SchemaError:
        return SchemaError(f"{self.source}: {path}: {message}")

    def mapping(self, value: Any, path: str, keys: set[str], required: set[str] = frozenset()) -> dict:
        if not isinstance(value, dict):
            raise self.fail(path, f"expected a mapping, got {type(value).__name__}")
        unknown = set(value) - keys
        if unknown:
            raise self.fail(path, f"unknown key(s): {', '.join(sorted(map(str, unknown)))}")
        missing = required - set(value)
        if missing:
            raise self.fail(path, f"missing key(s): {', '.join(sorted(missing))}")
        return value

    def sequence(self, value: Any, path: str) -> list:
        if value is None:
            return []
        if not isinstance(value, list):
            raise self.fail(path, f"expected a list, got {type(value).__name__}")
        return value

    def string(self, value: Any, path: str) -> str:
        if isinstance(value, bool) or not isinstance(value, (str, int)):
            raise self.fail(path, f"expected a string, got {type(value).__name__}")
        return str(value)

    def flag(self, value: Any, path: str) -> bool:
        if not isinstance(value, bool):
            raise self.fail(path, f"expected true/false, got {value!r}")
        return value

    def port(self, value: Any, path: str) -> Constant:
        if isinstance(value, bool) or not isinstance(value, (str, int)):
            raise self.fail(path, f"expected a port number or name, got {value!r}")
        return value

    def enum(self, parse, value: Any, path: str):
        try:
            return parse(self.string(value, path))
        except ValueError as exc:
            raise self.fail(path, str(exc)) from None


def load_organization(path: str | Path) -> OrganizationDescription:
    """Load and validate an organization description from a YAML file."""
    path = Path(path)
    return parse_organization(path.read_text(encoding="utf-8"), source=str(path))


def parse_organization(text: str, source: str = "<string>") -> OrganizationDescription:
    try:
        doc = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line = mark.line + 1 if mark else None
        column = mark.column + 1 if mark else None
        raise ParseError(str(exc.problem or exc), line, column, source) from None
    except yaml.YAMLError as exc:
        raise ParseError(str(exc), source=source) from None
    if doc is None:
        doc = {}
    r = _Reader(source)
    doc = r.mapping(doc, "<root>", _TOP_KEYS)

    hosts = tuple(_read_host(r, h, f"hosts[{i}]") for i, h in enumerate(r.sequence(doc.get("hosts"), "hosts")))
    services = []
    for i, s in enumerate(r.sequence(doc.get("services"), "services")):
        p = f"services[{i}]"
        s = r.mapping(s, p, {"id", "host", "software", "protocol", "port", "owner",
                             "remote_access", "stores_data"}, {"host", "software", "protocol", "port"})
        services.append(Service(
            host=r.string(s["host"], p + ".host"),
            software=r.string(s["software"], p + ".software"),
            protocol=r.string(s["protocol"], p + ".protocol"),
            port=r.port(s["port"], p + ".port"),
            owner=r.string(s.get("owner", "root"), p + ".owner"),
            id=r.string(s.get("id", ""), p + ".id"),
            remote_access=r.flag(s.get("remote_access", False), p + ".remote_access"),
            stores_data=r.flag(s.get("stores_data", False), p + ".stores_data"),
        ))
    topology = []
    for i, t in enumerate(r.sequence(doc.get("topology"), "topology")):
        p = f"topology[{i}]"
        t = r.mapping(t, p, {"from", "to", "protocol", "port"}, {"from", "to", "protocol", "port"})
        topology.append(Reachability(r.string(t["from"], p + ".from"), r.string(t["to"], p + ".to"),
                                     r.string(t["protocol"], p + ".protocol"),
                                     r.port(t["port"], p + ".port")))
    identities = []
    for i, ident in enumerate(r.sequence(doc.get("identities"), "identities")):
        p = f"identities[{i}]"
        ident = r.mapping(ident, p, {"id", "email", "opens_attachments", "clicks_links"}, {"id"})
        identities.append(Identity(
            id=r.string(ident["id"], p + ".id"),
            email=r.string(ident.get("email", ""), p + ".email"),
            opens_attachments=r.flag(ident.get("opens_attachments", False), p + ".opens_attachments"),
            clicks_links=r.flag(ident.get("clicks_links", False), p + ".clicks_links"),
        ))
    accounts = []
    for i, a in enumerate(r.sequence(doc.get("accounts"), "accounts")):
        p = f"accounts[{i}]"
        a = r.mapping(a, p, {"identity", "account", "host", "software", "default_credentials"},
                      {"identity", "account", "host", "software"})
        accounts.append(Account(
            identity=r.string(a["identity"], p + ".identity"),
            account=r.string(a["account"], p + ".account"),
            host=r.string(a["host"], p + ".host"),
            software=r.string(a["software"], p + ".software"),
            default_credentials=r.flag(a.get("default_credentials", False), p + ".default_credentials"),
        ))
    vulns = []
    for i, v in enumerate(r.sequence(doc.get("vulnerabilities"), "vulnerabilities")):
        p = f"vulnerabilities[{i}]"
        v = r.mapping(v, p, {"cve", "software", "impact", "attack_vector", "exploit"},
                      {"cve", "software", "impact", "attack_vector", "exploit"})
        vulns.append(Vulnerability(
            cve_id=r.string(v["cve"], p + ".cve"),
            software=r.string(v["software"], p + ".software"),
            impact=r.enum(Impact.parse, v["impact"], p + ".impact"),
            attack_vector=r.enum(lambda s: AttackVector(s.upper()), v["attack_vector"], p + ".attack_vector"),
            exploit_exists=r.flag(v["exploit"], p + ".exploit"),
        ))
    flags: dict[str, bool] = {}
    cms = doc.get("countermeasures") or {}
    if not isinstance(cms, dict):
        raise r.fail("countermeasures", "expected a mapping of identifier -> {applied: bool}")
    for cm_id, body in cms.items():
        p = f"countermeasures.{cm_id}"
        body = r.mapping(body, p, {"applied", "name", "description"}, {"applied"})
        flags[r.string(cm_id, p)] = r.flag(body["applied"], p + ".applied")
    general = r.mapping(doc.get("general") or {}, "general", {"name", "published_emails"})
    published = frozenset(r.string(x, f"general.published_emails[{i}]")
                          for i, x in enumerate(r.sequence(general.get("published_emails"),
                                                           "general.published_emails")))
    missions = []
    for i, m in enumerate(r.sequence(doc.get("missions"), "missions")):
        p = f"missions[{i}]"
        m = r.mapping(m, p, {"asset", "category", "property"}, {"asset", "category", "property"})
        missions.append(Mission(r.string(m["asset"], p + ".asset"),
                                r.enum(AssetCategory.parse, m["category"], p + ".category"),
                                r.enum(SecurityProperty.parse, m["property"], p + ".property")))
    goals = []
    for i, g in enumerate(r.sequence(doc.get("goals"), "goals")):
        p = f"goals[{i}]"
        g = r.mapping(g, p, {"asset", "category", "property", "level"}, {"asset", "category", "property"})
        level = g.get("level", 2)
        if level != 2:
            raise r.fail(p + ".level", "goals must use control level 2")
        goals.append(GoalSpec(r.enum(SecurityProperty.parse, g["property"], p + ".property"),
                              r.enum(AssetCategory.parse, g["category"], p + ".category"),
                              r.string(g["asset"], p + ".asset")))
    for m in missions:
        goal = GoalSpec(m.property, m.category, m.asset)
        if goal not in goals:
            goals.append(goal)

    org = OrganizationDescription(
        hosts=hosts, services=tuple(services), topology=tuple(topology),
        identities=tuple(identities), accounts=tuple(accounts), published_emails=published,
        vulnerabilities=tuple(vulns), countermeasure_flags=flags, missions=tuple(missions),
        goals=tuple(goals), name=r.string(general.get("name", ""), "general.name"),
    )
    _check_references(org, source)
    return org


def _read_software(r: _Reader, value: Any, path: str) -> Software:
    if isinstance(value, str):
        return Software(value)
    value = r.mapping(value, path, {"id", "name", "opens_files", "opens_links"}, {"id"})
    return Software(r.string(value["id"], path + ".id"), r.string(value.get("name", ""), path + ".name"),
                    r.flag(value.get("opens_files", False), path + ".opens_files"),
                    r.flag(value.get("opens_links", False), path + ".opens_links"))


def _read_host(r: _Reader, value: Any, path: str) -> Host:
    value = r.mapping(value, path, {"id", "type", "os", "software"}, {"id"})
    host_type = r.string(value.get("type", "workstation"), path + ".type")
    if host_type not in ("workstation", "server", "router"):
        raise r.fail(path + ".type", f"expected workstation|server|router, got {host_type!r}")
    os_ = _read_software(r, value["os"], path + ".os") if value.get("os") is not None else None
    software = tuple(_read_software(r, s, f"{path}.software[{i}]")
                     for i, s in enumerate(r.sequence(value.get("software"), path + ".software")))
    return Host(r.string(value["id"], path + ".id"), host_type, os_, software)


def _check_references(org: OrganizationDescription, source: str) -> None:
    def dup(ids: list[str], what: str):
        seen = set()
        for x in ids:
            if x in seen:
                raise SchemaError(f"{source}: duplicate {what} {x!r}")
            seen.add(x)

    dup([h.id for h in org.hosts], "host")
    dup([i.id for i in org.identities], "identity")
    for h in org.hosts:
        dup([s.id for s in h.installed], f"software on host {h.id}")
    hosts = {h.id: h for h in org.hosts}
    installed = {(h.id, s.id) for h in org.hosts for s in h.installed}
    software = set(org.software)
    identities = {i.id for i in org.identities}

    def missing(what: str, ref: str, where: str) -> DanglingReference:
        return DanglingReference(f"{source}: {where} references unknown {what} {ref!r}")

    for s in org.services:
        if s.host not in hosts:
            raise missing("host", s.host, "service")
        if (s.host, s.software) not in installed:
            raise missing(f"software on host {s.host}", s.software, "service")
    for t in org.topology:
        for end in (t.source, t.target):
            if end != INTERNET and end not in hosts:
                raise missing("host", end, "topology")
    for a in org.accounts:
        if a.identity not in identities:
            raise missing("identity", a.identity, f"account {a.account}")
        if a.host not in hosts:
            raise missing("host", a.host, f"account {a.account}")
        if (a.host, a.software) not in installed:
            raise missing(f"software on host {a.host}", a.software, f"account {a.account}")
    for v in org.vulnerabilities:
        if v.software not in software:
            raise missing("installed software", v.software, f"vulnerability {v.cve_id}")
    for ident in org.published_emails:
        if ident not in identities:
            raise missing("identity", ident, "general.published_emails")
    for m in org.missions:
        if m.asset not in org.declared_assets():
            raise missing("asset", m.asset, "mission")
    _check_goals(org, org.goals, source)


def _check_goals(org: OrganizationDescription, goals: Iterable[GoalSpec], source: str = "") -> None:
    assets = org.declared_assets()
    for g in goals:
        if g.asset_ref not in assets:
            prefix = f"{source}: " if source else ""
            raise DanglingReference(f"{prefix}goal {g} references unknown asset {g.asset_ref!r}")


# -- grounding -----------------------------------------------------------------

def ground_facts(org: OrganizationDescription) -> frozenset[Fact]:
    """Base facts describing ``org`` (see ``PREDICATE_SCHEMA``)."""
    facts: set[Fact] = {Fact("externalActor", (int(ControlLevel.UNKNOWN), "none", INTERNET))}
    emails = {i.id: i.email for i in org.identities}
    for h in org.hosts:
        facts.add(Fact("host", (h.id,)))
        if h.type == "router":
            facts.add(Fact("networkDevice", (h.id,)))
        for sw in h.installed:
            facts.add(Fact("installed", (h.id, sw.id)))
            if sw.opens_files:
                facts.add(Fact("opensFiles", (sw.id,)))
            if sw.opens_links:
                facts.add(Fact("opensLinks", (sw.id,)))
    for s in org.services:
        facts.add(Fact("networkService", (s.host, s.software, s.protocol, s.port, s.owner)))
        if s.remote_access:
            facts.add(Fact("remoteService", (s.host, s.software)))
        if s.stores_data:
            facts.add(Fact("storesData", (s.host, s.software)))
    for t in org.topology:
        facts.add(Fact("reachable", (t.source, t.target, t.protocol, t.port)))
    for a in org.accounts:
        facts.add(Fact("hasAccount", (a.identity, a.account, a.host, a.software)))
        if a.default_credentials:
            facts.add(Fact("defaultCredentials", (a.account, a.host, a.software)))
    for i in org.identities:
        if i.opens_attachments:
            facts.add(Fact("clicksAttachments", (i.id,)))
        if i.clicks_links:
            facts.add(Fact("clicksLinks", (i.id,)))
    for ident in org.published_emails:
        facts.add(Fact("publishedEmail", (ident, emails[ident] or ident)))
    for v in org.vulnerabilities:
        if v.exploit_exists:
            facts.add(Fact("vulnerability", (v.software, v.cve_id, v.impact.value, v.attack_vector.access)))
    for cm, applied in org.countermeasure_flags.items():
        if not applied:
            facts.add(Fact(countermeasure_predicate(cm), ("no",)))
    for m in org.missions:
        facts.add(Fact("mission", (m.asset, m.category.value, m.property.value)))
    return frozenset(facts)
