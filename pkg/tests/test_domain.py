from __future__ import annotations

import pytest

from kcag.domain import (
    DEFAULT_PHASES,
    AssetCategory,
    Fact,
    GoalSpec,
    SecurityProperty,
    allowed_properties,
    countermeasure_predicate,
    ground_facts,
    parse_organization,
    resolve_phase,
    transition_allowed,
)
from kcag.errors import DanglingReference, ParseError, SchemaError

A = AssetCategory
P = SecurityProperty


def test_phase_set_is_the_fourteen_enterprise_tactics():
    assert len(DEFAULT_PHASES) == 14
    assert DEFAULT_PHASES[0] == "Reconnaissance" and DEFAULT_PHASES[-1] == "Impact"
    assert resolve_phase("privilege escalation", DEFAULT_PHASES) == "Privilege Escalation"
    assert resolve_phase("Lateral_Movement", DEFAULT_PHASES) == "Lateral Movement"
    assert resolve_phase("Teleportation", DEFAULT_PHASES) is None


def test_allowed_properties_per_category():
    assert allowed_properties(A.EXTERNAL_ACTOR) == frozenset()
    assert allowed_properties(A.ACTOR) == {P.AUTHENTICATION, P.NON_REPUDIATION}
    assert allowed_properties(A.DATA) == {P.CONFIDENTIALITY, P.INTEGRITY, P.AVAILABILITY}
    assert allowed_properties(A.ACTION) == set(P)
    assert allowed_properties(A.SECONDARY_ASSET) == set(P)


def test_no_transition_returns_to_the_external_actor():
    assert not any(transition_allowed(src, A.EXTERNAL_ACTOR) for src in A)


def test_category_and_property_parsing_is_lenient():
    assert A.parse("Secondary Asset") is A.SECONDARY_ASSET
    assert A.parse("external-actor") is A.EXTERNAL_ACTOR
    assert P.parse("Non-Repudiation") is P.NON_REPUDIATION
    with pytest.raises(ValueError):
        A.parse("planet")


def test_goal_spec_cli_form():
    g = GoalSpec.parse("integrity:Data:pc")
    assert (g.property, g.asset_category, g.asset_ref, g.level) == (P.INTEGRITY, A.DATA, "pc", 2)
    assert str(g) == "integrity:Data:pc"
    with pytest.raises(ValueError):
        GoalSpec.parse("integrity:pc")
    with pytest.raises(ValueError):
        GoalSpec(P.INTEGRITY, A.DATA, "pc", level=1)


def test_countermeasure_predicate_names():
    assert countermeasure_predicate("data_backup") == "dataBackup"
    assert countermeasure_predicate("sender_reputation_analysis") == "senderReputationAnalysis"
    assert countermeasure_predicate("userTraining") == "userTraining"


def test_fact_ordering_puts_integers_first():
    facts = [Fact("p", ("b",)), Fact("p", (2,)), Fact("p", ("a",)), Fact("o", ("z",))]
    assert [str(f) for f in sorted(facts)] == ["o(z)", "p(2)", "p(a)", "p(b)"]
    assert str(Fact("e", ("x@y.org",))) == 'e("x@y.org")'


# -- grounding --------------------------------------------------------------------------

# Hand-enumerated from fixtures/phishing/organization.yml, one fact per YAML item.
PHISHING_FACTS = {
    "externalActor(0, none, internet)",
    "host(pc)",
    "installed(pc, windows_8_1)",
    "installed(pc, ms_office)",
    "opensFiles(ms_office)",
    "reachable(pc, internet, tcp, 443)",
    'publishedEmail(employee, "employee@example.org")',
    "clicksAttachments(employee)",
    "hasAccount(employee, employee_user, pc, windows_8_1)",
    'vulnerability(ms_office, "CVE-2017-0262", codeExecution, local)',
    'vulnerability(windows_8_1, "CVE-2017-0263", privilegeEscalation, local)',
    "senderReputationAnalysis(no)",
    "userTraining(no)",
    "softwareUpdate(no)",
    "dataBackup(no)",
    "mission(pc, data, integrity)",
}


def test_phishing_grounding_matches_hand_enumeration(phishing_org):
    assert {str(f) for f in ground_facts(phishing_org)} == PHISHING_FACTS


def test_applied_countermeasure_suppresses_its_fact(phishing_org):
    facts = {str(f) for f in ground_facts(phishing_org.with_applied(["data_backup"]))}
    assert "dataBackup(no)" not in facts
    assert PHISHING_FACTS - facts == {"dataBackup(no)"}


def test_unknown_countermeasure_is_rejected(phishing_org):
    with pytest.raises(DanglingReference):
        phishing_org.with_applied(["moat"])


def test_mission_becomes_a_goal(phishing_org):
    assert phishing_org.goals == (GoalSpec(P.INTEGRITY, A.DATA, "pc"),)


def test_grounding_is_a_pure_function(phishing_org):
    assert ground_facts(phishing_org) == ground_facts(phishing_org)


def test_vulnerability_without_exploit_emits_nothing():
    org = parse_organization("""
hosts: [{id: h, software: [app]}]
vulnerabilities:
  - {cve: CVE-1, software: app, impact: CodeExecution, attack_vector: NETWORK, exploit: false}
""")
    assert not any(f.predicate == "vulnerability" for f in ground_facts(org))


def test_empty_document_is_an_empty_organization():
    org = parse_organization("")
    assert org.goals == ()
    assert {str(f) for f in ground_facts(org)} == {"externalActor(0, none, internet)"}


# -- errors -----------------------------------------------------------------------------------

def test_yaml_syntax_error_carries_line_and_column():
    with pytest.raises(ParseError) as info:
        parse_organization("hosts:\n  - id: pc\n   bad: [", "org.yml")
    assert info.value.line is not None and info.value.line >= 2
    assert info.value.column is not None
    assert str(info.value).startswith("org.yml:")


def test_unknown_key_reports_its_path():
    with pytest.raises(SchemaError, match=r"hosts\[0\]"):
        parse_organization("hosts: [{id: pc, colour: red}]")


def test_missing_required_key_reports_its_path():
    with pytest.raises(SchemaError, match=r"vulnerabilities\[0\]"):
        parse_organization("hosts: [{id: pc, software: [a]}]\n"
                           "vulnerabilities: [{cve: X, software: a, impact: CodeExecution}]")


def test_bad_enum_value():
    with pytest.raises(SchemaError, match="impact"):
        parse_organization("hosts: [{id: pc, software: [a]}]\n"
                           "vulnerabilities: [{cve: X, software: a, impact: Magic, attack_vector: LOCAL,"
                           " exploit: true}]")


@pytest.mark.parametrize("doc", [
    "services: [{host: nowhere, software: x, protocol: tcp, port: 1}]",
    "hosts: [{id: pc}]\ntopology: [{from: pc, to: mars, protocol: tcp, port: 1}]",
    "hosts: [{id: pc}]\naccounts: [{identity: ghost, account: a, host: pc, software: x}]",
    "hosts: [{id: pc}]\nmissions: [{asset: vault, category: Data, property: Integrity}]",
    "goals: [{asset: vault, category: Data, property: Integrity}]",
])
def test_dangling_references(doc):
    with pytest.raises(DanglingReference):
        parse_organization(doc)


def test_goal_level_other_than_two_is_rejected():
    with pytest.raises(SchemaError):
        parse_organization("hosts: [{id: pc}]\ngoals: [{asset: pc, category: Data, property: Integrity, level: 1}]")


def test_duplicate_host_ids_are_rejected():
    with pytest.raises(SchemaError, match="duplicate"):
        parse_organization("hosts: [{id: pc}, {id: pc}]")
