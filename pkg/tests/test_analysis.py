from __future__ import annotations

import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from kcag.analysis import (
    Method,
    PathLimit,
    coverage,
    enumerate_paths,
    greedy_hitting_set,
    minimum_hitting_sets,
    recommend_countermeasures,
    strategic,
    what_if,
    without_countermeasures,
)
from kcag.errors import Uncoverable
from kcag.graph import VertexKind
from kcag.rules import builtin_ruleset

from generators import random_coverage, random_kcag
from oracles import count_spines, exhaustive_hitting_sets

PHISHING_SPINE = (1, 3, 4, 6, 7, 11, 12, 16, 17, 21, 22)
PHISHING_PHASES = (("Reconnaissance",), ("Initial Access",), ("Execution",), ("Execution",),
                   ("Privilege Escalation",), ("Impact",))
PHISHING_CMS = ["data_backup", "sender_reputation_analysis", "software_update", "user_training"]


# -- paths --------------------------------------------------------------------------------------

def test_phishing_paths(phishing):
    paths = enumerate_paths(phishing.kcag)
    assert not paths.truncated
    assert [p.spine for p in paths] == [PHISHING_SPINE + (24, 26), PHISHING_SPINE + (25, 26)]
    assert [p.attack_ids[-1] for p in paths] == ["T1486", "T1485"]
    assert all(p.attack_ids[:-1] == ("T1594", "T1566.001", "T1204.002", "T1203", "T1068") for p in paths)
    assert all(p.phases == PHISHING_PHASES for p in paths)
    assert all(p.goal == 26 for p in paths)


def test_path_attachments(phishing):
    first = enumerate_paths(phishing.kcag)[0]
    kinds = {phishing.kcag.vertex(a).kind for a in first.attachment_ids()}
    assert kinds == {VertexKind.PROPERTY, VertexKind.COUNTERMEASURE}
    data = first.to_dict()
    assert data["spine"] == list(first.spine)
    assert [t["attack_id"] for t in data["techniques"]] == list(first.attack_ids)


def test_ssh_path_needs_an_external_actor(ssh):
    # the brute-force fixture starts from a given connection, not from the internet
    assert len(enumerate_paths(ssh.kcag)) == 0


def test_path_limit_is_reported(network):
    paths = enumerate_paths(network.kcag, limit=5)
    assert len(paths) == 5
    assert paths.limit_hit == PathLimit(5)
    assert "partial" in str(paths.limit_hit)
    with pytest.raises(ValueError):
        enumerate_paths(network.kcag, limit=0)


def test_network_path_count(network):
    # frozen from the independent spine counter
    assert count_spines(network.kcag) == 174
    assert len(enumerate_paths(network.kcag)) == 174


def small_graphs(n: int, max_vertices: int = 15):
    seed = 0
    found = 0
    while found < n:
        kcag = random_kcag(random.Random(seed), max_spine_vertices=12)
        seed += 1
        if len(kcag.vertices) <= max_vertices:
            found += 1
            yield seed - 1, kcag


def path_count_mismatches(graphs) -> list[int]:
    bad = []
    for seed, kcag in graphs:
        paths = enumerate_paths(kcag, limit=10**6)
        spines = [p.spine for p in paths]
        if len(paths) != count_spines(kcag) or len(set(spines)) != len(spines):
            bad.append(seed)
    return bad


def test_path_enumeration_matches_brute_force_counting():
    assert path_count_mismatches(small_graphs(150)) == []


def test_path_enumeration_matches_on_larger_graphs():
    graphs = ((seed, random_kcag(random.Random(seed), max_spine_vertices=25)) for seed in range(60))
    assert path_count_mismatches(graphs) == []


# -- strategic techniques and phases --------------------------------------------------------------

def test_phishing_strategic_report(phishing):
    report = strategic(enumerate_paths(phishing.kcag), phishing.kcag.phases)
    assert report.total == 2
    assert dict(report.techniques) == {"T1068": 2, "T1203": 2, "T1204.002": 2, "T1485": 1, "T1486": 1,
                                       "T1566.001": 2, "T1594": 2}
    assert report.strategic_techniques == ("T1068", "T1203", "T1204.002", "T1566.001", "T1594")
    # Execution appears twice on each path but is counted once per path
    assert report.phases == (("Reconnaissance", 2), ("Initial Access", 2), ("Execution", 2),
                             ("Privilege Escalation", 2), ("Impact", 2))
    assert report.to_dict()["paths"] == 2


def test_network_strategic_report(network):
    report = strategic(enumerate_paths(network.kcag), network.kcag.phases)
    assert report.strategic_techniques == ("T1046",)
    assert report.strategic_phases == ("Discovery",)


def test_strategic_on_no_paths():
    report = strategic([])
    assert (report.total, report.strategic_techniques, report.strategic_phases) == (0, (), ())


# -- countermeasures -----------------------------------------------------------------------------

def test_phishing_coverage(phishing):
    paths = enumerate_paths(phishing.kcag)
    assert coverage(phishing.kcag, paths) == {cm: 0b11 for cm in PHISHING_CMS}


def test_phishing_recommendation(phishing):
    plan = recommend_countermeasures(phishing.kcag, enumerate_paths(phishing.kcag))
    assert plan.method is Method.EXACT and plan.complete
    assert dict(plan.destroyed) == {cm: 2 for cm in PHISHING_CMS}
    assert plan.hitting_sets == tuple((cm,) for cm in PHISHING_CMS)
    assert plan.to_dict()["hitting_sets"] == [[cm] for cm in PHISHING_CMS]


def test_network_recommendation(network):
    plan = recommend_countermeasures(network.kcag, enumerate_paths(network.kcag))
    assert plan.hitting_sets == (("software_update",),)


@pytest.mark.parametrize("cm", PHISHING_CMS)
def test_what_if_single_countermeasure_blocks_everything(phishing_org, phishing, cm):
    kcag, paths = what_if(phishing_org, builtin_ruleset(), [cm])
    assert len(paths) == 0
    assert not paths.truncated
    assert len(enumerate_paths(without_countermeasures(phishing.kcag, [cm]))) == 0


def test_what_if_with_unrelated_countermeasure(phishing_org):
    _, paths = what_if(phishing_org, builtin_ruleset(), ["multifactor_authentication"])
    assert len(paths) == 2


def test_what_if_passes_options(network_org):
    _, paths = what_if(network_org, builtin_ruleset(), ["data_backup"], phase_order="forbidden-pairs",
                       path_limit=3)
    assert paths.truncated


def test_truncated_paths_are_not_verified(network, caplog):
    paths = enumerate_paths(network.kcag, limit=3)
    plan = recommend_countermeasures(network.kcag, paths)
    assert plan.total_paths == 3
    assert "not verified" in caplog.text


def test_greedy_is_used_beyond_the_exact_limits(phishing):
    paths = enumerate_paths(phishing.kcag)
    plan = recommend_countermeasures(phishing.kcag, paths, exact_max_countermeasures=2)
    assert plan.method is Method.GREEDY
    assert plan.hitting_sets == (("data_backup",),)


def test_uncoverable_paths():
    with pytest.raises(Uncoverable) as info:
        minimum_hitting_sets({"a": 0b01}, 2)
    assert info.value.paths == (1,)
    with pytest.raises(Uncoverable):
        greedy_hitting_set({"a": 0b01}, 2)


def test_no_paths_needs_no_countermeasure():
    assert minimum_hitting_sets({"a": 0}, 0) == ([()], True)


def test_report_limit_marks_incomplete():
    cover = {f"c{i}": 0b1 for i in range(5)}
    sets, complete = minimum_hitting_sets(cover, 1, max_sets=2)
    assert sets == [("c0",), ("c1",)] and not complete
    sets, complete = minimum_hitting_sets(cover, 1, max_sets=5)
    assert len(sets) == 5 and complete


N_COVERAGE = 150


def hitting_set_mismatches(seeds) -> list[int]:
    bad = []
    for seed in seeds:
        cover, n = random_coverage(random.Random(seed))
        sets, complete = minimum_hitting_sets(cover, n, max_sets=10**6)
        if sets != exhaustive_hitting_sets(cover, n) or not complete:
            bad.append(seed)
    return bad


def test_exact_hitting_sets_match_subset_enumeration():
    assert hitting_set_mismatches(range(N_COVERAGE)) == []


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=10_000, max_value=2**32))
def test_exact_hitting_sets_match_subset_enumeration_hypothesis(seed):
    assert hitting_set_mismatches([seed]) == []


def test_greedy_stays_within_the_logarithmic_bound():
    for seed in range(N_COVERAGE):
        cover, n = random_coverage(random.Random(seed))
        greedy = greedy_hitting_set(cover, n)
        mask = 0
        for c in greedy:
            mask |= cover[c]
        assert mask == (1 << n) - 1
        best = len(exhaustive_hitting_sets(cover, n)[0])
        assert len(greedy) <= (math.log(n) + 1) * best, seed
