from __future__ import annotations

import json
import os
import subprocess
import sys

import jsonschema
import pytest

from kcag import export
from kcag.cli import EXIT_DIAGNOSTIC, EXIT_ERROR, EXIT_OK, main
from kcag.errors import SchemaError

from conftest import NETWORK, PHISHING, ROOT, SSH, SSH_RULES


# -- export -----------------------------------------------------------------------------------

def test_dot_output(phishing):
    dot = export.to_dot(phishing.kcag)
    assert dot.startswith('digraph "kcag" {')
    assert dot.count(" -> ") == 27
    assert 'n26 [label="26: storedData(2, integrity, pc)"' in dot
    assert "doublecircle" in dot and "darkred" in dot
    assert 'label="21: T1068 - Exploitation for Privilege Escalation\\n[Privilege Escalation]"' in dot
    for color in ("forestgreen", "blue", "saddlebrown"):
        assert color in dot


def test_dot_escapes_quotes(phishing):
    dot = export.to_dot(phishing.kcag)
    assert '"CVE-2017-0262"' not in dot
    assert '\\"CVE-2017-0262\\"' in dot


@pytest.mark.parametrize("name", ["phishing", "ssh", "network"])
def test_json_matches_schema_and_round_trips(request, name):
    kcag = request.getfixturevalue(name).kcag
    doc = export.to_dict(kcag)
    jsonschema.validate(doc, export.json_schema())
    back = export.from_json(export.to_json(kcag))
    assert export.to_dict(back) == doc
    assert back.order is kcag.order


def test_json_phase_labels(phishing):
    doc = export.to_dict(phishing.kcag)
    by_id = {v["id"]: v for v in doc["vertices"]}
    assert by_id[3]["phase"] == ["Reconnaissance"]
    assert by_id[3]["attack_id"] == "T1594"
    assert by_id[26]["kind"] == "goal" and by_id[26]["phase"] == []
    assert doc["mapping"]["T1078.001"] == ["Initial Access", "Privilege Escalation"]


def test_malformed_documents_are_rejected():
    with pytest.raises(SchemaError):
        export.from_dict({"format": "other", "version": 1})
    with pytest.raises(SchemaError):
        export.from_dict({"format": "kcag", "version": 1, "phases": [], "vertices": [{"id": 1}], "edges": []})


# -- CLI --------------------------------------------------------------------------------------

def run(capsys, *argv: str) -> tuple[int, str, str]:
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_generate_dot_and_json(capsys, tmp_path):
    code, out, _ = run(capsys, "generate", "--org", str(PHISHING))
    assert code == EXIT_OK and out.startswith("digraph")
    target = tmp_path / "kcag.json"
    code, out, _ = run(capsys, "generate", "--org", str(PHISHING), "--format", "json", "--out", str(target))
    assert code == EXIT_OK and out == ""
    assert len(json.loads(target.read_text())["vertices"]) == 26


def test_generate_is_byte_identical_across_runs(capsys):
    outputs = {run(capsys, "generate", "--org", str(PHISHING), "--format", "json")[1] for _ in range(3)}
    assert len(outputs) == 1


def test_generate_with_custom_ruleset(capsys):
    code, out, _ = run(capsys, "generate", "--org", str(SSH), "--ruleset", str(SSH_RULES), "--format", "json")
    assert code == EXIT_OK
    assert [v["kind"] for v in json.loads(out)["vertices"]] == [
        "control", "property", "property", "countermeasure", "technique", "goal"]


def test_paths_text(capsys):
    code, out, _ = run(capsys, "paths", "--org", str(PHISHING))
    assert code == EXIT_OK
    assert out.startswith("2 attack path(s)\n")
    assert "path 1: 1 -> 3 -> 4 -> 6 -> 7 -> 11 -> 12 -> 16 -> 17 -> 21 -> 22 -> 24 -> 26" in out
    assert "T1068        2/2 *" in out
    assert "T1485        1/2\n" in out


def test_paths_json_limit_warns(capsys):
    code, out, err = run(capsys, "paths", "--org", str(NETWORK), "--phase-order", "forbidden-pairs",
                         "--limit", "1", "--format", "json")
    assert code == EXIT_OK
    doc = json.loads(out)
    assert doc["truncated"] and len(doc["paths"]) == 1
    assert "partial" in err


def test_recommend(capsys):
    code, out, _ = run(capsys, "recommend", "--org", str(PHISHING))
    assert code == EXIT_OK
    for cm in ("sender_reputation_analysis", "user_training", "software_update", "data_backup"):
        assert f"  {cm:<32} 2/2" in out
        assert "{" + cm + "}  (verified)" in out


def test_recommend_json(capsys):
    code, out, _ = run(capsys, "recommend", "--org", str(PHISHING), "--format", "json")
    doc = json.loads(out)
    assert code == EXIT_OK
    assert doc["verified"] == [True] * 4
    assert doc["method"] == "exact"


def test_whatif(capsys):
    code, out, _ = run(capsys, "whatif", "--org", str(PHISHING), "--apply", "user_training")
    assert code == EXIT_OK
    assert out == "applied: user_training\n2 attack path(s) before\n0 attack paths remain\n"
    code, out, _ = run(capsys, "whatif", "--org", str(PHISHING), "--apply", "multifactor_authentication",
                       "--format", "json")
    assert json.loads(out)["paths_after"] == 2


def test_whatif_accepts_comma_lists(capsys):
    code, out, _ = run(capsys, "whatif", "--org", str(PHISHING), "--apply", "user_training,data_backup")
    assert code == EXIT_OK and out.startswith("applied: user_training, data_backup\n")


def test_goal_override(capsys):
    code, out, _ = run(capsys, "paths", "--org", str(PHISHING), "--goal", "confidentiality:Data:pc",
                       "--format", "json")
    assert code == EXIT_OK
    assert json.loads(out)["paths"]


def test_undefined_goal_exits_with_diagnostic(capsys):
    code, _, err = run(capsys, "generate", "--org", str(PHISHING), "--goal", "non_repudiation:Actor:pc")
    assert code == EXIT_DIAGNOSTIC
    assert "kcag: goal(s) not derivable: non_repudiation:Actor:pc" in err


def test_organization_without_goals_exits_with_diagnostic(capsys, tmp_path):
    org = tmp_path / "org.yml"
    org.write_text("hosts: [{id: pc}]\n")
    code, out, err = run(capsys, "generate", "--org", str(org), "--format", "json")
    assert code == EXIT_DIAGNOSTIC
    assert json.loads(out)["vertices"] == []
    assert "no goals" in err


def test_errors_exit_with_one(capsys, tmp_path):
    bad = tmp_path / "bad.yml"
    bad.write_text("hosts: [\n")
    code, _, err = run(capsys, "generate", "--org", str(bad))
    assert code == EXIT_ERROR and "bad.yml" in err
    code, _, err = run(capsys, "generate", "--org", str(tmp_path / "missing.yml"))
    assert code == EXIT_ERROR
    code, _, err = run(capsys, "whatif", "--org", str(PHISHING), "--apply", "moat")
    assert code == EXIT_ERROR and "moat" in err
    code, _, err = run(capsys, "paths", "--org", str(NETWORK))
    assert code == EXIT_ERROR and "forbidden-pairs" in err


def test_bad_arguments_are_usage_errors(capsys):
    with pytest.raises(SystemExit) as info:
        main(["paths", "--org", str(PHISHING), "--limit", "0"])
    assert info.value.code == 2
    with pytest.raises(SystemExit):
        main(["generate"])


def test_validate(capsys, tmp_path):
    code, out, _ = run(capsys, "validate")
    assert code == EXIT_OK and out.endswith("0 problem(s)\n")
    rules = tmp_path / "bad.rules"
    rules.write_text('@asset(e, external_actor).\n@asset(d, data).\n'
                     '@technique("T9", "Leap", ["Impact"], [integrity], data).\nd(2, integrity, X) :- e(0, none, X).\n')
    code, out, _ = run(capsys, "validate", "--ruleset", str(rules))
    assert code == EXIT_ERROR
    assert "forbidden asset-type transition" in out


def test_dump_derivation(capsys, tmp_path):
    target = tmp_path / "derivation.json"
    code, _, _ = run(capsys, "generate", "--org", str(PHISHING), "--dump-derivation", str(target))
    assert code == EXIT_OK
    assert json.loads(target.read_text())["applications"]


def test_console_script_and_log_level():
    env = dict(os.environ, KCAG_LOG="info")
    proc = subprocess.run([sys.executable, "-m", "kcag.cli", "generate", "--org", str(PHISHING)],
                          capture_output=True, text=True, env=env, cwd=ROOT)
    assert proc.returncode == 0
    assert "INFO kcag.pipeline: kcag: 26 vertices, 27 edges" in proc.stderr
    quiet = subprocess.run([sys.executable, "-m", "kcag.cli", "generate", "--org", str(PHISHING)],
                           capture_output=True, text=True, env=dict(os.environ, KCAG_LOG="warning"), cwd=ROOT)
    assert quiet.stderr == ""
    assert quiet.stdout == proc.stdout
