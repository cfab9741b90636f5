import json
import subprocess
import sys

import pytest

from agilemdd.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def run_json(capsys, *argv):
    code, out, _ = run(capsys, *argv, "--format", "json")
    return code, json.loads(out)


def test_parse(capsys):
    code, doc = run_json(capsys, "parse")
    assert code == 0 and doc["summary"]["classes"] == 7


def test_parse_emit_model(capsys, tmp_path):
    target = tmp_path / "model.json"
    assert run(capsys, "parse", "--emit-model", str(target))[0] == 0
    assert len(json.loads(target.read_text())["classes"]) == 7


def test_parse_bad_model(capsys, tmp_path):
    bad = tmp_path / "bad.puml"
    bad.write_text("@startuml Drone\n[*] --> Idle\nstate Idle\n@enduml\n")
    code, doc = run_json(capsys, "parse", "--model", str(bad))
    assert code == 1 and doc["diagnostics"]


def test_check_clean(capsys):
    code, doc = run_json(capsys, "check", "--instances", "instances/conforming.json")
    assert code == 0 and doc["violations"] == []


def test_check_performance_150(capsys):
    code, doc = run_json(capsys, "check", "--instances", "instances/performance_150.json")
    assert code == 1
    assert [v["kind"] for v in doc["violations"]] == ["value"]


def test_check_messages_and_code(capsys, tmp_path):
    msgs = tmp_path / "m.json"
    msgs.write_text(json.dumps([{"sender": "Operator", "receiver": "MCC", "schema": "Mission-Brief",
                                 "content": {"mission-ID": "m", "description": "d"}}]))
    src = tmp_path / "s.py"
    src.write_text("   x = 1\n")
    code, doc = run_json(capsys, "check", "--messages", str(msgs), "--code", str(src))
    assert code == 1
    assert sorted(v["kind"] for v in doc["violations"]) == ["code-quality", "missing-required-field"]


def test_generate(capsys, tmp_path):
    code, doc = run_json(capsys, "generate", "--out", str(tmp_path / "gen"))
    assert code == 0 and doc["audit"] == []
    assert (tmp_path / "gen" / "main.py").exists() and (tmp_path / "gen" / "manifest.json").exists()


def test_generate_http_without_endpoint_is_usage_error(capsys, tmp_path):
    assert run(capsys, "generate", "--backend", "http", "--out", str(tmp_path))[0] == 2


def test_analyze_table1(capsys):
    code, out, _ = run(capsys, "analyze", "--graph", "tables/table1.cfg.json")
    assert code == 0
    lines = out.splitlines()
    assert lines[0].split()[2:] == ["Operator", "MCC", "UVF-Manager", "UV", "Model"]
    complexity = next(ln for ln in lines if ln.startswith("Complexity (M)"))
    assert complexity.split()[2:] == ["2", "4", "4", "2", "12"]


def test_analyze_json(capsys):
    code, doc = run_json(capsys, "analyze", "--graph", "tables/table2.cfg.json")
    (rep,) = doc["reports"]
    assert [u["M"] for u in rep["units"]] == [3, 5, 6, 3] and rep["model_total_M"] == 17


def test_analyze_source(capsys, tmp_path):
    (tmp_path / "a.py").write_text("class A:\n    def f(self, x):\n        if x:\n            return 1\n        return 0\n")
    code, doc = run_json(capsys, "analyze", "--source", str(tmp_path))
    assert doc["reports"][0]["units"][0]["M"] == 2


def test_analyze_needs_input(capsys):
    assert run(capsys, "analyze")[0] == 2


def test_analyze_missing_file(capsys):
    code, _, err = run(capsys, "analyze", "--graph", "nope.cfg.json")
    assert code == 2 and "nope" in err


def test_simulate_then_conform(capsys, tmp_path):
    trace = tmp_path / "t.json"
    code, out, _ = run(capsys, "simulate", "--seed", "42", "--trace-out", str(trace), "--sequence-out", str(tmp_path / "t.puml"))
    assert code == 0 and len(out.splitlines()) == 12
    code, doc = run_json(capsys, "conform", "--trace", str(trace), "--mode", "strict")
    assert code == 0 and doc["verdict"] == "pass" and doc["events"] == 12


def test_conform_without_discovery_fails_strict(capsys, tmp_path):
    trace = tmp_path / "t.json"
    run(capsys, "simulate", "--seed", "1", "--no-discovery", "--trace-out", str(trace))
    code, doc = run_json(capsys, "conform", "--trace", str(trace))
    assert code == 1 and len(doc["mismatches"]) == 2


def test_simulate_config_and_roster(capsys):
    code, doc = run_json(capsys, "simulate", "--config", "sim/default.toml", "--roster-size", "5")
    assert code == 0 and len(doc["trace"]["events"]) == 16


def test_simulate_usage_errors(capsys):
    assert run(capsys, "simulate")[0] == 2
    assert run(capsys, "simulate", "--seed", "1", "--roster-size", "0")[0] == 2


def test_bad_flag_exits_2(capsys):
    with pytest.raises(SystemExit) as err:
        main(["simulate", "--bogus"])
    assert err.value.code == 2


def test_pipeline(capsys, tmp_path):
    code, doc = run_json(capsys, "pipeline", "--backend", "offline", "--seed", "42", "--out", str(tmp_path))
    assert code == 0
    stages = [s["stage"] for s in doc["stages"]]
    assert stages == ["parse", "constrain", "ontology", "generate", "analyze", "simulate", "conform"]
    assert all(s["status"] == "ok" and s["duration"] >= 0 for s in doc["stages"])
    assert json.loads((tmp_path / "run_record.json").read_text())["exit_code"] == 0
    assert (tmp_path / "generated" / "main.py").exists()


def test_pipeline_tempdir(capsys):
    code, out, _ = run(capsys, "pipeline", "--seed", "42")
    assert code == 0 and out.strip().endswith("exit 0")


def test_pipeline_falls_back_after_failure(capsys, tmp_path):
    bad = tmp_path / "bad.ocl"
    bad.write_text("context Drone inv x: self.speed >= 0\n")
    code, doc = run_json(capsys, "pipeline", "--seed", "42", "--constraints", str(bad))
    status = {s["stage"]: s["status"] for s in doc["stages"]}
    assert code == 1
    assert status["parse"] == "ok" and status["constrain"] == "failed"
    assert status["ontology"] == "skipped" and status["generate"] == "skipped"
    assert status["analyze"] == "ok" and status["simulate"] == "ok" and status["conform"] == "ok"


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "agilemdd", "analyze", "--graph", "example.cfg.json", "--format", "json"],
                         capture_output=True, text=True, timeout=60)
    assert out.returncode == 0
    assert json.loads(out.stdout)["reports"][0]["units"][0]["M"] == 3
