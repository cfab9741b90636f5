import io
import json
import socket
import subprocess
import sys
import urllib.error

import pytest

from agilemdd.cli import default_constraints, default_model, default_ontology
from agilemdd.codegen import (
    LAYERS, BackendConfig, GeneratedArtifact, assemble_prompt, audit_artifact, check_relative_path, extract_files,
    generate, http_complete, offline_files,
)
from agilemdd.complexity import build_cfg_from_source, cyclomatic
from agilemdd.constraints import CodeQualityRuleSet
from agilemdd.errors import BackendError, BackendNetworkError, EmptyResponseError, ExtractionError, InvalidLayerError


def bundle(target="python-agents"):
    return assemble_prompt(default_model(), default_constraints(), default_ontology(), target)


FIXED = lambda: "2000-01-01T00:00:00Z"  # noqa: E731


def test_sections_in_order():
    text = bundle("java-agents").render()
    starts = [text.index(f"=== LAYER {k}: {name.upper()} ===") for k, name in enumerate(LAYERS, start=1)]
    assert starts == sorted(starts)
    assert "Target language: java-agents" in text
    for name in LAYERS:
        assert f"=== END {name.upper()} ===" in text


def test_digest_is_stable():
    assert bundle().digest == bundle().digest
    assert bundle().digest != bundle("java-agents").digest


def test_missing_constraints_layer(tmp_path):
    with pytest.raises(InvalidLayerError) as err:
        assemble_prompt(default_model(), tmp_path / "none.ocl", default_ontology(), "py")
    assert err.value.layer == "constraints"


def test_broken_constraints_layer(tmp_path):
    bad = tmp_path / "bad.ocl"
    bad.write_text("context Drone inv x: self.speed >= 0\n")
    with pytest.raises(InvalidLayerError) as err:
        assemble_prompt(default_model(), bad, default_ontology(), "py")
    assert err.value.layer == "constraints"


def test_missing_activity_is_behavioral(fixtures):
    structural = [p for p in default_model() if "activity" not in p.name]
    with pytest.raises(InvalidLayerError) as err:
        assemble_prompt(structural, default_constraints(), default_ontology(), "py")
    assert err.value.layer == "behavioral"


def test_inconsistent_ontology_layer(tmp_path, fixtures):
    onto = tmp_path / "extra.onto"
    onto.write_text("assert USV is-a Operator\n")
    with pytest.raises(InvalidLayerError) as err:
        assemble_prompt(default_model(), default_constraints(), [*default_ontology(), onto], "py")
    assert err.value.layer == "ontology"


def test_offline_file_set(model):
    art = generate(bundle(), BackendConfig(), clock=FIXED)
    names = sorted(p for p, _ in art.files)
    expected = sorted(["main.py"] + ["agent_" + c.lower().replace("-", "_") + ".py" for c in model.class_names()])
    assert names == expected
    assert len(names) == 8


def test_offline_is_byte_identical():
    a = generate(bundle(), BackendConfig(), clock=FIXED)
    b = generate(bundle(), BackendConfig(), clock=FIXED)
    assert a.files == b.files and a.manifest() == b.manifest()


def test_offline_needs_no_network(monkeypatch):
    def refuse(*a, **k):
        raise AssertionError("network access attempted")

    monkeypatch.setattr(socket, "socket", refuse)
    monkeypatch.setattr(socket, "create_connection", refuse)
    monkeypatch.setattr(socket, "getaddrinfo", refuse)
    art = generate(bundle(), BackendConfig(), clock=FIXED)
    assert art.backend == "offline_template"


def test_offline_passes_audit():
    assert audit_artifact(generate(bundle(), BackendConfig())) == []


def test_generated_program_runs(tmp_path):
    art = generate(bundle(), BackendConfig(), clock=FIXED)
    art.write(tmp_path)
    out = subprocess.run([sys.executable, "main.py"], cwd=tmp_path, capture_output=True, text=True, timeout=30)
    assert out.returncode == 0, out.stderr
    lines = out.stdout.strip().splitlines()
    assert "Mission-Brief" in lines[0]
    assert any("mission performance" in ln for ln in lines)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["timestamp"] == FIXED() and len(manifest["files"]) == 8


def test_generated_code_is_measurable():
    art = generate(bundle(), BackendConfig(), clock=FIXED)
    cfgs = build_cfg_from_source(dict(art.files), "pyagent")
    units = {c.unit for c in cfgs}
    assert {"Operator", "MCC", "UVF-Manager", "UV"} <= units
    for c in cfgs:
        r = cyclomatic(c)
        assert r.P == 1 and r.M == c.decisions + 1


def test_audit_flags_tab_and_long_line():
    art = GeneratedArtifact((("a.py", "def f():\n\treturn 1\n"), ("b.py", "x = '" + "y" * 195 + "'\n")), "x", "d")
    found = audit_artifact(art, CodeQualityRuleSet(max_line_length=120))
    assert sorted(v.constraint_id for v in found) == ["indentationTab", "lineLength"]
    assert {v.subject.split(":")[0] for v in found} == {"a.py", "b.py"}


def test_extract_named_fences():
    text = "Here you go.\n```operator.x\nclass Operator: pass\n```\nand\n```mcc.x\nclass MCC: pass\n```\n"
    assert [p for p, _ in extract_files(text)] == ["operator.x", "mcc.x"]


def test_extract_hint_and_unnamed():
    text = "# file: pkg/a.py\n```python\na = 1\n```\n```\nb = 2\n```\n"
    assert extract_files(text) == [("pkg/a.py", "a = 1\n"), ("generated_1", "b = 2\n")]


@pytest.mark.parametrize("text", ["no code here", "```../evil.py\nx\n```\n", "```a.py\nx\n```\n```a.py\ny\n```\n"])
def test_extract_errors(text):
    with pytest.raises(ExtractionError):
        extract_files(text)


@pytest.mark.parametrize("path", ["/etc/passwd", "../x", "a/../../b", "C:\\x", ""])
def test_unsafe_paths(path):
    with pytest.raises(ExtractionError):
        check_relative_path(path)


def http_config(**kw):
    return BackendConfig("http_llm", endpoint="http://127.0.0.1:9/v1", token_env="TEST_TOKEN", **kw)


class FakeResponse(io.BytesIO):
    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


def test_http_retries_then_fails(monkeypatch):
    monkeypatch.setenv("TEST_TOKEN", "t")
    calls, sleeps = [], []

    def opener(req, timeout):
        calls.append(req)
        raise urllib.error.URLError("connection refused")

    with pytest.raises(BackendNetworkError):
        http_complete(bundle(), http_config(), opener=opener, sleep=sleeps.append)
    assert len(calls) == 3
    assert sleeps == [1.0, 2.0]


def test_http_success(monkeypatch):
    monkeypatch.setenv("TEST_TOKEN", "t")
    reply = {"choices": [{"message": {"content": "# file: a.py\n```python\nx = 1\n```\n"}}]}
    seen = []

    def opener(req, timeout):
        seen.append(json.loads(req.data))
        return FakeResponse(json.dumps(reply).encode())

    art = generate(bundle(), http_config(), clock=FIXED, opener=opener, sleep=lambda s: None)
    assert art.files == (("a.py", "x = 1\n"),)
    assert seen[0]["model"] == "gpt-4"
    assert "=== LAYER 1: STRUCTURAL ===" in seen[0]["messages"][1]["content"]


def test_http_empty_response(monkeypatch):
    monkeypatch.setenv("TEST_TOKEN", "t")
    reply = {"choices": [{"message": {"content": "  "}}]}
    with pytest.raises(EmptyResponseError):
        http_complete(bundle(), http_config(), opener=lambda r, timeout: FakeResponse(json.dumps(reply).encode()))


def test_http_client_error_not_retried(monkeypatch):
    monkeypatch.setenv("TEST_TOKEN", "t")
    calls = []

    def opener(req, timeout):
        calls.append(1)
        raise urllib.error.HTTPError(req.full_url, 401, "unauthorized", {}, None)

    with pytest.raises(BackendError):
        http_complete(bundle(), http_config(), opener=opener, sleep=lambda s: None)
    assert len(calls) == 1


def test_http_needs_token(monkeypatch):
    monkeypatch.delenv("TEST_TOKEN", raising=False)
    with pytest.raises(BackendError):
        http_complete(bundle(), http_config())


@pytest.mark.parametrize("kw", [{"kind": "magic"}, {"kind": "http_llm"}, {"max_retries": -1}, {"timeout": 0}])
def test_backend_config_rejects(kw):
    with pytest.raises(ValueError):
        BackendConfig(**kw)


def test_offline_files_sorted():
    files = offline_files(bundle())
    assert [p for p, _ in files] == sorted(p for p, _ in files)
