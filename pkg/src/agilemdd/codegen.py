"""Prompt assembly, code-generation backends and artifact auditing."""
from __future__ import annotations

import hashlib
import json
import os
import re
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path, PurePosixPath
from typing import Callable, Optional, Sequence

import jinja2

from .constraints import (
    CodeQualityRuleSet,
    Violation,
    check_code_quality,
    parse_constraints,
    reconcile_cardinality,
    sort_violations,
    validate_constraints,
)
from .errors import (
    BackendError,
    BackendNetworkError,
    EmptyResponseError,
    ExtractionError,
    InvalidLayerError,
    MddError,
    OntologyError,
    ParseError,
)
from .model import ClassDef, StateMachine, UmlModel, resolve_hierarchy
from .ontology import check_predicate_consistency, register_ontology
from .plantuml import DiagramKind, SourceUnit, has_errors, load_units

LAYERS = ("structural", "behavioral", "constraints", "ontology")

DEFAULT_PREAMBLE = (
    "You are generating a complete multi-agent program from a layered model.\n"
    "Implement one class per agent in the structural layer, follow the state machine\n"
    "and the activity flow of the behavioral layer, enforce every constraint, and\n"
    "exchange only messages whose content matches the ontology schemas.\n"
    "Return each file in its own fenced code block, preceded by a line '# file: <path>'."
)


# -- prompt bundle -----------------------------------------------------------------------


@dataclass(frozen=True)
class PromptBundle:
    structural_sources: tuple[tuple[str, str], ...]
    behavioral_sources: tuple[tuple[str, str], ...]
    constraints_text: str
    ontology_sources: tuple[tuple[str, str], ...]
    target_language: str
    instruction_preamble: str = DEFAULT_PREAMBLE

    @property
    def structural_text(self) -> str:
        return _join(self.structural_sources)

    @property
    def behavioral_text(self) -> str:
        return _join(self.behavioral_sources)

    @property
    def ontology_text(self) -> str:
        return _join(self.ontology_sources)

    def layer_text(self, layer: str) -> str:
        return {
            "structural": self.structural_text,
            "behavioral": self.behavioral_text,
            "constraints": self.constraints_text,
            "ontology": self.ontology_text,
        }[layer]

    def render(self) -> str:
        parts = [self.instruction_preamble.rstrip("\n"), "", f"Target language: {self.target_language}", ""]
        for k, layer in enumerate(LAYERS, start=1):
            parts.append(f"=== LAYER {k}: {layer.upper()} ===")
            parts.append(self.layer_text(layer).rstrip("\n"))
            parts.append(f"=== END {layer.upper()} ===")
            parts.append("")
        return "\n".join(parts)

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.render().encode("utf-8")).hexdigest()


def _join(sources) -> str:
    return "".join(text if text.endswith("\n") else text + "\n" for _, text in sources)


def _read(path) -> tuple[str, str]:
    p = Path(path)
    try:
        return p.name, p.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise InvalidLayerError(_layer_of_path(p), [f"{p}: {exc}"]) from None


def _layer_of_path(p: Path) -> str:
    return {".ocl": "constraints", ".onto": "ontology"}.get(p.suffix, "structural")


def check_layers(
    structural_sources, behavioral_sources, constraints_text: str, ontology_sources
) -> UmlModel:
    """Fail fast on the first invalid layer, in layer order."""
    units = {}
    for layer, sources in (("structural", structural_sources), ("behavioral", behavioral_sources)):
        if not sources:
            raise InvalidLayerError(layer, [f"no {layer} sources given"])
        for name, text in sources:
            try:
                unit = SourceUnit.from_text(text, name)
            except ParseError as exc:
                raise InvalidLayerError(layer, [str(exc)]) from None
            want = (DiagramKind.ACTIVITY,) if layer == "behavioral" else (DiagramKind.CLASS, DiagramKind.STATE)
            if unit.kind not in want:
                raise InvalidLayerError(layer, [f"{name}: {unit.kind.value} does not belong to the {layer} layer"])
            units[name] = (layer, unit)
    try:
        model, diags = load_units([u for _, u in units.values()])
    except MddError as exc:
        raise InvalidLayerError("structural", [str(exc)]) from None
    errors = [d for d in diags if d.severity == "error"]
    if errors:
        by_layer = {layer: [] for layer in LAYERS}
        for d in errors:
            by_layer[units[d.path][0] if d.path in units else "structural"].append(d)
        layer = next(name for name in LAYERS if by_layer[name])
        raise InvalidLayerError(layer, by_layer[layer])

    if not constraints_text.strip():
        raise InvalidLayerError("constraints", ["constraints layer is empty"])
    constraints, diags = parse_constraints(constraints_text, "constraints")
    diags += validate_constraints(model, constraints, "constraints")
    if has_errors(diags):
        raise InvalidLayerError("constraints", diags)
    defects = reconcile_cardinality(model, constraints)
    if defects:
        raise InvalidLayerError("constraints", defects)

    if not ontology_sources:
        raise InvalidLayerError("ontology", ["no ontology sources given"])
    try:
        registry = None
        for name, text in ontology_sources:
            registry = register_ontology(text, registry, name)
    except OntologyError as exc:
        raise InvalidLayerError("ontology", [str(exc)]) from None
    mismatched = check_predicate_consistency(registry, model)
    if mismatched:
        raise InvalidLayerError("ontology", mismatched)
    return model


def assemble_prompt(
    model_paths: Sequence,
    constraints_path,
    ontology_paths: Sequence,
    target_language: str,
    preamble: str = DEFAULT_PREAMBLE,
) -> PromptBundle:
    """Read and validate every layer, then bundle them for rendering."""
    structural, behavioral = [], []
    for p in model_paths:
        name, text = _read(p)
        try:
            kind = SourceUnit.from_text(text, name).kind
        except ParseError as exc:
            raise InvalidLayerError("structural", [str(exc)]) from None
        (behavioral if kind is DiagramKind.ACTIVITY else structural).append((name, text))
    if constraints_path is None or not Path(constraints_path).is_file():
        raise InvalidLayerError("constraints", [f"constraints file {constraints_path} not found"])
    _, constraints_text = _read(constraints_path)
    ontology = [_read(p) for p in ontology_paths]
    check_layers(structural, behavioral, constraints_text, ontology)
    return PromptBundle(tuple(structural), tuple(behavioral), constraints_text, tuple(ontology), target_language, preamble)


# -- backends ----------------------------------------------------------------------------


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "offline_template"  # offline_template | http_llm
    endpoint: Optional[str] = None
    model: str = "gpt-4"
    token_env: Optional[str] = None
    timeout: float = 120.0
    max_retries: int = 2
    backoff_base: float = 1.0

    def __post_init__(self):
        if self.kind not in ("offline_template", "http_llm"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.kind == "http_llm" and (not self.endpoint or not self.token_env):
            raise ValueError("http_llm needs an endpoint and the name of the token environment variable")
        if self.max_retries < 0 or self.timeout <= 0:
            raise ValueError("max_retries must be >= 0 and timeout > 0")


@dataclass(frozen=True)
class GeneratedArtifact:
    files: tuple[tuple[str, str], ...]
    backend: str
    prompt_digest: str
    timestamp: str = ""

    def __post_init__(self):
        if not self.files:
            raise ExtractionError("artifact has no files")
        for path, _ in self.files:
            check_relative_path(path)

    def file(self, path: str) -> str:
        return dict(self.files)[path]

    def manifest(self) -> dict:
        return {
            "backend": self.backend,
            "digest": self.prompt_digest,
            "timestamp": self.timestamp,
            "files": [
                {"path": p, "sha256": hashlib.sha256(c.encode("utf-8")).hexdigest()} for p, c in self.files
            ],
        }

    def write(self, out_dir) -> list[Path]:
        out = Path(out_dir)
        written = []
        for path, content in self.files:
            target = out / path
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_text(content, encoding="utf-8")
            written.append(target)
        manifest = out / "manifest.json"
        manifest.write_text(json.dumps(self.manifest(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return [*written, manifest]


def check_relative_path(path: str) -> str:
    pure = PurePosixPath(path.replace("\\", "/"))
    if not path or pure.is_absolute() or ".." in pure.parts or re.match(r"^[A-Za-z]:", path):
        raise ExtractionError(f"unsafe artifact path {path!r}")
    return str(pure)


def _now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def generate(bundle: PromptBundle, config: BackendConfig, clock: Callable[[], str] = _now, **http_options) -> GeneratedArtifact:
    if config.kind == "offline_template":
        files = offline_files(bundle)
    else:
        files = extract_files(http_complete(bundle, config, **http_options))
    return GeneratedArtifact(tuple(files), config.kind, bundle.digest, clock())


# http


def _transient(exc) -> bool:
    if isinstance(exc, urllib.error.HTTPError):
        return exc.code == 429 or exc.code >= 500
    return isinstance(exc, (urllib.error.URLError, TimeoutError, ConnectionError, OSError))


def http_complete(bundle: PromptBundle, config: BackendConfig, opener=None, sleep=time.sleep) -> str:
    """One chat-completions request, retried with exponential backoff on transient failures."""
    token = os.environ.get(config.token_env or "")
    if not token:
        raise BackendError(f"environment variable {config.token_env} is not set")
    body = json.dumps({
        "model": config.model,
        "messages": [
            {"role": "system", "content": bundle.instruction_preamble},
            {"role": "user", "content": bundle.render()},
        ],
    }).encode("utf-8")
    request = urllib.request.Request(
        config.endpoint, data=body, method="POST",
        headers={"Content-Type": "application/json", "Authorization": f"Bearer {token}"},
    )
    opener = opener or urllib.request.urlopen
    last = None
    for attempt in range(config.max_retries + 1):
        if attempt:
            sleep(config.backoff_base * 2 ** (attempt - 1))
        try:
            with opener(request, timeout=config.timeout) as resp:
                raw = resp.read()
            break
        except Exception as exc:  # noqa: BLE001 - classified below
            if not _transient(exc):
                raise BackendError(f"request rejected: {exc}") from None
            last = exc
    else:
        raise BackendNetworkError(f"{config.endpoint}: giving up after {config.max_retries} retries ({last})")
    try:
        doc = json.loads(raw)
        text = doc["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError):
        raise EmptyResponseError("response has no message content") from None
    if not text or not str(text).strip():
        raise EmptyResponseError("response content is empty")
    return str(text)


_FENCE_RE = re.compile(r"^```([^\n`]*)\n(.*?)^```[ \t]*$", re.S | re.M)
_HINT_RE = re.compile(r"^\s*(?://|#)\s*file:\s*(\S+)\s*$")


def extract_files(text: str) -> list[tuple[str, str]]:
    """Fenced code blocks become files. The name comes from a path-like word in
    the fence info (```` ```python agents/mcc.py ````), else from a ``// file: <path>``
    or ``# file: <path>`` line right before the fence, else ``generated_<n>``."""
    files: list[tuple[str, str]] = []
    seen: set[str] = set()
    unnamed = 0
    for mo in _FENCE_RE.finditer(text):
        before = text[: mo.start()].rstrip("\n").split("\n")
        named = [w for w in mo.group(1).split() if "." in w or "/" in w]
        hint = _HINT_RE.match(before[-1]) if before else None
        if named:
            path = check_relative_path(named[-1])
        elif hint:
            path = check_relative_path(hint.group(1))
        else:
            unnamed += 1
            path = f"generated_{unnamed}"
        if path in seen:
            raise ExtractionError(f"two code blocks name the same file {path!r}")
        seen.add(path)
        files.append((path, mo.group(2)))
    if not files:
        raise ExtractionError("no fenced code block in the response")
    return files


# offline templates


_ENV = jinja2.Environment(
    loader=jinja2.PackageLoader("agilemdd", "templates"),
    trim_blocks=True,
    lstrip_blocks=True,
    keep_trailing_newline=True,
    undefined=jinja2.StrictUndefined,
    autoescape=False,
)

ROLE_TEMPLATES = {"Operator": "operator", "MCC": "mcc", "UVF-Manager": "uvf_manager", "UV": "uv"}
_DEFAULTS = {"int": "0", "percent": "0", "number": "0", "float": "0.0", "bool": "False", "boolean": "False"}


def snake(name: str) -> str:
    return re.sub(r"(?<=[a-z0-9])(?=[A-Z])", "_", name).replace("-", "_").lower()


def py_class(name: str) -> str:
    return re.sub(r"[^0-9A-Za-z_]", "", name)


def module_name(name: str) -> str:
    return "agent_" + snake(name)


def _class_view(c: ClassDef, model: UmlModel) -> dict:
    return {
        "name": c.name,
        "py": py_class(c.name),
        "module": module_name(c.name),
        "attrs": [{"py": snake(a.name), "default": _DEFAULTS.get(a.type, '""')} for a in c.attributes],
        "ops": [{"py": snake(o.name), "params": [snake(p[0]) for p in o.params]} for o in c.operations],
    }


def leaf_transitions(machine: StateMachine) -> list:
    """Transitions rewritten over leaf states: composite sources fan out to
    their leaves, composite targets settle into their entry leaf."""
    children = {s.name: [c.name for c in machine.states if c.parent == s.name] for s in machine.states}

    def leaves(name):
        kids = children.get(name) or []
        return [name] if not kids else [x for k in kids for x in leaves(k)]

    def entry_leaf(name):
        seen = set()
        while name not in seen:
            seen.add(name)
            st = machine.state(name)
            if st is None or not st.entry:
                return name
            name = st.entry
        return name

    table = {}
    for t in machine.transitions:
        for src in leaves(t.source):
            table.setdefault((src, t.trigger), entry_leaf(t.target))
    return sorted(table.items())


def offline_files(bundle: PromptBundle) -> list[tuple[str, str]]:
    """Expand the bundled templates per agent class, plus ``main.py``."""
    model = check_layers(bundle.structural_sources, bundle.behavioral_sources, bundle.constraints_text,
                         bundle.ontology_sources)
    registry = None
    for name, text in bundle.ontology_sources:
        registry = register_ontology(text, registry, name)
    missing = [n for n in ROLE_TEMPLATES if model.cls(n) is None]
    if missing:
        raise BackendError(f"offline templates need the classes {', '.join(missing)}")
    views = {c.name: _class_view(c, model) for c in model.classes}
    files = []
    for c in model.classes:
        view = views[c.name]
        role, ctx = ROLE_TEMPLATES.get(c.name, "generic"), {}
        if role == "uv":
            machine = model.machine_for(c.name)
            if machine is None:
                raise BackendError(f"{c.name} has no state machine to generate from")
            ctx = {"transitions": leaf_transitions(machine), "initial": machine.initial}
        elif role == "generic":
            bases = resolve_hierarchy(model, c.name)
            if bases and ROLE_TEMPLATES.get(bases[0]) == "uv":
                role, ctx = "uv_subclass", {"base": views[bases[0]]}
        text = _ENV.get_template(f"{role}.py.j2").render(cls=view, **ctx)
        files.append((view["module"] + ".py", text))
    files.append(("main.py", _main_file(model, registry, views)))
    return sorted(files)


def _main_file(model, registry, views) -> str:
    roster = []
    for k, name in enumerate(model.subclasses("UV")):
        roster.append({"py": views[name]["py"], "id": name, "duration": 1 + k % 3, "performance": 80 + 5 * (k % 5)})
    imports = sorted(
        [views[n] for n in ("Operator", "MCC", "UVF-Manager") if n in views]
        + [views[n] for n in model.subclasses("UV")],
        key=lambda v: v["module"],
    )
    schemas = [(name, [f.name for f in c.fields if f.required]) for name, c in sorted(registry.concepts.items())]
    return _ENV.get_template("main.py.j2").render(
        imports=imports,
        schemas=schemas,
        discovery="UV-Discovery-Request" in registry.concepts,
        roster=roster,
        operator=views["Operator"]["py"],
        mcc=views["MCC"]["py"],
        manager=views["UVF-Manager"]["py"],
    )


# -- audit ----------------------------------------------------------------------------------


def audit_artifact(artifact: GeneratedArtifact, rules: CodeQualityRuleSet = CodeQualityRuleSet()) -> list[Violation]:
    """Code-quality findings over every file, subjects tagged ``path:line``."""
    out = []
    for path, content in artifact.files:
        out.extend(check_code_quality(content, rules, path))
    return sort_violations(out)
