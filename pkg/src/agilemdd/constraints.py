"""Construction constraints over instance data and code-quality rules over source text."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Optional

from . import complexity, ocl
from .errors import EvaluationError, UnknownOperationError
from .model import Defect, UmlModel, resolve_hierarchy
from .ocl import Constraint, ConstraintKind
from .plantuml import ParseDiagnostic


def _natural(text: str):
    return [int(t) if t.isdigit() else t for t in re.split(r"(\d+)", text)]


@dataclass(frozen=True)
class Violation:
    constraint_id: str
    subject: str
    observed: str
    message: str
    kind: str = field(default="", compare=False)

    def sort_key(self):
        return (self.constraint_id, _natural(self.subject))

    def to_dict(self) -> dict:
        return {
            "constraint": self.constraint_id,
            "kind": self.kind,
            "subject": self.subject,
            "observed": self.observed,
            "message": self.message,
        }

    def __str__(self):
        obs = f" (observed {self.observed})" if self.observed else ""
        return f"{self.subject}: [{self.constraint_id}] {self.message}{obs}"


def sort_violations(violations: Iterable[Violation]) -> list[Violation]:
    return sorted(violations, key=Violation.sort_key)


# -- parsing ------------------------------------------------------------------


def parse_constraints(text: str, path: str = "<ocl>") -> tuple[list[Constraint], list[ParseDiagnostic]]:
    """Parse ``context`` blocks into constraints; syntax problems become diagnostics."""
    constraints, issues = ocl.parse_blocks(text.replace("\r\n", "\n"))
    diags = [ParseDiagnostic(path, i.line, i.col, "error", i.message, i.reason) for i in issues]
    seen: set[str] = set()
    unique: list[Constraint] = []
    for c in constraints:
        if c.id in seen:
            diags.append(ParseDiagnostic(path, c.line, 1, "error", f"constraint id {c.id!r} repeated", "duplicate-id"))
            continue
        seen.add(c.id)
        unique.append(c)
    return unique, sorted(diags)


def load_constraints(path) -> tuple[list[Constraint], list[ParseDiagnostic]]:
    return parse_constraints(Path(path).read_text(encoding="utf-8"), str(path))


def validate_constraints(model: UmlModel, constraints: Iterable[Constraint], path: str = "<ocl>") -> list[ParseDiagnostic]:
    """Context/operation resolution and static typing against ``model``."""
    diags: list[ParseDiagnostic] = []
    checker = ocl.TypeChecker(model)
    for c in constraints:
        cls = model.cls(c.context)
        if cls is None:
            diags.append(ParseDiagnostic(path, c.line, 1, "error", f"{c.id}: unknown context class {c.context!r}", "unknown-class"))
            continue
        if c.operation is not None:
            ops = {o.name for name in [c.context, *_ancestors(model, c.context)] for o in model.cls(name).operations}
            if c.operation not in ops:
                diags.append(
                    ParseDiagnostic(path, c.line, 1, "error", f"{c.id}: {c.context} has no operation {c.operation!r}", "unknown-operation")
                )
        for err in checker.check(c):
            diags.append(ParseDiagnostic(path, c.line, 1, "error", f"{c.id}: {err}", "type-error"))
    return sorted(diags)


def _ancestors(model, name):
    return resolve_hierarchy(model, name)


# -- instance data ------------------------------------------------------------


@dataclass
class Instance:
    id: str
    cls: str
    attrs: dict = field(default_factory=dict)


@dataclass
class InstanceStore:
    """Instances per class plus links keyed ``"<SourceClass>.<role>"``."""

    instances: dict[str, list[Instance]] = field(default_factory=dict)
    links: dict[str, list[tuple[str, str]]] = field(default_factory=dict)

    def add(self, cls: str, inst_id: str, **attrs) -> Instance:
        inst = Instance(inst_id, cls, dict(attrs))
        self.instances.setdefault(cls, []).append(inst)
        return inst

    def link(self, key: str, source_id: str, target_id: str) -> None:
        self.links.setdefault(key, []).append((source_id, target_id))

    def by_id(self, inst_id: str) -> Optional[Instance]:
        for insts in self.instances.values():
            for inst in insts:
                if inst.id == inst_id:
                    return inst
        return None

    def all_of(self, model: UmlModel, cls: str) -> list[Instance]:
        out = [i for c, insts in self.instances.items() if model.is_a(c, cls) for i in insts]
        return sorted(out, key=lambda i: _natural(i.id))

    def navigate(self, model: UmlModel, inst: Instance, role: str) -> list[Instance]:
        for rel in model.relationships:
            if rel.role == role and model.is_a(inst.cls, rel.source):
                key = f"{rel.source}.{role}"
                targets = [t for s, t in self.links.get(key, []) if s == inst.id]
                return [x for x in (self.by_id(t) for t in targets) if x is not None]
        raise EvaluationError(f"{inst.cls} has no attribute or role {role!r}")

    def validate(self, model: UmlModel) -> list[Defect]:
        """Store invariants: known classes, declared attribute keys, resolvable links."""
        defects: list[Defect] = []
        ids: set[str] = set()
        for cls, insts in self.instances.items():
            if model.cls(cls) is None:
                defects.append(Defect(f"store:{cls}", "unknown-class", f"instances of undeclared class {cls!r}"))
                continue
            declared = {a.name for a in model.all_attributes(cls)}
            for inst in insts:
                if inst.id in ids:
                    defects.append(Defect(f"store:{cls}:{inst.id}", "duplicate-instance", "instance id reused"))
                ids.add(inst.id)
                for key in inst.attrs:
                    if key not in declared:
                        defects.append(Defect(f"store:{cls}:{inst.id}", "unknown-attribute", f"{key!r} not declared on {cls}"))
        roles = {f"{r.source}.{r.role}" for r in model.relationships if r.role}
        for key, pairs in self.links.items():
            if key not in roles:
                defects.append(Defect(f"store:link:{key}", "unknown-role", f"no relationship role {key!r}"))
                continue
            for s, t in pairs:
                for end in (s, t):
                    if end not in ids:
                        defects.append(Defect(f"store:link:{key}", "unknown-instance", f"link endpoint {end!r} missing"))
        return sorted(defects)

    @classmethod
    def from_dict(cls, doc: dict) -> "InstanceStore":
        store = cls()
        for cname, insts in doc.get("instances", {}).items():
            for raw in insts:
                raw = dict(raw)
                store.add(cname, raw.pop("id"), **raw)
        for key, pairs in doc.get("links", {}).items():
            for s, t in pairs:
                store.link(key, s, t)
        return store

    def to_dict(self) -> dict:
        return {
            "instances": {c: [{"id": i.id, **i.attrs} for i in insts] for c, insts in self.instances.items()},
            "links": {k: [list(p) for p in v] for k, v in self.links.items()},
        }

    @classmethod
    def load(cls, path) -> "InstanceStore":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _store_env(model: UmlModel, store: InstanceStore, self_obj=None) -> ocl.Env:
    def resolve(obj, name):
        if isinstance(obj, Instance):
            if name in obj.attrs:
                return obj.attrs[name]
            if any(a.name == name for a in model.all_attributes(obj.cls)):
                raise EvaluationError(f"{obj.id}.{name} is unset")
            return store.navigate(model, obj, name)
        return ocl._dict_attr(obj, name)

    return ocl.Env(
        self_obj=self_obj,
        resolve_attr=resolve,
        all_instances=lambda cls: store.all_of(model, cls),
        classes=model.class_names(),
    )


def _observed(env: ocl.Env) -> str:
    parts = [f"{k}={ocl.fmt(v)}" for k, v in env.reads if not isinstance(v, list)]
    parts += [f"{k}->size()={len(v)}" for k, v in env.reads if isinstance(v, list)]
    parts += env.notes
    return ", ".join(dict.fromkeys(parts))


_INVARIANT_KINDS = (ConstraintKind.UNIQUENESS, ConstraintKind.CARDINALITY, ConstraintKind.VALUE)


def check_invariants(model: UmlModel, store: InstanceStore, constraints: Iterable[Constraint]) -> list[Violation]:
    """One violation per (constraint, offending subject); evaluation errors are
    reported per constraint and do not stop the remaining checks."""
    out: list[Violation] = []
    for c in constraints:
        if c.kind not in _INVARIANT_KINDS:
            continue
        text = c.text()
        subjects = store.all_of(model, c.context) if c.references_self() else [None]
        for inst in subjects:
            env = _store_env(model, store, inst)
            subject = inst.id if inst is not None else c.context
            try:
                ok = ocl.evaluate(c.expr, env)
                if not isinstance(ok, bool):
                    raise EvaluationError(f"constraint evaluated to {ocl.fmt(ok)}, not a boolean")
            except EvaluationError as exc:
                out.append(Violation(c.id, subject, "<error>", f"evaluation error: {exc}", c.kind.value))
                break
            if not ok:
                out.append(Violation(c.id, subject, _observed(env), f"{c.kind.value} constraint violated: {text}", c.kind.value))
    return sort_violations(out)


def check_transition_contract(
    constraints: Iterable[Constraint],
    operation: str,
    before: dict,
    after: dict,
    context: Optional[str] = None,
) -> list[Violation]:
    """Preconditions on ``before``; postconditions on ``after`` with ``@pre`` reading ``before``."""
    relevant = [
        c for c in constraints
        if c.is_contract and c.operation == operation and (context is None or c.context == context)
    ]
    if not relevant:
        raise UnknownOperationError(f"no pre/postcondition references operation {operation!r}")
    out: list[Violation] = []
    for c in relevant:
        if c.kind is ConstraintKind.PRECONDITION:
            env = ocl.Env(self_obj=before)
        else:
            env = ocl.Env(self_obj=after, pre_obj=before)
        subject = f"{c.context}::{operation}"
        try:
            ok = ocl.evaluate(c.expr, env)
        except EvaluationError as exc:
            out.append(Violation(c.id, subject, "<error>", f"evaluation error: {exc}", c.kind.value))
            continue
        if ok is not True:
            out.append(Violation(c.id, subject, _observed(env), f"{c.kind.value} violated: {c.text()}", c.kind.value))
    return sort_violations(out)


def value_violations(model: UmlModel, constraints: Iterable[Constraint], cls: str, attrs: dict, inst_id: str) -> list[Violation]:
    """Value constraints of ``cls`` (and ancestors) evaluated on one attribute map."""
    out = []
    for c in constraints:
        if c.kind is not ConstraintKind.VALUE or not model.is_a(cls, c.context):
            continue
        env = ocl.Env(self_obj=attrs, classes=model.class_names())
        try:
            ok = ocl.evaluate(c.expr, env)
        except EvaluationError as exc:
            out.append(Violation(c.id, inst_id, "<error>", f"evaluation error: {exc}", c.kind.value))
            continue
        if ok is not True:
            out.append(Violation(c.id, inst_id, _observed(env), f"value constraint violated: {c.text()}", c.kind.value))
    return sort_violations(out)


# -- cardinality vs multiplicity ---------------------------------------------------


def _size_bounds(expr) -> Optional[tuple[str, int, Optional[int]]]:
    """``(role, lower, upper)`` for conjunctions of ``self.role->size() OP n``."""
    if isinstance(expr, ocl.Bin) and expr.op == "and":
        a, b = _size_bounds(expr.left), _size_bounds(expr.right)
        if a is None or b is None or a[0] != b[0]:
            return None
        upper = a[2] if b[2] is None else b[2] if a[2] is None else min(a[2], b[2])
        return a[0], max(a[1], b[1]), upper
    if not (isinstance(expr, ocl.Bin) and expr.op in ("=", "<", "<=", ">", ">=")):
        return None
    left, right, op = expr.left, expr.right, expr.op
    if isinstance(left, ocl.Lit):
        left, right = right, left
        op = {"<": ">", "<=": ">=", ">": "<", ">=": "<=", "=": "="}[op]
    if not (
        isinstance(left, ocl.Arrow) and left.name == "size" and isinstance(left.obj, ocl.Attr)
        and isinstance(left.obj.obj, ocl.SelfRef) and isinstance(right, ocl.Lit)
        and isinstance(right.value, int) and not isinstance(right.value, bool)
    ):
        return None
    role, n = left.obj.name, right.value
    return {
        "=": (role, n, n), ">=": (role, n, None), ">": (role, n + 1, None),
        "<=": (role, 0, n), "<": (role, 0, n - 1),
    }[op]


def reconcile_cardinality(model: UmlModel, constraints: Iterable[Constraint]) -> list[Defect]:
    """Cardinality constraints whose bounds disagree with the diagram multiplicity."""
    defects = []
    for c in constraints:
        if c.kind is not ConstraintKind.CARDINALITY:
            continue
        bounds = _size_bounds(c.expr)
        if bounds is None:
            continue
        role, lo, hi = bounds
        rel = next((r for r in model.relationships if r.role == role and model.is_a(c.context, r.source)), None)
        if rel is None:
            defects.append(Defect(f"constraint:{c.id}", "unknown-role", f"{c.context} has no role {role!r}"))
            continue
        mult = rel.target_multiplicity
        if (mult.lower, mult.upper) != (lo, hi):
            ocl_range = f"{lo}..{'*' if hi is None else hi}"
            defects.append(
                Defect(f"constraint:{c.id}", "cardinality-mismatch", f"OCL bounds {ocl_range} but diagram says {mult}")
            )
    return sorted(defects)


# -- code quality ---------------------------------------------------------------


@dataclass(frozen=True)
class CodeQualityRuleSet:
    space_per_indent: int = 4
    max_line_length: int = 120
    max_function_length: int = 60
    trailing_whitespace_allowed: bool = False
    imports_at_top_required: bool = True

    def __post_init__(self):
        for name in ("space_per_indent", "max_line_length", "max_function_length"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    def variables(self) -> dict:
        return {
            "spacePerIndent": self.space_per_indent,
            "maxLineLength": self.max_line_length,
            "maxFunctionLength": self.max_function_length,
            "trailingWhitespaceAllowed": self.trailing_whitespace_allowed,
            "importsAtTopRequired": self.imports_at_top_required,
        }


_IMPORT_RE = re.compile(r"^\s*(import\s|from\s+\S+\s+import\s|#include\b|using\s|require\b|use\s)")
_DEF_RE = re.compile(
    r"^\s*(def\s|async\s+def\s|class\s|function\s|func\s|fn\s|interface\s|enum\s|struct\s"
    r"|(public|private|protected|static|final|abstract)\b[^;=]*[({]\s*$)"
)

_rules_cache: list[Constraint] = []


def code_quality_constraints() -> list[Constraint]:
    """The bundled code-quality rules (``Line`` and ``Function`` contexts)."""
    if not _rules_cache:
        text = resources.files("agilemdd").joinpath("rules/code_quality.ocl").read_text(encoding="utf-8")
        parsed, diags = parse_constraints(text, "code_quality.ocl")
        if diags:
            raise RuntimeError(f"bundled code-quality rules do not parse: {diags[0]}")
        _rules_cache.extend(parsed)
    return list(_rules_cache)


def _function_spans(source: str, path: str) -> list[tuple[str, int, int]]:
    spans = complexity.function_spans(source, path)
    if spans is not None:
        return spans
    return complexity.heuristic_function_spans(source)


def check_code_quality(source: str, rules: CodeQualityRuleSet = CodeQualityRuleSet(), path: str = "<source>") -> list[Violation]:
    """Per-line and per-function code-quality findings for one source text.

    Indentation uses ``self.leadingSpaces.mod(spacePerIndent) = 0``; every tab
    in the leading whitespace is reported separately instead.
    """
    lines = source.replace("\r\n", "\n").split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    variables = rules.variables()
    out: list[Violation] = []
    rule_set = code_quality_constraints()
    line_rules = [c for c in rule_set if c.context == "Line"]
    func_rules = [c for c in rule_set if c.context == "Function"]

    seen_definition = False
    for no, text in enumerate(lines, start=1):
        stripped = text.lstrip(" \t")
        lead = text[: len(text) - len(stripped)]
        is_blank = not stripped
        is_import = bool(_IMPORT_RE.match(text))
        if _DEF_RE.match(text):
            seen_definition = True
        for _ in range(lead.count("\t")):
            out.append(Violation("indentationTab", f"{path}:{no}", "tab", "tab character in indentation", "code-quality"))
        facts = {
            "leadingSpaces": 0 if (is_blank or "\t" in lead) else len(lead),
            "length": len(text),
            "trailingSpaces": len(text) - len(text.rstrip()),
            "isImport": is_import,
            "afterDefinition": seen_definition and not _DEF_RE.match(text),
            "lineNumber": no,
        }
        for c in line_rules:
            env = ocl.Env(self_obj=facts, variables=variables)
            if ocl.evaluate(c.expr, env) is not True:
                out.append(Violation(c.id, f"{path}:{no}", _observed(env), f"{c.id}: {c.text()}", "code-quality"))

    for name, start, end in _function_spans(source, path):
        facts = {"name": name, "bodyLines": max(0, end - start), "startLine": start}
        for c in func_rules:
            env = ocl.Env(self_obj=facts, variables=variables)
            if ocl.evaluate(c.expr, env) is not True:
                out.append(
                    Violation(c.id, f"{path}:{start}", _observed(env), f"function {name!r}: {c.text()}", "code-quality")
                )
    return sort_violations(out)


def violations_to_json(violations: Iterable[Violation]) -> str:
    return json.dumps([v.to_dict() for v in violations], indent=2, sort_keys=True)


def dump_constraint(c: Constraint) -> dict[str, Any]:
    return {"id": c.id, "context": c.context, "kind": c.kind.value, "operation": c.operation, "expr": c.text()}
