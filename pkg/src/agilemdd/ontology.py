"""FIPA-style communication ontology: concept, predicate and action schemas.

Definition syntax (``.onto``)::

    enum status { new planned active completed }
    concept Mission-Brief {
      mission-ID: string required
      status: enum-status required
      performance-metric: number[0..100] required
    }
    predicate is-a
    action send(payload=Mission-Brief, Fleet-Plan)
    extend action send(payload=UV-List)
    assert UAV is-a UV

``#`` and ``--`` start comments. Field types are ``string``, ``number``
(optionally ranged) and ``enum-status``.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Optional

from .constraints import Violation, sort_violations
from .errors import OntologyError, UnknownSchemaError
from .model import RelationKind, UmlModel


class PredicateName(str, Enum):
    IS_A = "is-a"
    HAS_A = "has-a"
    OWNS = "owns"
    COLLABORATES = "collaborates"


MIRRORED_KIND = {
    PredicateName.IS_A: RelationKind.INHERITANCE,
    PredicateName.HAS_A: RelationKind.COMPOSITION,
    PredicateName.OWNS: RelationKind.AGGREGATION,
    PredicateName.COLLABORATES: RelationKind.ASSOCIATION,
}

FIELD_TYPES = ("string", "number", "enum-status")


@dataclass(frozen=True)
class FieldDef:
    name: str
    type: str
    required: bool = True
    minimum: Optional[float] = None
    maximum: Optional[float] = None


@dataclass(frozen=True)
class ConceptSchema:
    name: str
    fields: tuple[FieldDef, ...]

    def field(self, name: str) -> Optional[FieldDef]:
        return next((f for f in self.fields if f.name == name), None)


@dataclass(frozen=True)
class PredicateSchema:
    name: PredicateName

    @property
    def kind(self) -> RelationKind:
        return MIRRORED_KIND[self.name]


@dataclass(frozen=True)
class ActionSchema:
    name: str  # send | receive
    payloads: tuple[str, ...]


@dataclass(frozen=True)
class Assertion:
    subject: str
    predicate: PredicateName
    object: str

    def __str__(self):
        return f"{self.subject} {self.predicate.value} {self.object}"


@dataclass(frozen=True)
class AgentMessage:
    sender: str
    receiver: str
    action: str
    schema: str
    content: dict = field(default_factory=dict, hash=False)
    seq: int = 0
    performative: Optional[str] = None


@dataclass(frozen=True)
class OntologyRegistry:
    concepts: dict = field(default_factory=dict, hash=False)
    predicates: dict = field(default_factory=dict, hash=False)
    actions: dict = field(default_factory=dict, hash=False)
    assertions: tuple[Assertion, ...] = ()
    statuses: tuple[str, ...] = ()

    def concept(self, name: str) -> ConceptSchema:
        try:
            return self.concepts[name]
        except KeyError:
            raise UnknownSchemaError(f"unknown concept schema {name!r}") from None

    def to_dict(self) -> dict:
        return {
            "concepts": {
                name: [
                    {"name": f.name, "type": f.type, "required": f.required, "min": f.minimum, "max": f.maximum}
                    for f in c.fields
                ]
                for name, c in self.concepts.items()
            },
            "predicates": {p.value: MIRRORED_KIND[p].value for p in self.predicates},
            "actions": {name: list(a.payloads) for name, a in self.actions.items()},
            "assertions": [str(a) for a in self.assertions],
            "statuses": list(self.statuses),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


_NAME = r"[A-Za-z_][\w-]*"
_ENUM_RE = re.compile(r"^enum\s+status\s*\{([^}]*)\}$")
_CONCEPT_RE = re.compile(rf"^concept\s+({_NAME})\s*\{{\s*(.*)$")
_FIELD_RE = re.compile(rf"^({_NAME})\s*:\s*([\w-]+)(?:\[\s*(-?[\d.]+)\s*\.\.\s*(-?[\d.]+)\s*\])?\s*(required|optional)?$")
_PRED_RE = re.compile(rf"^predicate\s+({_NAME})$")
_ACTION_RE = re.compile(r"^(extend\s+)?action\s+(\w+)\s*\(\s*payload\s*=\s*([^)]*)\)$")
_ASSERT_RE = re.compile(rf"^assert\s+({_NAME})\s+({_NAME})\s+({_NAME})$")


def _strip_comment(line: str) -> str:
    for marker in ("#", "--"):
        idx = line.find(marker)
        # '--' inside names like "a--b" is not a thing in this syntax
        if idx >= 0 and (marker == "#" or idx == 0 or line[idx - 1].isspace()):
            line = line[:idx]
    return line.strip()


def register_ontology(text: str, base: Optional[OntologyRegistry] = None, path: str = "<onto>") -> OntologyRegistry:
    """Build a registry from definitions text, optionally extending ``base``."""
    concepts = dict(base.concepts) if base else {}
    predicates = dict(base.predicates) if base else {}
    actions = dict(base.actions) if base else {}
    assertions = list(base.assertions) if base else []
    statuses = list(base.statuses) if base else []
    pending_actions: list[tuple[int, ActionSchema]] = []

    lines = text.replace("\r\n", "\n").split("\n")
    i = 0
    while i < len(lines):
        no, line = i + 1, _strip_comment(lines[i])
        i += 1
        if not line:
            continue
        if (mo := _ENUM_RE.match(line)):
            statuses.extend(s for s in mo.group(1).replace(",", " ").split() if s not in statuses)
            continue
        if (mo := _CONCEPT_RE.match(line)):
            name = mo.group(1)
            if name in concepts:
                raise OntologyError(f"{path}:{no}: concept {name!r} registered twice", "duplicate-schema")
            body, rest = [], mo.group(2).strip()
            closed = False
            if rest:
                if rest.endswith("}"):
                    rest, closed = rest[:-1].strip(), True
                body.extend((no, part) for part in rest.split(";"))
            while not closed:
                if i >= len(lines):
                    raise OntologyError(f"{path}:{no}: concept {name!r} not closed", "syntax")
                inner = _strip_comment(lines[i])
                i += 1
                if inner.endswith("}"):
                    inner, closed = inner[:-1].strip(), True
                body.extend((i, part) for part in inner.split(";"))
            concepts[name] = ConceptSchema(name, _fields(name, body, path))
            continue
        if (mo := _PRED_RE.match(line)):
            try:
                pname = PredicateName(mo.group(1))
            except ValueError:
                raise OntologyError(f"{path}:{no}: unknown predicate {mo.group(1)!r}", "unknown-predicate") from None
            if pname in predicates:
                raise OntologyError(f"{path}:{no}: predicate {pname.value!r} registered twice", "duplicate-schema")
            predicates[pname] = PredicateSchema(pname)
            continue
        if (mo := _ACTION_RE.match(line)):
            extend, aname = bool(mo.group(1)), mo.group(2)
            if aname not in ("send", "receive"):
                raise OntologyError(f"{path}:{no}: action must be send or receive, not {aname!r}", "unknown-action")
            payloads = tuple(p.strip() for p in mo.group(3).split(",") if p.strip())
            if not payloads:
                raise OntologyError(f"{path}:{no}: action {aname!r} without payload", "syntax")
            if extend:
                if aname not in actions:
                    raise OntologyError(f"{path}:{no}: cannot extend undeclared action {aname!r}", "unknown-action")
                merged = actions[aname].payloads + tuple(p for p in payloads if p not in actions[aname].payloads)
                actions[aname] = replace(actions[aname], payloads=merged)
            else:
                if aname in actions:
                    raise OntologyError(f"{path}:{no}: action {aname!r} registered twice", "duplicate-schema")
                actions[aname] = ActionSchema(aname, payloads)
            pending_actions.append((no, ActionSchema(aname, payloads)))
            continue
        if (mo := _ASSERT_RE.match(line)):
            try:
                pname = PredicateName(mo.group(2))
            except ValueError:
                raise OntologyError(f"{path}:{no}: unknown predicate {mo.group(2)!r}", "unknown-predicate") from None
            assertions.append(Assertion(mo.group(1), pname, mo.group(3)))
            continue
        raise OntologyError(f"{path}:{no}: cannot parse {line!r}", "syntax")

    # payloads may name concepts declared later in the file
    for no, act in pending_actions:
        for p in act.payloads:
            if p not in concepts:
                raise OntologyError(f"{path}:{no}: action {act.name} references unknown concept {p!r}", "unknown-payload")
    for a in assertions:
        if a.predicate not in predicates:
            raise OntologyError(f"{path}: assertion '{a}' uses undeclared predicate", "unknown-predicate")
    return OntologyRegistry(concepts, predicates, actions, tuple(assertions), tuple(statuses))


def _fields(concept: str, body, path) -> tuple[FieldDef, ...]:
    out: list[FieldDef] = []
    for no, raw in body:
        raw = raw.strip()
        if not raw:
            continue
        mo = _FIELD_RE.match(raw)
        if mo is None:
            raise OntologyError(f"{path}:{no}: bad field declaration {raw!r}", "syntax")
        name, ftype, lo, hi, req = mo.groups()
        if ftype not in FIELD_TYPES:
            raise OntologyError(f"{path}:{no}: unknown field type {ftype!r}", "unknown-type")
        if (lo is not None) and ftype != "number":
            raise OntologyError(f"{path}:{no}: only number fields take a range", "syntax")
        if any(f.name == name for f in out):
            raise OntologyError(f"{path}:{no}: field {name!r} repeated in {concept}", "duplicate-field")
        out.append(FieldDef(name, ftype, req != "optional", float(lo) if lo else None, float(hi) if hi else None))
    if not any(f.required and f.name.lower().endswith("-id") for f in out):
        raise OntologyError(f"{path}: concept {concept!r} needs a required *-ID field", "missing-identifier")
    return tuple(out)


def load_ontology(paths) -> OntologyRegistry:
    """Register one or more ``.onto`` files in order; later files extend earlier ones."""
    if isinstance(paths, (str, Path)):
        paths = [paths]
    registry = None
    for p in paths:
        registry = register_ontology(Path(p).read_text(encoding="utf-8"), registry, str(p))
    if registry is None:
        raise ValueError("no ontology files given")
    return registry


def _type_ok(f: FieldDef, value, statuses) -> Optional[str]:
    if f.type == "string":
        return None if isinstance(value, str) else "string"
    if f.type == "number":
        return None if isinstance(value, (int, float)) and not isinstance(value, bool) else "number"
    if not isinstance(value, str) or (statuses and value not in statuses):
        return "enum-status" + (f" (one of {', '.join(statuses)})" if statuses else "")
    return None


def validate_message(registry: OntologyRegistry, message: AgentMessage) -> list[Violation]:
    """Schema conformance of one message; one violation per offending field."""
    schema = registry.concept(message.schema)
    subject = f"{message.sender}->{message.receiver}#{message.seq}"
    out: list[Violation] = []

    def cid(fname):
        return f"{schema.name}.{fname}"

    for f in schema.fields:
        if f.name not in message.content:
            if f.required:
                out.append(Violation(cid(f.name), subject, "<missing>", f"required field {f.name!r} missing", "missing-required-field"))
            continue
        value = message.content[f.name]
        want = _type_ok(f, value, registry.statuses)
        if want is not None:
            out.append(
                Violation(cid(f.name), subject, repr(value), f"field {f.name!r} must be {want}", "type-mismatch")
            )
            continue
        if f.type == "number" and (
            (f.minimum is not None and value < f.minimum) or (f.maximum is not None and value > f.maximum)
        ):
            out.append(
                Violation(cid(f.name), subject, repr(value), f"field {f.name!r} outside [{f.minimum:g}, {f.maximum:g}]", "out-of-range")
            )
    for key in message.content:
        if schema.field(key) is None:
            out.append(Violation(cid(key), subject, repr(message.content[key]), f"undeclared field {key!r}", "undeclared-field"))
    return sort_violations(out)


def check_action(registry: OntologyRegistry, message: AgentMessage) -> list[Violation]:
    """The message's action must be registered and carry its schema."""
    action = registry.actions.get(message.action)
    if action is not None and message.schema in action.payloads:
        return []
    subject = f"{message.sender}->{message.receiver}#{message.seq}"
    return [
        Violation(
            f"action.{message.action}", subject, message.schema,
            f"action {message.action!r} does not carry {message.schema}", "action-payload",
        )
    ]


def _modeled(model: UmlModel, a_subject, pred: PredicateName, a_object) -> bool:
    kind = MIRRORED_KIND[pred]
    for rel in model.relationships:
        if rel.kind is not kind:
            continue
        if (rel.source, rel.target) == (a_subject, a_object):
            return True
        if kind is RelationKind.ASSOCIATION and (rel.target, rel.source) == (a_subject, a_object):
            return True
    return False


def check_predicate_consistency(registry: OntologyRegistry, model: UmlModel) -> list[Violation]:
    """Assertions without a mirrored relationship, and relationships of a
    predicate-covered kind that no assertion states."""
    out: list[Violation] = []
    for a in registry.assertions:
        if not _modeled(model, a.subject, a.predicate, a.object):
            out.append(
                Violation(
                    f"predicate.{a.predicate.value}", str(a), "<no edge>",
                    f"asserted '{a}' but the model has no {MIRRORED_KIND[a.predicate].value} edge", "asserted-not-modeled",
                )
            )
    covered = {MIRRORED_KIND[p]: p for p in registry.predicates}
    for rel in model.relationships:
        pred = covered.get(rel.kind)
        if pred is None:
            continue
        stated = any(
            a.predicate is pred and (
                (a.subject, a.object) == (rel.source, rel.target)
                or (rel.kind is RelationKind.ASSOCIATION and (a.subject, a.object) == (rel.target, rel.source))
            )
            for a in registry.assertions
        )
        if not stated:
            edge = f"{rel.source} {pred.value} {rel.target}"
            out.append(
                Violation(f"predicate.{pred.value}", edge, rel.kind.value, f"model edge '{edge}' has no assertion", "modeled-not-asserted")
            )
    return sort_violations(out)
