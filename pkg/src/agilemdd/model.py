"""In-memory UML model: classes, relationships, state machines and the activity flow.

All types are frozen dataclasses holding tuples, so a parsed model can be
shared freely. ``to_dict``/``from_dict`` give the canonical JSON document used
for fixtures and ``--emit-model``.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional

from .errors import HierarchyCycleError, UnknownClassError


class Visibility(str, Enum):
    PUBLIC = "public"
    PRIVATE = "private"
    PROTECTED = "protected"


class Stereotype(str, Enum):
    AGENT = "agent"
    PLAIN = "plain"


class RelationKind(str, Enum):
    INHERITANCE = "inheritance"
    COMPOSITION = "composition"
    AGGREGATION = "aggregation"
    ASSOCIATION = "association"


class NodeKind(str, Enum):
    START = "start"
    END = "end"
    ACTION = "action"
    DECISION = "decision"
    FORK = "fork"
    JOIN = "join"


@dataclass(frozen=True)
class AttributeDef:
    name: str
    type: str = "string"
    visibility: Visibility = Visibility.PUBLIC


@dataclass(frozen=True)
class OperationSig:
    name: str
    params: tuple[tuple[str, str], ...] = ()
    returns: str = "void"


@dataclass(frozen=True)
class ClassDef:
    name: str
    stereotype: Stereotype = Stereotype.PLAIN
    attributes: tuple[AttributeDef, ...] = ()
    operations: tuple[OperationSig, ...] = ()

    def attribute(self, name: str) -> Optional[AttributeDef]:
        for attr in self.attributes:
            if attr.name == name:
                return attr
        return None


_MULT_RE = re.compile(r"^\s*(\d+|\*)\s*(?:\.\.\s*(\d+|\*)\s*)?$")


@dataclass(frozen=True)
class Multiplicity:
    """Inclusive cardinality range; ``upper=None`` means unbounded."""

    lower: int = 1
    upper: Optional[int] = 1

    @classmethod
    def parse(cls, text: str) -> "Multiplicity":
        m = _MULT_RE.match(text)
        if not m:
            raise ValueError(f"bad multiplicity {text!r}")
        lo, hi = m.group(1), m.group(2)
        if hi is None:
            if lo == "*":
                return cls(0, None)
            return cls(int(lo), int(lo))
        lower = 0 if lo == "*" else int(lo)
        upper = None if hi == "*" else int(hi)
        return cls(lower, upper)

    def is_valid(self) -> bool:
        return self.lower >= 0 and (self.upper is None or self.lower <= self.upper)

    def contains(self, n: int) -> bool:
        return n >= self.lower and (self.upper is None or n <= self.upper)

    def __str__(self):
        if self.upper == self.lower:
            return str(self.lower)
        if self.lower == 0 and self.upper is None:
            return "*"
        return f"{self.lower}..{'*' if self.upper is None else self.upper}"


@dataclass(frozen=True)
class Relationship:
    """Directed edge between two classes.

    For inheritance ``source`` is the subclass. For composition/aggregation
    ``source`` is the whole. ``role`` names the navigation from source to
    target (``self.<role>`` in constraints).
    """

    kind: RelationKind
    source: str
    target: str
    source_multiplicity: Multiplicity = Multiplicity(1, 1)
    target_multiplicity: Multiplicity = Multiplicity(1, 1)
    role: Optional[str] = None


@dataclass(frozen=True)
class StateDef:
    name: str
    parent: Optional[str] = None
    # default sub-state entered when a transition targets this composite state
    entry: Optional[str] = None


@dataclass(frozen=True)
class Transition:
    source: str
    target: str
    trigger: str = ""
    guard: Optional[str] = None
    action: Optional[str] = None


@dataclass(frozen=True)
class StateMachine:
    owner: str
    states: tuple[StateDef, ...]
    initial: str
    transitions: tuple[Transition, ...] = ()

    def state(self, name: str) -> Optional[StateDef]:
        for s in self.states:
            if s.name == name:
                return s
        return None

    def ancestors(self, name: str) -> list[str]:
        """Parent chain of ``name``, nearest first. Stops on cycles."""
        chain: list[str] = []
        seen = {name}
        cur = self.state(name)
        while cur is not None and cur.parent is not None and cur.parent not in seen:
            chain.append(cur.parent)
            seen.add(cur.parent)
            cur = self.state(cur.parent)
        return chain


@dataclass(frozen=True)
class ActivityNode:
    id: str
    kind: NodeKind
    actor: str = ""
    label: str = ""


@dataclass(frozen=True)
class ActivityEdge:
    source: str
    target: str
    guard: Optional[str] = None


@dataclass(frozen=True)
class ActivityFlow:
    nodes: tuple[ActivityNode, ...] = ()
    edges: tuple[ActivityEdge, ...] = ()

    def node(self, node_id: str) -> Optional[ActivityNode]:
        for n in self.nodes:
            if n.id == node_id:
                return n
        return None

    def successors(self, node_id: str) -> list[str]:
        return [e.target for e in self.edges if e.source == node_id]


@dataclass(frozen=True)
class UmlModel:
    classes: tuple[ClassDef, ...] = ()
    relationships: tuple[Relationship, ...] = ()
    state_machines: tuple[StateMachine, ...] = ()
    activity: Optional[ActivityFlow] = None

    def cls(self, name: str) -> Optional[ClassDef]:
        for c in self.classes:
            if c.name == name:
                return c
        return None

    def class_names(self) -> list[str]:
        return [c.name for c in self.classes]

    def machine_for(self, owner: str) -> Optional[StateMachine]:
        for sm in self.state_machines:
            if sm.owner == owner:
                return sm
        return None

    def is_a(self, name: str, ancestor: str) -> bool:
        if name == ancestor:
            return True
        try:
            return ancestor in resolve_hierarchy(self, name)
        except (UnknownClassError, HierarchyCycleError):
            return False

    def all_attributes(self, name: str) -> list[AttributeDef]:
        """Attributes declared on the class and every ancestor, own first."""
        attrs: list[AttributeDef] = []
        for cname in [name, *resolve_hierarchy(self, name)]:
            c = self.cls(cname)
            if c is not None:
                attrs.extend(c.attributes)
        return attrs

    def subclasses(self, name: str) -> list[str]:
        return [c.name for c in self.classes if c.name != name and self.is_a(c.name, name)]


# -- operations ---------------------------------------------------------------


def resolve_hierarchy(model: UmlModel, class_name: str) -> list[str]:
    """Inheritance chain from ``class_name`` up to its root, excluding itself."""
    if model.cls(class_name) is None:
        raise UnknownClassError(f"unknown class {class_name!r}")
    parents: dict[str, str] = {}
    for rel in model.relationships:
        if rel.kind is RelationKind.INHERITANCE:
            parents.setdefault(rel.source, rel.target)
    chain: list[str] = []
    seen = {class_name}
    cur = class_name
    # bounded by the class count, so it always terminates
    for _ in range(len(model.classes) + 1):
        parent = parents.get(cur)
        if parent is None:
            return chain
        if parent in seen:
            raise HierarchyCycleError(f"inheritance cycle through {parent!r}")
        if model.cls(parent) is None:
            raise UnknownClassError(f"unknown class {parent!r}")
        chain.append(parent)
        seen.add(parent)
        cur = parent
    raise HierarchyCycleError(f"inheritance cycle from {class_name!r}")


@dataclass(frozen=True, order=True)
class Defect:
    location: str
    reason: str
    message: str = field(default="", compare=False)

    def __str__(self):
        return f"{self.location}: {self.reason}: {self.message}"


def validate_model(model: UmlModel) -> list[Defect]:
    """Structural defects of ``model``; empty iff every invariant holds."""
    defects: list[Defect] = []
    add = lambda loc, reason, msg: defects.append(Defect(loc, reason, msg))  # noqa: E731

    names: set[str] = set()
    for c in model.classes:
        loc = f"class:{c.name}"
        if not c.name:
            add(loc, "empty-name", "class name is empty")
        if c.name in names:
            add(loc, "duplicate-class", f"class {c.name!r} declared more than once")
        names.add(c.name)
        seen_attrs: set[str] = set()
        for a in c.attributes:
            if a.name in seen_attrs:
                add(f"{loc}.{a.name}", "duplicate-attribute", f"attribute {a.name!r} repeated")
            seen_attrs.add(a.name)

    for i, rel in enumerate(model.relationships):
        loc = f"relationship:{i}:{rel.source}->{rel.target}"
        for end in (rel.source, rel.target):
            if end not in names:
                add(loc, "unknown-class", f"relationship references unknown class {end!r}")
        for mult in (rel.source_multiplicity, rel.target_multiplicity):
            if not mult.is_valid():
                add(loc, "bad-multiplicity", f"multiplicity {mult} has lower > upper")

    for c in model.classes:
        try:
            resolve_hierarchy(model, c.name)
        except HierarchyCycleError as exc:
            add(f"class:{c.name}", "inheritance-cycle", str(exc))
        except UnknownClassError:
            pass  # already reported on the relationship

    owners: set[str] = set()
    for sm in model.state_machines:
        base = f"machine:{sm.owner}"
        if sm.owner not in names:
            add(base, "unknown-class", f"state machine owner {sm.owner!r} is not a class")
        if sm.owner in owners:
            add(base, "duplicate-machine", f"second state machine for {sm.owner!r}")
        owners.add(sm.owner)
        state_names = [s.name for s in sm.states]
        if len(set(state_names)) != len(state_names):
            add(base, "duplicate-state", "state declared more than once")
        declared = set(state_names)
        if sm.initial not in declared:
            add(f"{base}:{sm.initial}", "unknown-state", f"initial state {sm.initial!r} undeclared")
        for s in sm.states:
            if s.parent is not None and s.parent not in declared:
                add(f"{base}:{s.name}", "unknown-state", f"parent {s.parent!r} undeclared")
            if s.entry is not None and s.entry not in declared:
                add(f"{base}:{s.name}", "unknown-state", f"entry {s.entry!r} undeclared")
            if _parent_cycle(sm, s.name):
                add(f"{base}:{s.name}", "state-cycle", "parent references form a cycle")
        for t in sm.transitions:
            for end in (t.source, t.target):
                if end not in declared:
                    add(f"{base}:{t.source}->{t.target}", "unknown-state", f"transition endpoint {end!r} undeclared")

    if model.activity is not None:
        act = model.activity
        ids = [n.id for n in act.nodes]
        id_set = set(ids)
        if len(id_set) != len(ids):
            add("activity", "duplicate-node", "node id repeated")
        starts = [n for n in act.nodes if n.kind is NodeKind.START]
        if len(starts) != 1:
            add("activity", "start-count", f"expected exactly one start node, found {len(starts)}")
        if not any(n.kind is NodeKind.END for n in act.nodes):
            add("activity", "no-end", "activity has no end node")
        for n in act.nodes:
            if n.kind is NodeKind.ACTION and (not n.actor or not n.label):
                add(f"node:{n.id}", "incomplete-action", "action node needs actor and label")
            if n.actor and n.actor not in names:
                add(f"node:{n.id}", "unknown-class", f"actor {n.actor!r} is not a class")
        for e in act.edges:
            for end in (e.source, e.target):
                if end not in id_set:
                    add(f"edge:{e.source}->{e.target}", "unknown-node", f"edge endpoint {end!r} undeclared")

    return sorted(defects)


def _parent_cycle(sm: StateMachine, name: str) -> bool:
    seen = {name}
    cur = sm.state(name)
    while cur is not None and cur.parent is not None:
        if cur.parent in seen:
            return True
        seen.add(cur.parent)
        cur = sm.state(cur.parent)
    return False


# -- canonical JSON -----------------------------------------------------------


def _mult_to_json(m: Multiplicity):
    return [m.lower, m.upper]


def to_dict(model: UmlModel) -> dict:
    return {
        "classes": [
            {
                "name": c.name,
                "stereotype": c.stereotype.value,
                "attributes": [
                    {"name": a.name, "type": a.type, "visibility": a.visibility.value} for a in c.attributes
                ],
                "operations": [
                    {"name": o.name, "params": [list(p) for p in o.params], "returns": o.returns}
                    for o in c.operations
                ],
            }
            for c in model.classes
        ],
        "relationships": [
            {
                "kind": r.kind.value,
                "source": r.source,
                "target": r.target,
                "source_multiplicity": _mult_to_json(r.source_multiplicity),
                "target_multiplicity": _mult_to_json(r.target_multiplicity),
                "role": r.role,
            }
            for r in model.relationships
        ],
        "state_machines": [
            {
                "owner": sm.owner,
                "initial": sm.initial,
                "states": [{"name": s.name, "parent": s.parent, "entry": s.entry} for s in sm.states],
                "transitions": [
                    {"source": t.source, "target": t.target, "trigger": t.trigger, "guard": t.guard, "action": t.action}
                    for t in sm.transitions
                ],
            }
            for sm in model.state_machines
        ],
        "activity": None
        if model.activity is None
        else {
            "nodes": [
                {"id": n.id, "kind": n.kind.value, "actor": n.actor, "label": n.label} for n in model.activity.nodes
            ],
            "edges": [{"source": e.source, "target": e.target, "guard": e.guard} for e in model.activity.edges],
        },
    }


def from_dict(doc: dict) -> UmlModel:
    classes = tuple(
        ClassDef(
            name=c["name"],
            stereotype=Stereotype(c.get("stereotype", "plain")),
            attributes=tuple(
                AttributeDef(a["name"], a.get("type", "string"), Visibility(a.get("visibility", "public")))
                for a in c.get("attributes", [])
            ),
            operations=tuple(
                OperationSig(o["name"], tuple(tuple(p) for p in o.get("params", [])), o.get("returns", "void"))
                for o in c.get("operations", [])
            ),
        )
        for c in doc.get("classes", [])
    )
    rels = tuple(
        Relationship(
            kind=RelationKind(r["kind"]),
            source=r["source"],
            target=r["target"],
            source_multiplicity=Multiplicity(*r.get("source_multiplicity", [1, 1])),
            target_multiplicity=Multiplicity(*r.get("target_multiplicity", [1, 1])),
            role=r.get("role"),
        )
        for r in doc.get("relationships", [])
    )
    machines = tuple(
        StateMachine(
            owner=sm["owner"],
            initial=sm["initial"],
            states=tuple(StateDef(s["name"], s.get("parent"), s.get("entry")) for s in sm["states"]),
            transitions=tuple(
                Transition(t["source"], t["target"], t.get("trigger", ""), t.get("guard"), t.get("action"))
                for t in sm.get("transitions", [])
            ),
        )
        for sm in doc.get("state_machines", [])
    )
    act = doc.get("activity")
    activity = None
    if act is not None:
        activity = ActivityFlow(
            nodes=tuple(ActivityNode(n["id"], NodeKind(n["kind"]), n.get("actor", ""), n.get("label", "")) for n in act["nodes"]),
            edges=tuple(ActivityEdge(e["source"], e["target"], e.get("guard")) for e in act["edges"]),
        )
    return UmlModel(classes, rels, machines, activity)


def dumps(model: UmlModel) -> str:
    """Canonical JSON text: sorted keys, two-space indent, trailing newline."""
    return json.dumps(to_dict(model), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def loads(text: str) -> UmlModel:
    return from_dict(json.loads(text))


def merge_models(parts: Iterable[UmlModel]) -> UmlModel:
    """Concatenate model parts without any validation (see plantuml.load_model)."""
    classes: list[ClassDef] = []
    rels: list[Relationship] = []
    machines: list[StateMachine] = []
    activity = None
    for p in parts:
        classes.extend(p.classes)
        rels.extend(p.relationships)
        machines.extend(p.state_machines)
        if p.activity is not None:
            activity = p.activity
    return UmlModel(tuple(classes), tuple(rels), tuple(machines), activity)
