"""Parser for the supported PlantUML subset (class, state and activity diagrams).

Supported constructs:

* class diagrams: ``class Name [<<agent>>] { ... }`` with ``+``/``-``/``#``
  members, and the arrows ``<|--``, ``*--``, ``o--``, ``--``/``-->`` with
  optional quoted multiplicities and a ``: role`` label;
* state diagrams: ``[*] --> S``, ``state S``, ``state P { ... }`` and
  ``A --> B : event [guard] / action``; the machine owner is the name given
  after ``@startuml``;
* activity diagrams: ``|Lane|``, ``start``, ``stop``/``end``, ``:action;``,
  ``if/elseif/else/endif`` and ``fork/fork again/end fork``.

Anything else (notes, skinparam, titles...) is skipped with a warning.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

from . import model as m
from .errors import ModelMergeError, ParseError


class DiagramKind(str, Enum):
    CLASS = "class_diagram"
    STATE = "state_diagram"
    ACTIVITY = "activity_diagram"


@dataclass(frozen=True, order=True)
class ParseDiagnostic:
    path: str
    line: int
    column: int
    severity: str = field(compare=False)
    message: str = field(compare=False)
    reason: str = field(default="syntax", compare=False)

    def __str__(self):
        return f"{self.path}:{self.line}:{self.column}: {self.severity}: {self.message} [{self.reason}]"


_NAME = r'(?:"[^"]+"|[A-Za-z_][A-Za-z0-9_]*(?:-[A-Za-z0-9_]+)*)'

_CLASS_RE = re.compile(rf"^(?:abstract\s+)?class\s+({_NAME})\s*(<<\s*(\w+)\s*>>)?\s*(\{{)?\s*(.*?)\s*$")
_REL_RE = re.compile(
    rf'^({_NAME})\s*(?:"([^"]*)")?\s*(<\|-+|-+\|>|\*-+|-+\*|o-+|-+o|-+>|-+)\s*(?:"([^"]*)")?\s*({_NAME})\s*(?::\s*(.*))?$'
)
_MEMBER_RE = re.compile(r"^([+\-#~])?\s*(.+)$")
_OP_RE = re.compile(r"^([A-Za-z_][\w-]*)\s*\((.*)\)\s*(?::\s*(.+))?$")
_ATTR_RE = re.compile(r"^([A-Za-z_][\w-]*)\s*(?::\s*(.+))?$")

_STATE_RE = re.compile(rf"^state\s+({_NAME})\s*(\{{)?\s*$")
_ARROW = r"-+(?:\w+-+)?>"
_TRANS_RE = re.compile(rf"^(\[\*\]|{_NAME})\s*{_ARROW}\s*(\[\*\]|{_NAME})\s*(?::\s*(.*))?$")
_LABEL_RE = re.compile(r"^(?P<event>[^\[/]*?)\s*(?:\[(?P<guard>[^\]]*)\])?\s*(?:/\s*(?P<action>.*))?$")

_IGNORED_PREFIXES = (
    "skinparam", "title", "hide", "show", "left to right", "top to bottom", "legend", "caption",
    "header", "footer", "scale", "!", "package", "namespace", "together", "set ", "allowmixing",
)

_VIS = {"+": m.Visibility.PUBLIC, "-": m.Visibility.PRIVATE, "#": m.Visibility.PROTECTED}


@dataclass(frozen=True)
class SourceUnit:
    path: str
    kind: DiagramKind
    text: str

    @classmethod
    def from_text(cls, text: str, path: str = "<text>", kind: Optional[DiagramKind] = None) -> "SourceUnit":
        text = normalize(text)
        detected = detect_kind(text)
        if kind is not None and detected is not None and detected is not kind:
            raise ParseError(
                f"{path}: declared {kind.value} but content looks like {detected.value}", "kind-mismatch", path
            )
        resolved = kind or detected
        if resolved is None:
            if not text.strip():
                raise ParseError(f"{path}: empty input", "empty-input", path)
            raise ParseError(f"{path}: cannot detect diagram kind", "unknown-kind", path)
        return cls(path, resolved, text)

    @classmethod
    def from_path(cls, path, kind: Optional[DiagramKind] = None) -> "SourceUnit":
        raw = Path(path).read_bytes()
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"{path}: not valid UTF-8 ({exc.reason})", "encoding", str(path)) from None
        return cls.from_text(text, str(path), kind)


def normalize(text: str) -> str:
    text = text.replace("\r\n", "\n").replace("\r", "\n")
    return text[1:] if text.startswith("\ufeff") else text


def _content_lines(text: str):
    """Yield ``(lineno, column, stripped)`` for lines that carry diagram content."""
    for i, raw in enumerate(normalize(text).split("\n"), start=1):
        s = raw.strip()
        if not s or s.startswith("'"):
            continue
        col = len(raw) - len(raw.lstrip()) + 1
        yield i, col, s


def detect_kind(text: str) -> Optional[DiagramKind]:
    lines = [s for _, _, s in _content_lines(text) if not s.startswith("@")]
    if any(_CLASS_RE.match(s) or re.search(r"<\|-|\*--|o--", s) for s in lines):
        return DiagramKind.CLASS
    if any("[*]" in s or s.startswith("state ") for s in lines):
        return DiagramKind.STATE
    if any(s in ("start", "stop") or (s.startswith(":") and s.endswith(";")) or re.match(r"^\|.+\|$", s) for s in lines):
        return DiagramKind.ACTIVITY
    return None


def _unquote(name: str) -> str:
    return name[1:-1] if len(name) >= 2 and name[0] == '"' and name[-1] == '"' else name


def _diagram_name(text: str) -> Optional[str]:
    for _, _, s in _content_lines(text):
        if s.startswith("@startuml"):
            rest = s[len("@startuml"):].strip()
            return _unquote(rest) if rest else None
    return None


class _Diags:
    def __init__(self, path: str):
        self.path = path
        self.items: list[ParseDiagnostic] = []

    def error(self, line, col, msg, reason="syntax"):
        self.items.append(ParseDiagnostic(self.path, line, col, "error", msg, reason))

    def warn(self, line, col, msg, reason="unsupported-construct"):
        self.items.append(ParseDiagnostic(self.path, line, col, "warning", msg, reason))

    def sorted(self):
        return sorted(self.items)


def _require_text(unit: SourceUnit):
    if not unit.text.strip():
        raise ParseError(f"{unit.path}: empty input", "empty-input", unit.path)


def _is_ignorable(s: str) -> bool:
    return s.startswith(_IGNORED_PREFIXES)


# -- class diagrams -----------------------------------------------------------


def _parse_member(text: str, line: int, col: int, diags: _Diags):
    mm = _MEMBER_RE.match(text)
    marker, body = mm.group(1), mm.group(2).strip()
    if marker == "~":
        diags.warn(line, col, "package visibility treated as public", "visibility")
    vis = _VIS.get(marker or "+", m.Visibility.PUBLIC)
    op = _OP_RE.match(body)
    if op:
        params = []
        for p in filter(None, (x.strip() for x in op.group(2).split(","))):
            pname, _, ptype = p.partition(":")
            params.append((pname.strip(), ptype.strip() or "any"))
        return m.OperationSig(op.group(1), tuple(params), (op.group(3) or "void").strip())
    at = _ATTR_RE.match(body)
    if at:
        return m.AttributeDef(at.group(1), (at.group(2) or "string").strip(), vis)
    diags.error(line, col, f"cannot parse class member {text!r}", "bad-member")
    return None


def parse_class_diagram(unit: SourceUnit) -> tuple[m.UmlModel, list[ParseDiagnostic]]:
    """Classes, members and relationships of a class diagram."""
    _require_text(unit)
    if unit.kind is not DiagramKind.CLASS:
        raise ParseError(f"{unit.path}: not a class diagram", "kind-mismatch", unit.path)
    diags = _Diags(unit.path)
    classes: dict[str, dict] = {}
    order: list[str] = []
    rels: list[m.Relationship] = []
    current: Optional[list] = None
    in_note = False

    def declare(name, stereo, line, col):
        if name in classes:
            diags.error(line, col, f"class {name!r} declared twice", "duplicate-class")
            return []  # members of the duplicate are parsed but dropped
        classes[name] = {"stereotype": stereo, "members": []}
        order.append(name)
        return classes[name]["members"]

    def add_members(sink, text, line, col):
        for part in filter(None, (x.strip() for x in text.split(";"))):
            member = _parse_member(part, line, col, diags)
            if member is not None:
                sink.append(member)

    for line, col, s in _content_lines(unit.text):
        if in_note:
            if s.startswith("end note"):
                in_note = False
            continue
        if s.startswith("@"):
            continue
        if current is not None:
            if s.endswith("}"):
                add_members(current, s[:-1], line, col)
                current = None
            else:
                add_members(current, s, line, col)
            continue
        cm = _CLASS_RE.match(s)
        if cm:
            name = _unquote(cm.group(1))
            stereo = m.Stereotype.AGENT if (cm.group(3) or "").lower() == "agent" else m.Stereotype.PLAIN
            if cm.group(3) and stereo is m.Stereotype.PLAIN:
                diags.warn(line, col, f"stereotype <<{cm.group(3)}>> treated as plain", "stereotype")
            sink = declare(name, stereo, line, col)
            rest = cm.group(5)
            if cm.group(4):
                if rest.endswith("}"):
                    add_members(sink, rest[:-1], line, col)
                else:
                    add_members(sink, rest, line, col)
                    current = sink
            elif rest:
                diags.error(line, col, f"unexpected text after class header: {rest!r}")
            continue
        rm = _REL_RE.match(s)
        if rm:
            rel = _relationship(rm, line, col, diags)
            if rel is not None:
                rels.append(rel)
            continue
        if s.startswith("note"):
            diags.warn(line, col, "note ignored")
            in_note = ":" not in s
            continue
        if _is_ignorable(s):
            diags.warn(line, col, f"ignored: {s.split()[0]}")
            continue
        diags.error(line, col, f"unparseable line: {s!r}")

    if current is not None:
        diags.error(len(unit.text.split("\n")), 1, "class body not closed", "unbalanced-block")

    out = []
    for name in order:
        info = classes[name]
        attrs = tuple(x for x in info["members"] if isinstance(x, m.AttributeDef))
        ops = tuple(x for x in info["members"] if isinstance(x, m.OperationSig))
        out.append(m.ClassDef(name, info["stereotype"], attrs, ops))
    return m.UmlModel(tuple(out), tuple(rels)), diags.sorted()


def _mult(text, line, col, diags):
    if text is None:
        return m.Multiplicity(1, 1)
    try:
        return m.Multiplicity.parse(text)
    except ValueError:
        diags.error(line, col, f"bad multiplicity {text!r}", "bad-multiplicity")
        return m.Multiplicity(1, 1)


def _relationship(rm, line, col, diags) -> Optional[m.Relationship]:
    left, lmult, arrow, rmult, right, label = rm.groups()
    left, right = _unquote(left), _unquote(right)
    lm, rmm = _mult(lmult, line, col, diags), _mult(rmult, line, col, diags)
    role = label.strip() if label else None
    K = m.RelationKind
    if arrow.startswith("<|"):
        return m.Relationship(K.INHERITANCE, right, left, rmm, lm, role)
    if arrow.endswith("|>"):
        return m.Relationship(K.INHERITANCE, left, right, lm, rmm, role)
    if arrow.startswith("*"):
        return m.Relationship(K.COMPOSITION, left, right, lm, rmm, role)
    if arrow.endswith("*"):
        return m.Relationship(K.COMPOSITION, right, left, rmm, lm, role)
    if arrow.startswith("o"):
        return m.Relationship(K.AGGREGATION, left, right, lm, rmm, role)
    if arrow.endswith("o"):
        return m.Relationship(K.AGGREGATION, right, left, rmm, lm, role)
    return m.Relationship(K.ASSOCIATION, left, right, lm, rmm, role)


# -- state diagrams -----------------------------------------------------------


def parse_state_diagram(unit: SourceUnit, owner: Optional[str] = None) -> tuple[m.StateMachine, list[ParseDiagnostic]]:
    """State machine of one class; the owner defaults to the ``@startuml`` name."""
    _require_text(unit)
    if unit.kind is not DiagramKind.STATE:
        raise ParseError(f"{unit.path}: not a state diagram", "kind-mismatch", unit.path)
    diags = _Diags(unit.path)
    owner = owner or _diagram_name(unit.text) or Path(unit.path).stem
    states: dict[str, dict] = {}
    order: list[str] = []
    transitions: list[m.Transition] = []
    stack: list[str] = []
    initial: Optional[str] = None

    def declare(name, line, col):
        parent = stack[-1] if stack else None
        if name in states:
            if states[name]["parent"] != parent:
                diags.error(line, col, f"state {name!r} redeclared under a different parent", "duplicate-state")
            return
        states[name] = {"parent": parent, "entry": None}
        order.append(name)

    for line, col, s in _content_lines(unit.text):
        if s.startswith("@"):
            continue
        if s == "}":
            if not stack:
                diags.error(line, col, "'}' without open state block", "unbalanced-block")
            else:
                stack.pop()
            continue
        sm_ = _STATE_RE.match(s)
        if sm_:
            name = _unquote(sm_.group(1))
            declare(name, line, col)
            if sm_.group(2):
                stack.append(name)
            continue
        tm = _TRANS_RE.match(s)
        if tm:
            src, dst, label = tm.group(1), tm.group(2), tm.group(3)
            if dst == "[*]":
                diags.warn(line, col, "final pseudo-state ignored", "final-state")
                continue
            dst = _unquote(dst)
            if src == "[*]":
                if stack:
                    if states[stack[-1]]["entry"] is not None:
                        diags.error(line, col, f"second entry for {stack[-1]!r}", "duplicate-initial")
                    states[stack[-1]]["entry"] = dst
                elif initial is not None:
                    diags.error(line, col, "second top-level initial transition", "duplicate-initial")
                else:
                    initial = dst
                continue
            trigger, guard, action = "", None, None
            if label:
                lm = _LABEL_RE.match(label.strip())
                trigger = lm.group("event").strip()
                guard = lm.group("guard").strip() if lm.group("guard") is not None else None
                action = lm.group("action").strip() if lm.group("action") else None
            transitions.append(m.Transition(_unquote(src), dst, trigger, guard, action))
            continue
        if s.startswith("note"):
            diags.warn(line, col, "note ignored")
            continue
        if _is_ignorable(s):
            diags.warn(line, col, f"ignored: {s.split()[0]}")
            continue
        diags.error(line, col, f"unparseable line: {s!r}")

    if stack:
        diags.error(len(unit.text.split("\n")), 1, f"state block {stack[-1]!r} not closed", "unbalanced-block")
    if initial is None:
        raise ParseError(f"{unit.path}: no top-level '[*] --> State' line", "missing-initial-state", unit.path)
    sdefs = tuple(m.StateDef(n, states[n]["parent"], states[n]["entry"]) for n in order)
    return m.StateMachine(owner, sdefs, initial, tuple(transitions)), diags.sorted()


# -- activity diagrams --------------------------------------------------------


class _Block:
    def __init__(self, kind, node_id, line, tails, lane):
        self.kind = kind  # "if" | "fork"
        self.node_id = node_id
        self.line = line
        self.lane = lane
        self.branch_tails: list[list[tuple[str, Optional[str]]]] = []
        self.has_else = False
        self.else_guard: Optional[str] = None
        self.entry_tails = tails


_IF_RE = re.compile(r"^if\s*\((.*)\)\s*(?:then\s*(?:\((.*)\))?)?\s*$")
_ELSEIF_RE = re.compile(r"^else\s*if\s*\((.*)\)\s*(?:then\s*(?:\((.*)\))?)?\s*$")
_ELSE_RE = re.compile(r"^else\s*(?:\((.*)\))?\s*$")
_LANE_RE = re.compile(r"^\|(?:#[^|]*\|)?([^|]+)\|$")


def parse_activity_diagram(unit: SourceUnit) -> tuple[m.ActivityFlow, list[ParseDiagnostic]]:
    """Activity nodes and edges; edges follow text order and branch structure."""
    _require_text(unit)
    if unit.kind is not DiagramKind.ACTIVITY:
        raise ParseError(f"{unit.path}: not an activity diagram", "kind-mismatch", unit.path)
    diags = _Diags(unit.path)
    nodes: list[m.ActivityNode] = []
    edges: list[m.ActivityEdge] = []
    tails: list[tuple[str, Optional[str]]] = []
    stack: list[_Block] = []
    lane = ""
    pending_label: Optional[list] = None

    def new_node(kind, label=""):
        nid = f"n{len(nodes) + 1}"
        nodes.append(m.ActivityNode(nid, kind, lane, label))
        for src, guard in tails:
            edges.append(m.ActivityEdge(src, nid, guard))
        return nid

    for line, col, s in _content_lines(unit.text):
        if pending_label is not None:
            pending_label[0] += " " + s
            if s.endswith(";"):
                tails = [(new_node(m.NodeKind.ACTION, pending_label[0][1:-1].strip()), None)]
                pending_label = None
            continue
        if s.startswith("@"):
            continue
        lm = _LANE_RE.match(s)
        if lm:
            lane = lm.group(1).strip()
            continue
        if s == "start":
            tails = [(new_node(m.NodeKind.START), None)]
            continue
        if s in ("stop", "end", "kill", "detach"):
            new_node(m.NodeKind.END)
            tails = []
            continue
        if s.startswith(":"):
            if s.endswith(";"):
                tails = [(new_node(m.NodeKind.ACTION, s[1:-1].strip()), None)]
            else:
                pending_label = [s]
            continue
        im = _IF_RE.match(s)
        if im:
            cond, then_label = im.group(1).strip(), im.group(2)
            nid = new_node(m.NodeKind.DECISION, cond)
            stack.append(_Block("if", nid, line, tails, lane))
            tails = [(nid, (then_label or cond).strip())]
            continue
        eim = _ELSEIF_RE.match(s)
        if eim:
            top = stack[-1] if stack else None
            if top is None or top.kind != "if" or top.has_else:
                diags.error(line, col, "'elseif' outside an if block", "unbalanced-block")
                continue
            top.branch_tails.append(tails)
            cond = eim.group(1).strip()
            # chained condition: a fresh decision hanging off the previous one's false edge
            tails = [(top.node_id, "else")]
            nid = new_node(m.NodeKind.DECISION, cond)
            top.node_id = nid
            tails = [(nid, (eim.group(2) or cond).strip())]
            continue
        em = _ELSE_RE.match(s)
        if em and s != "end":
            top = stack[-1] if stack else None
            if top is None or top.kind != "if" or top.has_else:
                diags.error(line, col, "'else' outside an if block", "unbalanced-block")
                continue
            top.branch_tails.append(tails)
            top.has_else = True
            tails = [(top.node_id, (em.group(1) or "else").strip())]
            continue
        if s in ("endif", "end if"):
            if not stack or stack[-1].kind != "if":
                raise ParseError(f"{unit.path}:{line}: 'endif' without 'if'", "unbalanced-block", unit.path, line)
            top = stack.pop()
            top.branch_tails.append(tails)
            merged = [t for branch in top.branch_tails for t in branch]
            if not top.has_else:
                merged.append((top.node_id, "else"))
            tails = merged
            continue
        if s == "fork":
            nid = new_node(m.NodeKind.FORK)
            stack.append(_Block("fork", nid, line, tails, lane))
            tails = [(nid, None)]
            continue
        if s == "fork again":
            if not stack or stack[-1].kind != "fork":
                raise ParseError(f"{unit.path}:{line}: 'fork again' without 'fork'", "unbalanced-block", unit.path, line)
            stack[-1].branch_tails.append(tails)
            tails = [(stack[-1].node_id, None)]
            continue
        if s in ("end fork", "endfork", "end merge"):
            if not stack or stack[-1].kind != "fork":
                raise ParseError(f"{unit.path}:{line}: 'end fork' without 'fork'", "unbalanced-block", unit.path, line)
            top = stack.pop()
            top.branch_tails.append(tails)
            tails = [t for branch in top.branch_tails for t in branch]
            lane = top.lane
            tails = [(new_node(m.NodeKind.JOIN), None)]
            continue
        if s.startswith("note"):
            diags.warn(line, col, "note ignored")
            continue
        if _is_ignorable(s):
            diags.warn(line, col, f"ignored: {s.split()[0]}")
            continue
        diags.error(line, col, f"unparseable line: {s!r}")

    if pending_label is not None:
        diags.error(len(unit.text.split("\n")), 1, "action label not terminated with ';'", "syntax")
    if stack:
        top = stack[-1]
        raise ParseError(
            f"{unit.path}:{top.line}: '{top.kind}' block never closed", "unbalanced-block", unit.path, top.line
        )
    return m.ActivityFlow(tuple(nodes), tuple(edges)), diags.sorted()


# -- loading ------------------------------------------------------------------


def parse_unit(unit: SourceUnit) -> tuple[m.UmlModel, list[ParseDiagnostic]]:
    """Parse any unit into a partial model."""
    if unit.kind is DiagramKind.CLASS:
        return parse_class_diagram(unit)
    if unit.kind is DiagramKind.STATE:
        sm, diags = parse_state_diagram(unit)
        return m.UmlModel(state_machines=(sm,)), diags
    flow, diags = parse_activity_diagram(unit)
    return m.UmlModel(activity=flow), diags


def _dedupe(items, key, what, paths):
    out, seen = [], {}
    for item in items:
        k = key(item)
        if k in seen:
            if seen[k] != item:
                raise ModelMergeError(f"conflicting definitions of {what} {k!r} across {', '.join(paths)}")
            continue
        seen[k] = item
        out.append(item)
    return out


def load_model(paths: Sequence) -> tuple[m.UmlModel, list[ParseDiagnostic]]:
    """Parse and merge model files, then append structural defects as diagnostics.

    Identical repeated definitions merge idempotently; a class or activity
    defined differently in two files raises ``ModelMergeError``.
    """
    if not paths:
        raise ValueError("load_model needs at least one path")
    return load_units([SourceUnit.from_path(p) for p in paths])


def load_units(units: Sequence[SourceUnit]) -> tuple[m.UmlModel, list[ParseDiagnostic]]:
    """``load_model`` over already-read sources."""
    if not units:
        raise ValueError("load_units needs at least one unit")
    parts: list[m.UmlModel] = []
    diags: list[ParseDiagnostic] = []
    for unit in units:
        part, d = parse_unit(unit)
        parts.append(part)
        diags.extend(d)
    names = [u.path for u in units]
    classes = _dedupe([c for p in parts for c in p.classes], lambda c: c.name, "class", names)
    rels = _dedupe([r for p in parts for r in p.relationships], lambda r: r, "relationship", names)
    machines = _dedupe([sm for p in parts for sm in p.state_machines], lambda sm: sm, "state machine", names)
    activities = _dedupe([p.activity for p in parts if p.activity is not None], lambda a: "activity", "", names)
    merged = m.UmlModel(tuple(classes), tuple(rels), tuple(machines), activities[0] if activities else None)
    for defect in m.validate_model(merged):
        diags.append(ParseDiagnostic("<model>", 1, 1, "error", f"{defect.location}: {defect.message}", defect.reason))
    return merged, sorted(diags)


def has_errors(diags) -> bool:
    return any(d.severity == "error" for d in diags)
