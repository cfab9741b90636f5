"""Control-flow graphs, cyclomatic complexity and risk tiers.

M = E - N + 2P, where P counts connected components of the undirected
skeleton. Graphs come either from ``.cfg.json`` documents::

    {"units": [{"name": "Operator", "nodes": ["a", "b"], "edges": [["a", "b"]], "entries": ["a"]}]}

or from structured source code read through a language profile. Source
extraction makes one node per statement; branch tails flow straight into the
next statement (no merge nodes). Methods are stitched between a virtual
class-entry and class-exit node, so every class is one component.
"""
from __future__ import annotations

import ast
import json
import logging
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, NamedTuple, Optional

from .errors import EmptyGraphError, GraphSchemaError, SourceParseError, UnsupportedDialectError

log = logging.getLogger(__name__)

CASE_STUDY_ORDER = ("Operator", "MCC", "UVF-Manager", "UV")


# -- graphs ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ControlFlowGraph:
    unit: str
    nodes: tuple[str, ...]
    edges: tuple[tuple[str, str], ...]
    entries: tuple[str, ...] = ()
    decisions: Optional[int] = field(default=None, compare=False)

    def __post_init__(self):
        known = set(self.nodes)
        if len(known) != len(self.nodes):
            raise GraphSchemaError(f"unit {self.unit!r}: duplicate node ids")
        for a, b in self.edges:
            if a not in known or b not in known:
                missing = a if a not in known else b
                raise GraphSchemaError(f"unit {self.unit!r}: edge ({a}, {b}) references missing node {missing!r}")
        for e in self.entries:
            if e not in known:
                raise GraphSchemaError(f"unit {self.unit!r}: entry {e!r} is not a node")

    @classmethod
    def build(cls, unit: str, nodes: Iterable[str], edges: Iterable[tuple[str, str]], entries=(), decisions=None):
        """Collapse repeated edges (with a warning) and construct the graph."""
        seen, kept = set(), []
        for e in edges:
            e = (str(e[0]), str(e[1]))
            if e in seen:
                log.warning("unit %s: collapsing duplicate edge %s -> %s", unit, *e)
                continue
            seen.add(e)
            kept.append(e)
        return cls(unit, tuple(str(n) for n in nodes), tuple(kept), tuple(entries), decisions)


def components(cfg: ControlFlowGraph) -> list[list[str]]:
    """Connected components of the undirected skeleton (union-find)."""
    parent = {n: n for n in cfg.nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in cfg.edges:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[rb] = ra
    groups: dict[str, list[str]] = {}
    for n in cfg.nodes:
        groups.setdefault(find(n), []).append(n)
    return list(groups.values())


class Cyclomatic(NamedTuple):
    E: int
    N: int
    P: int
    M: int


def cyclomatic(cfg: ControlFlowGraph) -> Cyclomatic:
    if not cfg.nodes:
        raise EmptyGraphError(f"unit {cfg.unit!r} has no nodes")
    e, n, p = len(cfg.edges), len(cfg.nodes), len(components(cfg))
    return Cyclomatic(e, n, p, e - n + 2 * p)


class RiskTier(str, Enum):
    LOW = "low"
    MODERATE = "moderate"
    HIGH = "high"
    SEVERE = "severe"

    @property
    def rank(self) -> int:
        return list(RiskTier).index(self)


def classify(m: int) -> RiskTier:
    if m < 1:
        raise ValueError(f"cyclomatic complexity must be >= 1, got {m}")
    if m <= 10:
        return RiskTier.LOW
    if m <= 20:
        return RiskTier.MODERATE
    if m <= 50:
        return RiskTier.HIGH
    return RiskTier.SEVERE


# -- graph documents -----------------------------------------------------------------


def _ident(value, where: str) -> str:
    if isinstance(value, bool) or not isinstance(value, (str, int)):
        raise GraphSchemaError(f"node id must be a string or integer, got {type(value).__name__}", where)
    return str(value)


def cfgs_from_document(doc) -> list[ControlFlowGraph]:
    if not isinstance(doc, dict):
        raise GraphSchemaError("document must be an object", "$")
    units = doc.get("units")
    if not isinstance(units, list) or not units:
        raise GraphSchemaError("'units' must be a non-empty list", "$.units")
    out = []
    for i, u in enumerate(units):
        where = f"$.units[{i}]"
        if not isinstance(u, dict):
            raise GraphSchemaError("unit must be an object", where)
        name = u.get("name")
        if not isinstance(name, str) or not name:
            raise GraphSchemaError("unit needs a non-empty 'name'", f"{where}.name")
        nodes = u.get("nodes")
        if not isinstance(nodes, list) or not nodes:
            raise GraphSchemaError("'nodes' must be a non-empty list", f"{where}.nodes")
        ids = [_ident(n, f"{where}.nodes[{j}]") for j, n in enumerate(nodes)]
        if len(set(ids)) != len(ids):
            raise GraphSchemaError("duplicate node id", f"{where}.nodes")
        known = set(ids)
        edges = []
        raw_edges = u.get("edges", [])
        if not isinstance(raw_edges, list):
            raise GraphSchemaError("'edges' must be a list", f"{where}.edges")
        for j, e in enumerate(raw_edges):
            ew = f"{where}.edges[{j}]"
            if not isinstance(e, list) or len(e) != 2:
                raise GraphSchemaError("edge must be a [from, to] pair", ew)
            a, b = _ident(e[0], f"{ew}[0]"), _ident(e[1], f"{ew}[1]")
            for k, end in enumerate((a, b)):
                if end not in known:
                    raise GraphSchemaError(f"edge references missing node {end!r}", f"{ew}[{k}]")
            edges.append((a, b))
        entries = u.get("entries", [])
        if not isinstance(entries, list):
            raise GraphSchemaError("'entries' must be a list", f"{where}.entries")
        entry_ids = [_ident(x, f"{where}.entries[{j}]") for j, x in enumerate(entries)]
        for j, x in enumerate(entry_ids):
            if x not in known:
                raise GraphSchemaError(f"entry {x!r} is not a node", f"{where}.entries[{j}]")
        out.append(ControlFlowGraph.build(name, ids, edges, entry_ids))
    return out


def build_cfg_from_graphfile(path) -> list[ControlFlowGraph]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise GraphSchemaError(f"{path}: not JSON ({exc.msg} at line {exc.lineno})") from None
    return cfgs_from_document(doc)


def cfg_to_document(cfgs: Iterable[ControlFlowGraph]) -> dict:
    return {
        "units": [
            {"name": c.unit, "nodes": list(c.nodes), "edges": [list(e) for e in c.edges], "entries": list(c.entries)}
            for c in cfgs
        ]
    }


# -- structured code ---------------------------------------------------------------
#
# Both profiles lower source into the same small statement tree, then a single
# builder turns that tree into a graph.


@dataclass
class Stmt:
    kind: str  # simple | return | break | continue | if | loop | switch | try
    line: int
    label: str = ""
    cond_extra: int = 0  # short-circuit operands beyond the first (when counted)
    body: list = field(default_factory=list)
    orelse: list = field(default_factory=list)
    arms: list = field(default_factory=list)  # switch: list of (labels, body); try: handler bodies
    has_default: bool = False
    finalbody: list = field(default_factory=list)
    test_last: bool = False  # do/while


@dataclass
class Method:
    name: str
    line: int
    end_line: int
    body: list


@dataclass
class ClassUnit:
    name: str
    line: int
    methods: list


class _Builder:
    def __init__(self, prefix: str):
        self.prefix = prefix
        self.nodes: list[str] = []
        self.edges: list[tuple[str, str]] = []
        self.count = 0

    def node(self, label: str) -> str:
        self.count += 1
        nid = f"{self.prefix}#{self.count}:{label}"
        self.nodes.append(nid)
        return nid

    def link(self, tails: Iterable[str], target: str):
        for t in tails:
            self.edges.append((t, target))

    def block(self, stmts, tails, loop=None, exit_node=None):
        """Wire ``stmts`` after ``tails``; returns the dangling tails."""
        for s in stmts:
            tails = self.stmt(s, tails, loop, exit_node)
        return tails

    def cond(self, s: Stmt, tails, label):
        head = self.node(f"{label}@{s.line}")
        self.link(tails, head)
        last = head
        shortcut = []
        for k in range(s.cond_extra):
            nxt = self.node(f"{label}-operand{k + 2}@{s.line}")
            self.link([last], nxt)
            shortcut.append(last)
            last = nxt
        return head, last, shortcut

    def stmt(self, s: Stmt, tails, loop, exit_node):
        if s.kind == "simple":
            n = self.node(f"{s.label or 'stmt'}@{s.line}")
            self.link(tails, n)
            return [n]
        if s.kind in ("return", "raise"):
            n = self.node(f"{s.kind}@{s.line}")
            self.link(tails, n)
            self.link([n], exit_node)
            return []
        if s.kind in ("break", "continue"):
            n = self.node(f"{s.kind}@{s.line}")
            self.link(tails, n)
            if loop is None:
                raise SourceParseError(f"{s.kind} outside a loop or switch", line=s.line)
            loop[0 if s.kind == "continue" else 1].append(n)
            return []
        if s.kind == "if":
            _, last, shortcut = self.cond(s, tails, "if")
            then_tails = self.block(s.body, [last], loop, exit_node)
            if s.orelse:
                else_tails = self.block(s.orelse, [last] + shortcut, loop, exit_node)
            else:
                else_tails = [last] + shortcut
            return then_tails + else_tails
        if s.kind == "loop":
            continues: list[str] = []
            breaks: list[str] = []
            if s.test_last:
                entry = self.node(f"do@{s.line}")
                self.link(tails, entry)
                body_tails = self.block(s.body, [entry], (continues, breaks), exit_node)
                head, last, shortcut = self.cond(s, body_tails + continues, "while")
                self.link([last], entry)
                return [last] + shortcut + breaks
            head, last, shortcut = self.cond(s, tails, "loop")
            body_tails = self.block(s.body, [last], (continues, breaks), exit_node)
            self.link(body_tails + continues, head)
            done = [last] + shortcut
            if s.orelse:
                done = self.block(s.orelse, done, loop, exit_node)
            return done + breaks
        if s.kind == "switch":
            head = self.node(f"switch@{s.line}")
            self.link(tails, head)
            breaks: list[str] = []
            fall: list[str] = []
            for labels, body in s.arms:
                first = None
                for lab, lab_line in labels:
                    ln = self.node(f"{lab}@{lab_line}")
                    self.link([head], ln)
                    self.link(fall, ln)
                    fall = [ln]
                    first = first or ln
                fall = self.block(body, fall, (loop[0] if loop else [], breaks), exit_node)
            done = fall + breaks
            if not s.has_default:
                done.append(head)
            return done
        if s.kind == "try":
            head = self.node(f"try@{s.line}")
            self.link(tails, head)
            out = self.block(s.body, [head], loop, exit_node)
            out = self.block(s.orelse, out, loop, exit_node)
            for handler_line, body in s.arms:
                hn = self.node(f"handler@{handler_line}")
                self.link([head], hn)
                out += self.block(body, [hn], loop, exit_node)
            if s.finalbody:
                out = self.block(s.finalbody, out, loop, exit_node)
            return out
        raise SourceParseError(f"unknown statement kind {s.kind!r}", line=s.line)


def _count_decisions(stmts) -> int:
    """Decision points counted from the statement tree alone."""
    total = 0
    for s in stmts:
        if s.kind in ("if", "loop"):
            total += 1 + s.cond_extra
        elif s.kind == "switch":
            total += sum(len(labels) for labels, _ in s.arms) - (1 if s.has_default else 0)
        elif s.kind == "try":
            total += len(s.arms)
        total += _count_decisions(s.body) + _count_decisions(s.orelse) + _count_decisions(s.finalbody)
        if s.kind == "switch":
            total += sum(_count_decisions(body) for _, body in s.arms)
        elif s.kind == "try":
            total += sum(_count_decisions(body) for _, body in s.arms)
    return total


def method_graph(b: _Builder, m: Method) -> tuple[str, str]:
    entry = b.node(f"{m.name}:entry@{m.line}")
    exit_node = b.node(f"{m.name}:exit")
    tails = b.block(m.body, [entry], None, exit_node)
    b.link(tails, exit_node)
    return entry, exit_node


def class_graph(unit: ClassUnit, profile: "LanguageProfile", lexical_decisions: Optional[int] = None) -> ControlFlowGraph:
    b = _Builder(unit.name)
    if len(unit.methods) == 1:
        entry, _ = method_graph(b, unit.methods[0])
        entries = [entry]
    else:
        c_in, c_out = b.node("class-entry"), b.node("class-exit")
        entries = [c_in]
        if not unit.methods:
            b.link([c_in], c_out)
        for m in unit.methods:
            m_in, m_out = method_graph(b, m)
            b.link([c_in], m_in)
            b.link([m_out], c_out)
    decisions = sum(_count_decisions(m.body) for m in unit.methods) + max(0, len(unit.methods) - 1)
    if lexical_decisions is not None:
        expected = lexical_decisions + max(0, len(unit.methods) - 1)
        if expected != decisions:
            raise SourceParseError(
                f"class {unit.name}: {lexical_decisions} branch keywords but {decisions} modeled decisions", line=unit.line
            )
    cfg = ControlFlowGraph.build(unit.name, b.nodes, b.edges, entries, decisions)
    res = cyclomatic(cfg)
    if res.M != decisions + 1 or res.P != 1:
        raise SourceParseError(
            f"class {unit.name}: graph M={res.M}, P={res.P} but decision count + 1 = {decisions + 1}", line=unit.line
        )
    return cfg


# -- language profiles -------------------------------------------------------------


@dataclass(frozen=True)
class LanguageProfile:
    name: str
    extensions: tuple[str, ...]
    branch_keywords: tuple[str, ...]
    block_style: str  # indent | brace
    count_boolean_ops: bool = False

    def read(self, source: str, path: str = "<source>") -> list[ClassUnit]:
        reader = _read_python if self.block_style == "indent" else _read_brace
        return reader(source, path, self)


PROFILES = {
    "pyagent": LanguageProfile("pyagent", (".py",), ("if", "elif", "while", "for", "case", "except"), "indent"),
    "brace": LanguageProfile(
        "brace", (".java", ".js", ".ts", ".c", ".cc", ".cpp", ".cs", ".go", ".kt", ".x"),
        ("if", "while", "for", "case", "catch"), "brace",
    ),
}


def get_profile(name: str, count_boolean_ops: bool = False) -> LanguageProfile:
    try:
        prof = PROFILES[name]
    except KeyError:
        raise UnsupportedDialectError(f"no language profile {name!r} (known: {', '.join(sorted(PROFILES))})") from None
    if count_boolean_ops != prof.count_boolean_ops:
        prof = replace(prof, count_boolean_ops=count_boolean_ops)
    return prof


def profile_for_path(path: str) -> Optional[LanguageProfile]:
    suffix = Path(path).suffix.lower()
    return next((p for p in PROFILES.values() if suffix in p.extensions), None)


# python (indent) reader, on top of the stdlib parser


def _bool_extra(test, profile) -> int:
    if not profile.count_boolean_ops:
        return 0
    return sum(len(n.values) - 1 for n in ast.walk(test) if isinstance(n, ast.BoolOp))


def _irrefutable(case) -> bool:
    pat = case.pattern
    return case.guard is None and isinstance(pat, ast.MatchAs) and pat.pattern is None


def _lower_py(stmts, profile) -> list[Stmt]:
    out = []
    for s in stmts:
        line = s.lineno
        if isinstance(s, ast.If):
            out.append(Stmt("if", line, cond_extra=_bool_extra(s.test, profile),
                            body=_lower_py(s.body, profile), orelse=_lower_py(s.orelse, profile)))
        elif isinstance(s, (ast.For, ast.AsyncFor, ast.While)):
            extra = _bool_extra(s.test, profile) if isinstance(s, ast.While) else 0
            out.append(Stmt("loop", line, cond_extra=extra,
                            body=_lower_py(s.body, profile), orelse=_lower_py(s.orelse, profile)))
        elif isinstance(s, ast.Match):
            arms = [([("case", c.pattern.lineno)], _lower_py(c.body, profile)) for c in s.cases]
            default = bool(s.cases) and _irrefutable(s.cases[-1])
            out.append(Stmt("switch", line, arms=arms, has_default=default))
        elif isinstance(s, ast.Try) or type(s).__name__ == "TryStar":
            arms = [(h.lineno, _lower_py(h.body, profile)) for h in s.handlers]
            out.append(Stmt("try", line, body=_lower_py(s.body, profile), orelse=_lower_py(s.orelse, profile),
                            arms=arms, finalbody=_lower_py(s.finalbody, profile)))
        elif isinstance(s, (ast.With, ast.AsyncWith)):
            out.append(Stmt("simple", line, label="with"))
            out.extend(_lower_py(s.body, profile))
        elif isinstance(s, ast.Return):
            out.append(Stmt("return", line))
        elif isinstance(s, ast.Raise):
            out.append(Stmt("raise", line))
        elif isinstance(s, ast.Break):
            out.append(Stmt("break", line))
        elif isinstance(s, ast.Continue):
            out.append(Stmt("continue", line))
        else:
            out.append(Stmt("simple", line, label=type(s).__name__.lower()))
    return out


def _agent_name(node: ast.ClassDef) -> str:
    """A class may name its agent with ``AGENT = "UVF-Manager"``."""
    for s in node.body:
        if (
            isinstance(s, ast.Assign) and len(s.targets) == 1 and isinstance(s.targets[0], ast.Name)
            and s.targets[0].id == "AGENT" and isinstance(s.value, ast.Constant) and isinstance(s.value.value, str)
        ):
            return s.value.value
    return node.name


def _parse_python(source: str, path: str) -> ast.Module:
    try:
        return ast.parse(source, filename=path)
    except SyntaxError as exc:
        raise SourceParseError(f"{exc.msg}", path=path, line=exc.lineno or 1) from None


def _read_python(source: str, path: str, profile: LanguageProfile) -> list[ClassUnit]:
    tree = _parse_python(source, path)
    units = []
    loose = []
    for node in tree.body:
        if isinstance(node, ast.ClassDef):
            methods = [
                Method(f.name, f.lineno, f.end_lineno, _lower_py(f.body, profile))
                for f in node.body if isinstance(f, (ast.FunctionDef, ast.AsyncFunctionDef))
            ]
            units.append(ClassUnit(_agent_name(node), node.lineno, methods))
        elif isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)):
            loose.append(Method(node.name, node.lineno, node.end_lineno, _lower_py(node.body, profile)))
    if loose:
        units.append(ClassUnit(Path(path).stem, loose[0].line, loose))
    return units


def _python_keyword_decisions(source: str, path: str, profile: LanguageProfile) -> dict[str, int]:
    """Per-unit decision keywords counted straight off the syntax tree nodes."""
    tree = _parse_python(source, path)
    kinds = (ast.If, ast.For, ast.AsyncFor, ast.While, ast.ExceptHandler)

    def count(fn) -> int:
        total = 0
        stack = list(ast.iter_child_nodes(fn))
        while stack:
            n = stack.pop()
            if isinstance(n, (ast.FunctionDef, ast.AsyncFunctionDef, ast.Lambda, ast.ClassDef)):
                continue  # nested definitions are single statements
            if isinstance(n, kinds):
                total += 1
            elif isinstance(n, ast.Match):
                total += len(n.cases) - (1 if n.cases and _irrefutable(n.cases[-1]) else 0)
            if profile.count_boolean_ops and isinstance(n, (ast.If, ast.While)):
                total += sum(len(b.values) - 1 for b in ast.walk(n.test) if isinstance(b, ast.BoolOp))
            stack.extend(ast.iter_child_nodes(n))
        return total

    out: dict[str, int] = {}
    loose = 0
    for node in tree.body:
        if isinstance(node, ast.ClassDef):
            out[_agent_name(node)] = sum(
                count(f) for f in node.body if isinstance(f, (ast.FunctionDef, ast.AsyncFunctionDef))
            )
        elif isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)):
            loose += count(node)
            out[Path(path).stem] = loose
    return out


# brace reader

_TOKEN_RE = re.compile(
    r"""(?P<ws>\s+)|(?P<comment>//[^\n]*|/\*.*?\*/)|(?P<str>"(?:\\.|[^"\\\n])*"|'(?:\\.|[^'\\\n])*')"""
    r"""|(?P<word>[A-Za-z_$][\w$]*)|(?P<num>\d[\w.]*)|(?P<op>&&|\|\||->|::|[{}()\[\];:,.<>=!+\-*/%&|^~?@])""",
    re.S,
)


class _Tok(NamedTuple):
    kind: str
    text: str
    line: int


def _brace_tokens(source: str, path: str) -> list[_Tok]:
    toks, pos, line = [], 0, 1
    while pos < len(source):
        mo = _TOKEN_RE.match(source, pos)
        if mo is None:
            raise SourceParseError(f"unexpected character {source[pos]!r}", path=path, line=line)
        kind, text = mo.lastgroup, mo.group()
        if kind not in ("ws", "comment"):
            toks.append(_Tok(kind, text, line))
        line += text.count("\n")
        pos = mo.end()
    return toks


class _BraceParser:
    def __init__(self, toks, path, profile):
        self.toks, self.i, self.path, self.profile = toks, 0, path, profile

    def fail(self, msg):
        line = self.toks[min(self.i, len(self.toks) - 1)].line if self.toks else 1
        raise SourceParseError(msg, path=self.path, line=line)

    def peek(self, k=0) -> Optional[_Tok]:
        j = self.i + k
        return self.toks[j] if j < len(self.toks) else None

    def at(self, text, k=0) -> bool:
        t = self.peek(k)
        return t is not None and t.text == text and t.kind in ("op", "word")

    def expect(self, text) -> _Tok:
        if not self.at(text):
            t = self.peek()
            self.fail(f"expected {text!r}, found {t.text if t else 'end of input'!r}")
        self.i += 1
        return self.toks[self.i - 1]

    def skip_balanced(self, open_, close) -> list[_Tok]:
        start = self.i
        self.expect(open_)
        depth = 1
        while depth:
            t = self.peek()
            if t is None:
                self.fail(f"unbalanced {open_!r}")
            if t.text == open_:
                depth += 1
            elif t.text == close:
                depth -= 1
            self.i += 1
        return self.toks[start + 1: self.i - 1]

    def bool_extra(self, toks) -> int:
        if not self.profile.count_boolean_ops:
            return 0
        return sum(1 for t in toks if t.text in ("&&", "||"))

    # top level

    def units(self) -> list[ClassUnit]:
        out = []
        while self.peek() is not None:
            if self.at("class") or self.at("interface") or self.at("enum"):
                out.append(self.class_decl())
            elif self.at("{"):
                self.skip_balanced("{", "}")
            else:
                self.i += 1
        return out

    def class_decl(self) -> ClassUnit:
        line = self.peek().line
        self.i += 1
        name = self.peek()
        if name is None or name.kind != "word":
            self.fail("class name expected")
        self.i += 1
        while not self.at("{"):
            if self.peek() is None:
                self.fail("class body expected")
            self.i += 1
        self.expect("{")
        methods = []
        member: list[_Tok] = []
        while not self.at("}"):
            t = self.peek()
            if t is None:
                self.fail(f"class {name.text} not closed")
            if t.text == ";":
                member = []
                self.i += 1
            elif t.text == "{":
                if member and member[-1].text == ")":
                    methods.append(self.method(member))
                elif member and member[-1].text in ("=", ",", "("):
                    self.skip_balanced("{", "}")  # initializer
                    continue
                else:
                    self.skip_balanced("{", "}")
                member = []
            elif t.text in ("class", "interface", "enum") and not member:
                self.class_decl()  # nested types are not separate units here
            else:
                member.append(t)
                self.i += 1
        self.expect("}")
        return ClassUnit(name.text, line, methods)

    def method(self, header: list[_Tok]) -> Method:
        depth, j = 0, len(header) - 1
        while j >= 0:
            if header[j].text == ")":
                depth += 1
            elif header[j].text == "(":
                depth -= 1
                if depth == 0:
                    break
            j -= 1
        name_tok = header[j - 1] if j > 0 else None
        if name_tok is None or name_tok.kind != "word":
            self.fail("method name expected")
        body = self.block()
        end_line = self.toks[self.i - 1].line
        return Method(name_tok.text, name_tok.line, end_line, body)

    # statements

    def block(self) -> list[Stmt]:
        self.expect("{")
        out = []
        while not self.at("}"):
            if self.peek() is None:
                self.fail("block not closed")
            out.extend(self.statement())
        self.expect("}")
        return out

    def body(self) -> list[Stmt]:
        return self.block() if self.at("{") else self.statement()

    def simple(self, label="stmt") -> Stmt:
        line = self.peek().line
        depth = 0
        while True:
            t = self.peek()
            if t is None:
                self.fail("';' expected")
            if t.text in ("(", "{", "["):
                depth += 1
            elif t.text in (")", "}", "]"):
                depth -= 1
                if depth < 0:
                    self.fail(f"unexpected {t.text!r}")
            self.i += 1
            if t.text == ";" and depth == 0:
                return Stmt("simple", line, label=label)

    def statement(self) -> list[Stmt]:
        t = self.peek()
        line = t.line
        if t.text == ";":
            self.i += 1
            return []
        if t.text == "{":
            return self.block()
        if t.kind != "word":
            return [self.simple()]
        word = t.text
        if word == "if":
            self.i += 1
            extra = self.bool_extra(self.skip_balanced("(", ")"))
            then = self.body()
            orelse = []
            if self.at("else"):
                self.i += 1
                orelse = self.body()
            return [Stmt("if", line, cond_extra=extra, body=then, orelse=orelse)]
        if word in ("while", "for"):
            self.i += 1
            header = self.skip_balanced("(", ")")
            extra = self.bool_extra(header) if word == "while" else 0
            return [Stmt("loop", line, cond_extra=extra, body=self.body())]
        if word == "do":
            self.i += 1
            body = self.body()
            self.expect("while")
            extra = self.bool_extra(self.skip_balanced("(", ")"))
            self.expect(";")
            return [Stmt("loop", line, cond_extra=extra, body=body, test_last=True)]
        if word == "switch":
            self.i += 1
            self.skip_balanced("(", ")")
            return [self.switch(line)]
        if word == "try":
            self.i += 1
            if self.at("("):
                self.skip_balanced("(", ")")
            body = self.block()
            arms, final = [], []
            while self.at("catch"):
                cl = self.peek().line
                self.i += 1
                self.skip_balanced("(", ")")
                arms.append((cl, self.block()))
            if self.at("finally"):
                self.i += 1
                final = self.block()
            return [Stmt("try", line, body=body, arms=arms, finalbody=final)]
        if word in ("return", "throw"):
            self.simple()
            return [Stmt("return" if word == "return" else "raise", line)]
        if word in ("break", "continue"):
            self.simple()
            return [Stmt(word, line)]
        if word in ("else", "case", "default", "catch", "finally"):
            self.fail(f"unexpected {word!r}")
        return [self.simple()]

    def switch(self, line) -> Stmt:
        self.expect("{")
        arms: list[tuple[list, list]] = []
        has_default = False
        while not self.at("}"):
            if self.peek() is None:
                self.fail("switch not closed")
            labels = []
            while self.at("case") or self.at("default"):
                t = self.peek()
                self.i += 1
                if t.text == "default":
                    has_default = True
                else:
                    while not self.at(":") and not self.at("->"):
                        if self.peek() is None:
                            self.fail("case label not terminated")
                        self.i += 1
                self.i += 1
                labels.append((t.text, t.line))
            if not labels:
                self.fail("statement before first case label")
            body = []
            while not (self.at("case") or self.at("default") or self.at("}")):
                if self.peek() is None:
                    self.fail("switch not closed")
                body.extend(self.statement())
            arms.append((labels, body))
        self.expect("}")
        return Stmt("switch", line, arms=arms, has_default=has_default)


def _read_brace(source: str, path: str, profile: LanguageProfile) -> list[ClassUnit]:
    return _BraceParser(_brace_tokens(source, path), path, profile).units()


def _brace_keyword_decisions(source: str, path: str, profile: LanguageProfile) -> dict[str, int]:
    """Per-class branch keyword counts from a flat token scan."""
    toks = _brace_tokens(source, path)
    out: dict[str, int] = {}
    i = 0
    while i < len(toks):
        if toks[i].text == "class" and i + 1 < len(toks):
            name = toks[i + 1].text
            j = i
            while j < len(toks) and toks[j].text != "{":
                j += 1
            depth, k, count = 0, j, 0
            while k < len(toks):
                t = toks[k]
                if t.text == "{":
                    depth += 1
                elif t.text == "}":
                    depth -= 1
                    if depth == 0:
                        break
                elif t.kind == "word" and t.text in profile.branch_keywords:
                    count += 1
                elif profile.count_boolean_ops and t.text in ("&&", "||"):
                    count += 1
                k += 1
            # a 'for' header or a do-while tail are single keywords already;
            # the default label is not a branch keyword
            out[name] = count
            i = k + 1
            continue
        i += 1
    return out


def build_cfg_from_source(files, profile) -> list[ControlFlowGraph]:
    """One CFG per class found in ``files`` (``{path: text}`` or ``[(path, text)]``).

    Every extraction is cross-checked: the graph M must equal the
    independently counted decision points plus one.
    """
    if isinstance(profile, str):
        profile = get_profile(profile)
    items = files.items() if isinstance(files, dict) else files
    out = []
    for path, text in items:
        units = profile.read(text, str(path))
        if profile.block_style == "indent":
            lexical = _python_keyword_decisions(text, str(path), profile)
        else:
            lexical = _brace_keyword_decisions(text, str(path), profile)
        for u in units:
            out.append(class_graph(u, profile, lexical.get(u.name)))
    return out


def function_spans(source: str, path: str) -> Optional[list[tuple[str, int, int]]]:
    """``(name, header_line, last_body_line)`` per function, or None when no
    profile covers ``path`` or the source does not parse."""
    profile = profile_for_path(path)
    if profile is None:
        return None
    try:
        units = profile.read(source, path)
    except SourceParseError:
        return None
    spans = [(m.name, m.line, m.end_line) for u in units for m in u.methods]
    return sorted(spans, key=lambda s: s[1])


_PY_HEAD = re.compile(r"^(\s*)(async\s+)?def\s+(\w+)")
_BRACE_HEAD = re.compile(r"^(\s*)(?:[\w<>\[\],.]+\s+)*(\w+)\s*\([^;]*\)\s*(?:throws\s+[\w., ]+)?\{.*$")
_NOT_FUNC = {"if", "for", "while", "switch", "catch", "else", "do", "try", "synchronized"}


def heuristic_function_spans(source: str) -> list[tuple[str, int, int]]:
    """Indentation (``def``) or brace-balance guess at function extents."""
    lines = source.replace("\r\n", "\n").split("\n")
    spans = []
    for i, text in enumerate(lines):
        mo = _PY_HEAD.match(text)
        if mo:
            indent, end = len(mo.group(1)), i
            for j in range(i + 1, len(lines)):
                if not lines[j].strip():
                    continue
                if len(lines[j]) - len(lines[j].lstrip()) <= indent:
                    break
                end = j
            spans.append((mo.group(3), i + 1, end + 1))
            continue
        mo = _BRACE_HEAD.match(text)
        if mo and mo.group(2) not in _NOT_FUNC:
            depth, end = 0, i
            for j in range(i, len(lines)):
                depth += lines[j].count("{") - lines[j].count("}")
                end = j
                if depth <= 0:
                    break
            spans.append((mo.group(2), i + 1, end + 1))
    return spans


# -- reports -------------------------------------------------------------------------


@dataclass(frozen=True)
class ComplexityRow:
    unit: str
    E: int
    N: int
    P: int
    M: int
    risk: RiskTier


@dataclass(frozen=True)
class ComplexityReport:
    rows: tuple[ComplexityRow, ...]

    @property
    def model_total_M(self) -> int:
        return sum(r.M for r in self.rows)

    def row(self, unit: str) -> ComplexityRow:
        return next(r for r in self.rows if r.unit == unit)

    def to_dict(self) -> dict:
        return {
            "units": [
                {"unit": r.unit, "E": r.E, "N": r.N, "P": r.P, "M": r.M, "risk": r.risk.value} for r in self.rows
            ],
            "model_total_M": self.model_total_M,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        """Transposed table: one column per unit plus the model total."""
        header = ["Agent class", *[r.unit for r in self.rows], "Model"]
        body = [
            ["Edges (E)", *[str(r.E) for r in self.rows], ""],
            ["Nodes (N)", *[str(r.N) for r in self.rows], ""],
            ["Components (P)", *[str(r.P) for r in self.rows], ""],
            ["Complexity (M)", *[str(r.M) for r in self.rows], str(self.model_total_M)],
            ["Risk", *[r.risk.value for r in self.rows], ""],
        ]
        widths = [max(len(row[i]) for row in [header, *body]) for i in range(len(header))]
        fmt = lambda row: "  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip()  # noqa: E731
        return "\n".join([fmt(header), *(fmt(r) for r in body)]) + "\n"


def _order_key(unit: str):
    if unit in CASE_STUDY_ORDER:
        return (0, CASE_STUDY_ORDER.index(unit), unit)
    return (1, 0, unit)


def report(cfgs: Iterable[ControlFlowGraph]) -> ComplexityReport:
    rows = []
    for cfg in cfgs:
        r = cyclomatic(cfg)
        rows.append(ComplexityRow(cfg.unit, r.E, r.N, r.P, r.M, classify(r.M)))
    if not rows:
        raise EmptyGraphError("report needs at least one graph")
    rows.sort(key=lambda r: _order_key(r.unit))
    return ComplexityReport(tuple(rows))
