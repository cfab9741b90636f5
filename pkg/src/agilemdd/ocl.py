"""A closed OCL subset: lexer, parser, static type check and evaluator.

Grammar (informal)::

    file     := block*
    block    := 'context' Name ('::' op '(' params ')' (':' type)?)? clause+
    clause   := ('inv' | 'pre' | 'post') name? ':' expr
    expr     := implies-expression over and/or/xor/not, comparisons
                (= <> < <= > >=), + - * / div mod, unary minus,
                postfix .attr, .attr@pre, .op(args), ->op(args)

Collection operations: size isEmpty notEmpty includes excludes sum forAll
exists isUnique select reject collect. Iterator bodies take an explicit
variable (``x | body``) or use the element implicitly (``isUnique(uvID)``).

Identifiers may contain a hyphen when the following segment starts with an
uppercase letter (``UVF-Manager``); ``a-b`` is always subtraction.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional

from .errors import EvaluationError

# -- lexer --------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>--[^\n]*)
  | (?P<number>\d+(?:\.\d+)?)
  | (?P<string>'(?:[^'\\]|\\.)*')
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*(?:-[A-Z][A-Za-z0-9_]*)*)
  | (?P<op>->|<>|<=|>=|::|[=<>+\-*/().,|:@\[\]]|≤|≥|≠)
    """,
    re.VERBOSE,
)

KEYWORDS = {
    "context", "inv", "pre", "post", "and", "or", "xor", "not", "implies", "div", "mod",
    "true", "false", "self", "if", "then", "else", "endif",
}
_CANON = {"≤": "<=", "≥": ">=", "≠": "<>"}


@dataclass(frozen=True)
class Token:
    kind: str  # number | string | ident | kw | op | eof
    value: str
    line: int
    col: int


class OclSyntaxError(Exception):
    def __init__(self, message, line, col):
        super().__init__(message)
        self.line = line
        self.col = col


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        mo = _TOKEN_RE.match(text, pos)
        if mo is None:
            raise OclSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = mo.lastgroup
        value = mo.group()
        col = pos - line_start + 1
        if kind == "ident" and value in KEYWORDS:
            kind = "kw"
        if kind == "op":
            value = _CANON.get(value, value)
        if kind not in ("ws", "comment"):
            tokens.append(Token(kind, value, line, col))
        nl = value.count("\n")
        if nl:
            line += nl
            line_start = pos + value.rindex("\n") + 1
        pos = mo.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


# -- AST ----------------------------------------------------------------------


@dataclass(frozen=True)
class Lit:
    value: Any


@dataclass(frozen=True)
class SelfRef:
    pass


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Attr:
    obj: Any
    name: str
    at_pre: bool = False


@dataclass(frozen=True)
class Call:
    obj: Any
    name: str
    args: tuple = ()


@dataclass(frozen=True)
class Arrow:
    obj: Any
    name: str
    var: Optional[str] = None
    args: tuple = ()


@dataclass(frozen=True)
class Unary:
    op: str
    x: Any


@dataclass(frozen=True)
class Bin:
    op: str
    left: Any
    right: Any


@dataclass(frozen=True)
class IfExpr:
    cond: Any
    then: Any
    orelse: Any


ITERATORS = {"forAll", "exists", "isUnique", "select", "reject", "collect", "any", "one"}


def walk(node):
    yield node
    for child in _children(node):
        yield from walk(child)


def _children(node):
    if isinstance(node, (Attr,)):
        return [node.obj]
    if isinstance(node, Call):
        return [node.obj, *node.args]
    if isinstance(node, Arrow):
        return [node.obj, *node.args]
    if isinstance(node, Unary):
        return [node.x]
    if isinstance(node, Bin):
        return [node.left, node.right]
    if isinstance(node, IfExpr):
        return [node.cond, node.then, node.orelse]
    return []


def render(node) -> str:
    """Render an expression back to OCL text (fully parenthesised binaries)."""
    if isinstance(node, Lit):
        if isinstance(node.value, bool):
            return "true" if node.value else "false"
        if isinstance(node.value, str):
            return "'" + node.value.replace("'", "\\'") + "'"
        return repr(node.value)
    if isinstance(node, SelfRef):
        return "self"
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Attr):
        return f"{render(node.obj)}.{node.name}{'@pre' if node.at_pre else ''}"
    if isinstance(node, Call):
        return f"{render(node.obj)}.{node.name}({', '.join(render(a) for a in node.args)})"
    if isinstance(node, Arrow):
        inner = ", ".join(render(a) for a in node.args)
        if node.var:
            inner = f"{node.var} | {inner}"
        return f"{render(node.obj)}->{node.name}({inner})"
    if isinstance(node, Unary):
        return f"{node.op} {render(node.x)}" if node.op == "not" else f"-{render(node.x)}"
    if isinstance(node, Bin):
        return f"({render(node.left)} {node.op} {render(node.right)})"
    if isinstance(node, IfExpr):
        return f"if {render(node.cond)} then {render(node.then)} else {render(node.orelse)} endif"
    raise TypeError(node)


# -- constraint blocks ----------------------------------------------------------


class ConstraintKind(str, Enum):
    UNIQUENESS = "uniqueness"
    CARDINALITY = "cardinality"
    VALUE = "value"
    PRECONDITION = "precondition"
    POSTCONDITION = "postcondition"


@dataclass(frozen=True)
class Constraint:
    id: str
    context: str
    kind: ConstraintKind
    expr: Any
    operation: Optional[str] = None
    line: int = field(default=0, compare=False)

    @property
    def is_contract(self) -> bool:
        return self.kind in (ConstraintKind.PRECONDITION, ConstraintKind.POSTCONDITION)

    def references_self(self) -> bool:
        return any(isinstance(n, SelfRef) for n in walk(self.expr))

    def text(self) -> str:
        return render(self.expr)


def infer_kind(clause: str, expr) -> ConstraintKind:
    if clause == "pre":
        return ConstraintKind.PRECONDITION
    if clause == "post":
        return ConstraintKind.POSTCONDITION
    nodes = list(walk(expr))
    if any(isinstance(n, Arrow) and n.name == "isUnique" for n in nodes):
        return ConstraintKind.UNIQUENESS
    if any(isinstance(n, Arrow) and n.name == "size" for n in nodes):
        return ConstraintKind.CARDINALITY
    return ConstraintKind.VALUE


class Parser:
    def __init__(self, tokens: list[Token]):
        self.toks = tokens
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k=1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def next(self) -> Token:
        t = self.toks[self.i]
        if t.kind != "eof":
            self.i += 1
        return t

    def at(self, kind, value=None) -> bool:
        t = self.tok
        return t.kind == kind and (value is None or t.value == value)

    def accept(self, kind, value=None) -> Optional[Token]:
        if self.at(kind, value):
            return self.next()
        return None

    def expect(self, kind, value=None) -> Token:
        t = self.tok
        if not self.at(kind, value):
            want = value or kind
            got = t.value or t.kind
            raise OclSyntaxError(f"expected {want!r}, found {got!r}", t.line, t.col)
        return self.next()

    # expression grammar, lowest precedence first

    def expression(self):
        return self.implies()

    def implies(self):
        left = self.or_()
        while self.accept("kw", "implies"):
            left = Bin("implies", left, self.or_())
        return left

    def or_(self):
        left = self.and_()
        while self.at("kw", "or") or self.at("kw", "xor"):
            op = self.next().value
            left = Bin(op, left, self.and_())
        return left

    def and_(self):
        left = self.not_()
        while self.accept("kw", "and"):
            left = Bin("and", left, self.not_())
        return left

    def not_(self):
        if self.accept("kw", "not"):
            return Unary("not", self.not_())
        return self.comparison()

    def comparison(self):
        left = self.additive()
        if self.tok.kind == "op" and self.tok.value in ("=", "<>", "<", "<=", ">", ">="):
            op = self.next().value
            left = Bin(op, left, self.additive())
        return left

    def additive(self):
        left = self.multiplicative()
        while self.tok.kind == "op" and self.tok.value in ("+", "-"):
            op = self.next().value
            left = Bin(op, left, self.multiplicative())
        return left

    def multiplicative(self):
        left = self.unary()
        while (self.tok.kind == "op" and self.tok.value in ("*", "/")) or (
            self.tok.kind == "kw" and self.tok.value in ("div", "mod")
        ):
            op = self.next().value
            left = Bin(op, left, self.unary())
        return left

    def unary(self):
        if self.accept("op", "-"):
            return Unary("-", self.unary())
        return self.postfix()

    def postfix(self):
        node = self.primary()
        while True:
            if self.accept("op", "."):
                name_tok = self.tok
                if name_tok.kind not in ("ident", "kw"):
                    raise OclSyntaxError("expected name after '.'", name_tok.line, name_tok.col)
                name = self.next().value
                if self.accept("op", "("):
                    node = Call(node, name, self.arguments())
                else:
                    at_pre = False
                    if self.accept("op", "@"):
                        self.expect("kw", "pre")
                        at_pre = True
                    node = Attr(node, name, at_pre)
            elif self.accept("op", "->"):
                name = self.expect("ident").value
                self.expect("op", "(")
                var = None
                if name in ITERATORS and self.at("ident") and self.peek().kind == "op" and self.peek().value == "|":
                    var = self.next().value
                    self.next()
                node = Arrow(node, name, var, self.arguments())
            else:
                return node

    def arguments(self) -> tuple:
        args = []
        if self.accept("op", ")"):
            return ()
        while True:
            args.append(self.expression())
            if self.accept("op", ")"):
                return tuple(args)
            self.expect("op", ",")

    def primary(self):
        t = self.tok
        if t.kind == "number":
            self.next()
            return Lit(float(t.value) if "." in t.value else int(t.value))
        if t.kind == "string":
            self.next()
            return Lit(re.sub(r"\\(.)", r"\1", t.value[1:-1]))
        if t.kind == "kw" and t.value in ("true", "false"):
            self.next()
            return Lit(t.value == "true")
        if t.kind == "kw" and t.value == "self":
            self.next()
            return SelfRef()
        if t.kind == "kw" and t.value == "if":
            self.next()
            cond = self.expression()
            self.expect("kw", "then")
            then = self.expression()
            self.expect("kw", "else")
            orelse = self.expression()
            self.expect("kw", "endif")
            return IfExpr(cond, then, orelse)
        if t.kind == "ident":
            self.next()
            return Var(t.value)
        if self.accept("op", "("):
            inner = self.expression()
            self.expect("op", ")")
            return inner
        raise OclSyntaxError(f"unexpected {t.value or t.kind!r}", t.line, t.col)


def parse_expression(text: str):
    p = Parser(tokenize(text))
    node = p.expression()
    if not p.at("eof"):
        raise OclSyntaxError(f"trailing input {p.tok.value!r}", p.tok.line, p.tok.col)
    return node


@dataclass(frozen=True)
class SyntaxIssue:
    line: int
    col: int
    message: str
    reason: str = "syntax"


def parse_blocks(text: str) -> tuple[list[Constraint], list[SyntaxIssue]]:
    """Parse ``context`` blocks; a bad clause is reported and skipped."""
    issues: list[SyntaxIssue] = []
    try:
        toks = tokenize(text)
    except OclSyntaxError as exc:
        return [], [SyntaxIssue(exc.line, exc.col, str(exc))]
    p = Parser(toks)
    out: list[Constraint] = []
    counters: dict[tuple, int] = {}

    def skip_to_clause():
        while not p.at("eof") and not (p.tok.kind == "kw" and p.tok.value in ("context", "inv", "pre", "post")):
            p.next()

    context = None
    operation = None
    while not p.at("eof"):
        try:
            if p.accept("kw", "context"):
                context = p.expect("ident").value
                operation = None
                if p.accept("op", "::"):
                    operation = p.expect("ident").value
                    p.expect("op", "(")
                    depth = 1
                    while depth and not p.at("eof"):
                        t = p.next()
                        if t.kind == "op" and t.value == "(":
                            depth += 1
                        elif t.kind == "op" and t.value == ")":
                            depth -= 1
                    if p.accept("op", ":"):
                        p.expect("ident")
                continue
            t = p.tok
            if not (t.kind == "kw" and t.value in ("inv", "pre", "post")):
                raise OclSyntaxError(f"expected 'context', 'inv', 'pre' or 'post', found {t.value!r}", t.line, t.col)
            if context is None:
                raise OclSyntaxError(f"'{t.value}' outside a context block", t.line, t.col)
            clause = p.next().value
            name = None
            if p.at("ident"):
                name = p.next().value
            p.expect("op", ":")
            expr = p.expression()
            if not (p.at("eof") or (p.tok.kind == "kw" and p.tok.value in ("context", "inv", "pre", "post"))):
                raise OclSyntaxError(f"unexpected {p.tok.value!r} after expression", p.tok.line, p.tok.col)
            if clause in ("pre", "post") and operation is None:
                issues.append(SyntaxIssue(t.line, t.col, f"'{clause}' needs an operation context (C::op())", "missing-operation"))
                continue
            if clause == "inv" and operation is not None:
                issues.append(SyntaxIssue(t.line, t.col, "'inv' not allowed in an operation context", "misplaced-inv"))
                continue
            if clause != "post" and any(isinstance(n, Attr) and n.at_pre for n in walk(expr)):
                issues.append(SyntaxIssue(t.line, t.col, "'@pre' is only allowed in postconditions", "misplaced-at-pre"))
                continue
            if name is None:
                key = (context, operation, clause)
                counters[key] = counters.get(key, 0) + 1
                name = "_".join(x for x in (context, operation, clause) if x) + f"_{counters[key]}"
            out.append(Constraint(name, context, infer_kind(clause, expr), expr, operation, t.line))
        except OclSyntaxError as exc:
            issues.append(SyntaxIssue(exc.line, exc.col, str(exc)))
            if p.tok.kind == "kw" and p.tok.value in ("inv", "pre", "post", "context"):
                p.next()
            skip_to_clause()
    return out, issues


# -- static types --------------------------------------------------------------

NUMBER, STRING, BOOLEAN, ANY = ("number",), ("string",), ("boolean",), ("any",)

_TYPE_TAGS = {
    "int": NUMBER, "integer": NUMBER, "float": NUMBER, "real": NUMBER, "number": NUMBER, "percent": NUMBER,
    "double": NUMBER, "string": STRING, "str": STRING, "bool": BOOLEAN, "boolean": BOOLEAN,
}


def tag_type(tag: str):
    return _TYPE_TAGS.get(tag.strip().lower(), ANY)


def collection(of=None):
    return ("collection", of)


def obj(cls):
    return ("object", cls)


def _compatible(a, b) -> bool:
    return a == ANY or b == ANY or a[0] == b[0]


class TypeChecker:
    """Infers {number, string, boolean, collection} types against a model."""

    def __init__(self, model, variables: Optional[dict] = None):
        self.model = model
        self.variables = dict(variables or {})
        self.errors: list[str] = []

    def check(self, constraint: Constraint) -> list[str]:
        self.errors = []
        self.context = constraint.context
        t = self.infer(constraint.expr, {})
        if t not in (BOOLEAN, ANY):
            self.errors.append(f"constraint body has type {t[0]}, expected boolean")
        return self.errors

    def _attr_type(self, cls, name):
        if cls is None or self.model is None or self.model.cls(cls) is None:
            return ANY
        for a in self.model.all_attributes(cls):
            if a.name == name:
                return tag_type(a.type)
        for rel in self.model.relationships:
            if rel.role == name and self.model.is_a(cls, rel.source):
                return collection(rel.target)
        self.errors.append(f"class {cls!r} has no attribute or role {name!r}")
        return ANY

    def infer(self, n, scope):
        if isinstance(n, Lit):
            if isinstance(n.value, bool):
                return BOOLEAN
            return STRING if isinstance(n.value, str) else NUMBER
        if isinstance(n, SelfRef):
            return obj(self.context)
        if isinstance(n, Var):
            if n.name in scope:
                return scope[n.name]
            if "__implicit__" in scope and n.name not in self.variables:
                it = scope["__implicit__"]
                if it[0] == "object":
                    return self._attr_type(it[1], n.name)
                return ANY
            if n.name in self.variables:
                v = self.variables[n.name]
                return BOOLEAN if isinstance(v, bool) else NUMBER if isinstance(v, (int, float)) else STRING
            if self.model is not None and self.model.cls(n.name) is not None:
                return ("class", n.name)
            self.errors.append(f"unknown name {n.name!r}")
            return ANY
        if isinstance(n, Attr):
            base = self.infer(n.obj, scope)
            if base[0] == "object":
                return self._attr_type(base[1], n.name)
            if base != ANY:
                self.errors.append(f"attribute access .{n.name} on {base[0]}")
            return ANY
        if isinstance(n, Call):
            base = self.infer(n.obj, scope)
            for a in n.args:
                self.infer(a, scope)
            if n.name == "allInstances":
                if base[0] != "class":
                    self.errors.append("allInstances() needs a class name")
                    return collection()
                return collection(base[1])
            if n.name in ("mod", "div", "abs", "max", "min", "floor", "round"):
                if not _compatible(base, NUMBER):
                    self.errors.append(f".{n.name}() on {base[0]}")
                return NUMBER
            if n.name == "size":
                return NUMBER
            if n.name in ("concat", "toUpper", "toLower", "substring"):
                return STRING
            return ANY
        if isinstance(n, Arrow):
            base = self.infer(n.obj, scope)
            if base[0] not in ("collection", "any"):
                self.errors.append(f"->{n.name}() on {base[0]}")
            elem = obj(base[1]) if base[0] == "collection" and base[1] else ANY
            inner = dict(scope)
            if n.var:
                inner[n.var] = elem
            elif n.name in ITERATORS:
                inner["__implicit__"] = elem
            arg_types = [self.infer(a, inner if n.name in ITERATORS else scope) for a in n.args]
            if n.name in ("size", "count"):
                return NUMBER
            if n.name in ("isEmpty", "notEmpty", "includes", "excludes", "isUnique"):
                return BOOLEAN
            if n.name in ("forAll", "exists", "one"):
                if arg_types and not _compatible(arg_types[0], BOOLEAN):
                    self.errors.append(f"->{n.name}() body must be boolean")
                return BOOLEAN
            if n.name == "sum":
                return NUMBER
            if n.name in ("select", "reject"):
                return base if base[0] == "collection" else collection()
            if n.name == "collect":
                return collection()
            return ANY
        if isinstance(n, Unary):
            t = self.infer(n.x, scope)
            want = BOOLEAN if n.op == "not" else NUMBER
            if not _compatible(t, want):
                self.errors.append(f"operator {n.op!r} applied to {t[0]}")
            return want
        if isinstance(n, Bin):
            lt, rt = self.infer(n.left, scope), self.infer(n.right, scope)
            if n.op in ("and", "or", "xor", "implies"):
                for t in (lt, rt):
                    if not _compatible(t, BOOLEAN):
                        self.errors.append(f"operator {n.op!r} applied to {t[0]}")
                return BOOLEAN
            if n.op in ("=", "<>"):
                if not _compatible(lt, rt):
                    self.errors.append(f"cannot compare {lt[0]} with {rt[0]}")
                return BOOLEAN
            if n.op in ("<", "<=", ">", ">="):
                if not (_compatible(lt, rt) and lt[0] in ("number", "string", "any") and rt[0] in ("number", "string", "any")):
                    self.errors.append(f"cannot order {lt[0]} and {rt[0]}")
                return BOOLEAN
            if n.op == "+" and (lt == STRING or rt == STRING):
                return STRING
            for t in (lt, rt):
                if not _compatible(t, NUMBER):
                    self.errors.append(f"operator {n.op!r} applied to {t[0]}")
            return NUMBER
        if isinstance(n, IfExpr):
            self.infer(n.cond, scope)
            a, b = self.infer(n.then, scope), self.infer(n.orelse, scope)
            return a if a == b else ANY
        return ANY


# -- evaluation ---------------------------------------------------------------


class Env:
    """Evaluation context.

    ``resolve_attr(obj, name)`` and ``all_instances(cls)`` are supplied by the
    caller so the evaluator stays independent of the store layout.
    """

    def __init__(self, self_obj=None, pre_obj=None, variables=None, resolve_attr=None, all_instances=None, classes=()):
        self.self_obj = self_obj
        self.pre_obj = pre_obj
        self.variables = dict(variables or {})
        self.resolve_attr = resolve_attr or _dict_attr
        self.all_instances = all_instances
        self.classes = set(classes)
        self.reads: list[tuple[str, Any]] = []
        self.notes: list[str] = []


def _dict_attr(obj, name):
    if isinstance(obj, dict):
        if name in obj:
            return obj[name]
        raise EvaluationError(f"unknown attribute {name!r}")
    raise EvaluationError(f"cannot read {name!r} from {type(obj).__name__}")


_MISSING = object()


def fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return repr(value)
    if isinstance(value, float) and value.is_integer():
        return str(int(value))
    if isinstance(value, list):
        return "[" + ", ".join(fmt(v) for v in value) + "]"
    return str(getattr(value, "id", value))


def _num(v, op):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise EvaluationError(f"operator {op!r} needs numbers, got {fmt(v)}")
    return v


def _bool(v, op):
    if not isinstance(v, bool):
        raise EvaluationError(f"operator {op!r} needs booleans, got {fmt(v)}")
    return v


def _trunc_div(a, b):
    if b == 0:
        raise EvaluationError("division by zero")
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


def _same_type(a, b) -> bool:
    if isinstance(a, bool) or isinstance(b, bool):
        return isinstance(a, bool) and isinstance(b, bool)
    if isinstance(a, (int, float)) and isinstance(b, (int, float)):
        return True
    return type(a) is type(b)


def evaluate(node, env: Env, scope: Optional[dict] = None):
    scope = scope if scope is not None else {}
    ev = lambda n, s=scope: evaluate(n, env, s)  # noqa: E731

    if isinstance(node, Lit):
        return node.value
    if isinstance(node, SelfRef):
        if env.self_obj is None:
            raise EvaluationError("'self' is unbound here")
        return env.self_obj
    if isinstance(node, Var):
        if node.name in scope:
            return scope[node.name]
        if "__implicit__" in scope:
            try:
                return env.resolve_attr(scope["__implicit__"], node.name)
            except EvaluationError:
                if node.name not in env.variables and node.name not in env.classes:
                    raise
        if node.name in env.variables:
            return env.variables[node.name]
        if node.name in env.classes:
            return ("class", node.name)
        raise EvaluationError(f"unknown name {node.name!r}")
    if isinstance(node, Attr):
        if node.at_pre:
            if env.pre_obj is None:
                raise EvaluationError("'@pre' has no prior state here")
            if not isinstance(node.obj, SelfRef):
                raise EvaluationError("'@pre' is only supported on self attributes")
            value = env.resolve_attr(env.pre_obj, node.name)
            env.reads.append((f"{node.name}@pre", value))
            return value
        base = ev(node.obj)
        value = env.resolve_attr(base, node.name)
        if isinstance(node.obj, SelfRef):
            env.reads.append((node.name, value))
        return value
    if isinstance(node, Call):
        base = ev(node.obj)
        args = [ev(a) for a in node.args]
        return _call(base, node.name, args, env)
    if isinstance(node, Arrow):
        base = ev(node.obj)
        if not isinstance(base, list):
            base = [base]
        return _arrow(node, base, env, scope)
    if isinstance(node, Unary):
        v = ev(node.x)
        return (not _bool(v, "not")) if node.op == "not" else -_num(v, "-")
    if isinstance(node, Bin):
        op = node.op
        if op in ("and", "or", "implies"):
            left = _bool(ev(node.left), op)
            if op == "and" and not left:
                return False
            if op == "or" and left:
                return True
            if op == "implies" and not left:
                return True
            return _bool(ev(node.right), op)
        a, b = ev(node.left), ev(node.right)
        if op == "xor":
            return _bool(a, op) != _bool(b, op)
        if op in ("=", "<>"):
            if not _same_type(a, b):
                raise EvaluationError(f"type mismatch comparing {fmt(a)} with {fmt(b)}")
            return (a == b) if op == "=" else (a != b)
        if op in ("<", "<=", ">", ">="):
            if isinstance(a, str) and isinstance(b, str):
                pass
            else:
                _num(a, op), _num(b, op)
            return {"<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b}[op]
        if op == "+" and isinstance(a, str) and isinstance(b, str):
            return a + b
        _num(a, op), _num(b, op)
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            if b == 0:
                raise EvaluationError("division by zero")
            return a / b
        if op == "div":
            return _trunc_div(a, b)
        if op == "mod":
            return a - b * _trunc_div(a, b)
    if isinstance(node, IfExpr):
        return ev(node.then) if _bool(ev(node.cond), "if") else ev(node.orelse)
    raise EvaluationError(f"cannot evaluate {node!r}")


def _call(base, name, args, env):
    if name == "allInstances":
        if not (isinstance(base, tuple) and base[0] == "class"):
            raise EvaluationError("allInstances() needs a class name")
        if env.all_instances is None:
            raise EvaluationError("no instance store available")
        return list(env.all_instances(base[1]))
    if name in ("mod", "div"):
        if len(args) != 1:
            raise EvaluationError(f".{name}() takes one argument")
        a, b = _num(base, name), _num(args[0], name)
        q = _trunc_div(a, b)
        return q if name == "div" else a - b * q
    if name == "abs":
        return abs(_num(base, name))
    if name in ("max", "min"):
        return (max if name == "max" else min)(_num(base, name), _num(args[0], name))
    if name == "floor":
        return int(_num(base, name) // 1)
    if name == "round":
        return int(_num(base, name) + 0.5)
    if name == "size":
        if isinstance(base, (str, list)):
            return len(base)
        raise EvaluationError(f"size() on {fmt(base)}")
    if name == "concat":
        return str(base) + str(args[0])
    if name == "toUpper":
        return str(base).upper()
    if name == "toLower":
        return str(base).lower()
    raise EvaluationError(f"unknown operation .{name}()")


def _arrow(node: Arrow, items: list, env: Env, scope: dict):
    name = node.name
    if name in ITERATORS:
        if len(node.args) != 1:
            raise EvaluationError(f"->{name}() takes one body expression")
        body = node.args[0]

        def body_of(item):
            inner = dict(scope)
            if node.var:
                inner[node.var] = item
            else:
                inner["__implicit__"] = item
            return evaluate(body, env, inner)

        if name == "forAll":
            return all(_bool(body_of(x), name) for x in items)
        if name == "exists":
            return any(_bool(body_of(x), name) for x in items)
        if name == "one":
            return sum(1 for x in items if _bool(body_of(x), name)) == 1
        if name == "any":
            for x in items:
                if _bool(body_of(x), name):
                    return x
            return None
        if name == "select":
            return [x for x in items if _bool(body_of(x), name)]
        if name == "reject":
            return [x for x in items if not _bool(body_of(x), name)]
        if name == "collect":
            return [body_of(x) for x in items]
        if name == "isUnique":
            seen: dict = {}
            dups = []
            for x in items:
                key = body_of(x)
                hkey = (type(key).__name__, key) if not isinstance(key, list) else ("list", tuple(key))
                if hkey in seen and key not in dups:
                    dups.append(key)
                seen[hkey] = True
            if dups:
                env.notes.append("duplicates: " + ", ".join(fmt(d) for d in dups))
            return not dups
    args = [evaluate(a, env, scope) for a in node.args]
    if name == "size":
        return len(items)
    if name == "isEmpty":
        return not items
    if name == "notEmpty":
        return bool(items)
    if name == "includes":
        return args[0] in items
    if name == "excludes":
        return args[0] not in items
    if name == "count":
        return items.count(args[0])
    if name == "sum":
        return sum(_num(x, "sum") for x in items)
    raise EvaluationError(f"unknown collection operation ->{name}()")
