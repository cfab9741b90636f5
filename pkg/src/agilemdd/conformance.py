"""Trace conformance against the flow implied by the activity diagram.

The activity graph is folded into a process expression (sequence, parallel,
choice over message events). A trace is aligned against it with Brzozowski
derivatives, where a parallel node is a shuffle, so fork regions may
interleave freely. Alignment is a 0-1 BFS over (trace position, residual
expression): matching costs 0, a missing expected event costs 1, and an
unexpected event costs 1 in strict mode but 0 in relaxed mode when it is
schema-valid.
"""
from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Optional

from .errors import UnknownSchemaError
from .model import ActivityFlow, NodeKind, UmlModel, resolve_hierarchy
from .ontology import AgentMessage, OntologyRegistry, validate_message
from .simulator import Trace

SEND_RE = re.compile(r"^send\s+([A-Za-z][\w-]*)\s+to\s+([A-Za-z][\w-]*)$")

# process expressions are plain tuples so they hash and sort
EPS = ("eps",)
EMPTY = ("empty",)


def ev(sender: str, receiver: str, schema: str):
    return ("ev", (sender, receiver, schema))


def seq(*parts):
    flat = []
    for p in parts:
        if p == EMPTY:
            return EMPTY
        if p == EPS:
            continue
        flat.extend(p[1] if p[0] == "seq" else [p])
    if not flat:
        return EPS
    return flat[0] if len(flat) == 1 else ("seq", tuple(flat))


def par(*parts):
    flat = []
    for p in parts:
        if p == EMPTY:
            return EMPTY
        if p == EPS:
            continue
        flat.extend(p[1] if p[0] == "par" else [p])
    if not flat:
        return EPS
    return flat[0] if len(flat) == 1 else ("par", tuple(sorted(flat)))


def alt(*parts):
    flat = set()
    for p in parts:
        if p == EMPTY:
            continue
        flat.update(p[1] if p[0] == "alt" else [p])
    if not flat:
        return EMPTY
    return next(iter(flat)) if len(flat) == 1 else ("alt", tuple(sorted(flat)))


@lru_cache(maxsize=None)
def nullable(p) -> bool:
    tag = p[0]
    if tag == "eps":
        return True
    if tag in ("empty", "ev"):
        return False
    if tag == "alt":
        return any(nullable(x) for x in p[1])
    return all(nullable(x) for x in p[1])


@lru_cache(maxsize=None)
def derive(p, e):
    tag = p[0]
    if tag in ("eps", "empty"):
        return EMPTY
    if tag == "ev":
        return EPS if p[1] == e else EMPTY
    if tag == "alt":
        return alt(*(derive(x, e) for x in p[1]))
    if tag == "seq":
        head, rest = p[1][0], seq(*p[1][1:])
        first = seq(derive(head, e), rest)
        return alt(first, derive(rest, e)) if nullable(head) else first
    kids = p[1]
    return alt(*(par(*kids[:i], derive(k, e), *kids[i + 1:]) for i, k in enumerate(kids)))


@lru_cache(maxsize=None)
def firsts(p) -> tuple:
    """Events that can start ``p``, sorted."""
    tag = p[0]
    if tag in ("eps", "empty"):
        return ()
    if tag == "ev":
        return (p[1],)
    if tag in ("alt", "par"):
        return tuple(sorted({e for x in p[1] for e in firsts(x)}))
    out = set()
    for x in p[1]:
        out.update(firsts(x))
        if not nullable(x):
            break
    return tuple(sorted(out))


def linearize(p) -> list:
    """One accepted event sequence, taking the smallest next event each step."""
    out = []
    while firsts(p):
        e = firsts(p)[0]
        out.append(e)
        p = derive(p, e)
    return out


def render(p) -> str:
    tag = p[0]
    if tag == "eps":
        return "()"
    if tag == "empty":
        return "<none>"
    if tag == "ev":
        s, r, schema = p[1]
        return f"{s}->{r}:{schema}"
    sep = {"seq": " ; ", "par": " || ", "alt": " | "}[tag]
    return "(" + sep.join(render(x) for x in p[1]) + ")"


# -- deriving the expected flow -----------------------------------------------------------


def _postdominators(flow: ActivityFlow) -> dict[str, set]:
    ids = [n.id for n in flow.nodes]
    exits = {n.id for n in flow.nodes if n.kind is NodeKind.END or not flow.successors(n.id)}
    pdom = {n: ({n} if n in exits else set(ids)) for n in ids}
    changed = True
    while changed:
        changed = False
        for n in ids:
            if n in exits:
                continue
            succ = flow.successors(n)
            new = {n} | set.intersection(*(pdom[s] for s in succ))
            if new != pdom[n]:
                pdom[n], changed = new, True
    return pdom


def _ipdom(flow, pdom, n) -> Optional[str]:
    strict = pdom[n] - {n}
    for cand in strict:
        if all(c == cand or c in pdom[cand] for c in strict):
            return cand
    return None


def flow_expression(flow: ActivityFlow):
    """Fold the activity graph into a process expression over (actor, receiver class, schema)."""
    start = next(n for n in flow.nodes if n.kind is NodeKind.START)
    pdom = _postdominators(flow)

    def region(n, stop, guard=0):
        parts = []
        while n is not None and n != stop:
            if guard > len(flow.nodes) * 4:
                raise ValueError("activity flow is not structured (cycle)")
            guard += 1
            node = flow.node(n)
            succ = flow.successors(n)
            if node.kind is NodeKind.ACTION:
                mo = SEND_RE.match(node.label.strip())
                if mo:
                    parts.append(ev(node.actor, mo.group(2), mo.group(1)))
            if node.kind in (NodeKind.FORK, NodeKind.DECISION) and len(succ) > 1:
                join = _ipdom(flow, pdom, n)
                branches = [region(s, join, guard) for s in succ]
                parts.append(par(*branches) if node.kind is NodeKind.FORK else alt(*branches))
                n = join
                continue
            if node.kind is NodeKind.END or not succ:
                break
            n = succ[0]
        return seq(*parts)

    return region(start.id, None)


def _classes_in(p) -> set:
    if p[0] == "ev":
        return {p[1][0], p[1][1]}
    if p[0] in ("eps", "empty"):
        return set()
    return set().union(*(_classes_in(x) for x in p[1]))


def _rename(p, mapping):
    if p[0] == "ev":
        s, r, schema = p[1]
        return ev(mapping.get(s, s), mapping.get(r, r), schema)
    if p[0] in ("eps", "empty"):
        return p
    build = {"seq": seq, "par": par, "alt": alt}[p[0]]
    return build(*(_rename(x, mapping) for x in p[1]))


def bind_roster(p, model: UmlModel, roster: Iterable[tuple[str, str]]):
    """Map class names to agent ids. Inside a parallel region, a branch that
    mentions a fleet class is replicated once per roster agent of that class
    (or a subclass); a branch with no matching agent drops out."""
    roster = list(roster)
    # the roster classes, their ancestors, and every class under those ancestors
    family = {a for c, _ in roster for a in [c, *resolve_hierarchy(model, c)]}
    multi = {cls for cls in model.class_names() if any(model.is_a(cls, f) for f in family)}

    def agents_of(cls):
        return [uid for c, uid in roster if model.is_a(c, cls)]

    def walk(q):
        if q[0] in ("eps", "empty", "ev"):
            return q
        if q[0] != "par":
            build = {"seq": seq, "alt": alt}[q[0]]
            return build(*(walk(x) for x in q[1]))
        branches = []
        for b in q[1]:
            owned = sorted(_classes_in(b) & multi)
            if not owned:
                branches.append(walk(b))
                continue
            cls = owned[0]
            branches.extend(walk(_rename(b, {cls: uid})) for uid in agents_of(cls))
        return par(*branches) if branches else EPS

    return walk(p)


DISCOVERY = (("MCC", "UVF-Manager", "UV-Discovery-Request"), ("UVF-Manager", "MCC", "UV-List"))


def _insert_discovery(p):
    """Put the discovery exchange in front of the first Fleet-Plan event."""
    done = [False]

    def walk(q):
        if done[0]:
            return q
        if q[0] == "ev" and q[1][2] == "Fleet-Plan":
            done[0] = True
            return seq(*(ev(*e) for e in DISCOVERY), q)
        if q[0] in ("eps", "empty", "ev"):
            return q
        build = {"seq": seq, "par": par, "alt": alt}[q[0]]
        return build(*(walk(x) for x in q[1]))

    out = walk(p)
    if not done[0]:
        raise ValueError("flow has no Fleet-Plan event to anchor the discovery exchange")
    return out


def expected_flow(model: UmlModel, roster: Iterable[tuple[str, str]], discovery: bool = True):
    if model.activity is None:
        raise ValueError("model has no activity flow")
    p = bind_roster(flow_expression(model.activity), model, roster)
    return _insert_discovery(p) if discovery else p


# -- checking --------------------------------------------------------------------------------


@dataclass(frozen=True)
class Mismatch:
    kind: str  # missing | unexpected | invalid-extra
    event: tuple[str, str, str]
    position: int

    def __str__(self):
        s, r, schema = self.event
        return f"{self.kind} at {self.position}: {s}->{r} {schema}"

    def to_dict(self) -> dict:
        s, r, schema = self.event
        return {"kind": self.kind, "sender": s, "receiver": r, "schema": schema, "position": self.position}


@dataclass(frozen=True)
class ConformanceResult:
    mode: str
    mismatches: tuple[Mismatch, ...]

    @property
    def verdict(self) -> str:
        return "fail" if self.mismatches else "pass"

    @property
    def passed(self) -> bool:
        return not self.mismatches

    def to_dict(self) -> dict:
        return {"mode": self.mode, "verdict": self.verdict, "mismatches": [m.to_dict() for m in self.mismatches]}


def _schema_valid(registry, e) -> bool:
    if registry is None:
        return True
    msg = AgentMessage(e.sender, e.receiver, "send", e.schema, e.payload, e.seq)
    try:
        return not validate_message(registry, msg)
    except UnknownSchemaError:
        return False


def check_conformance(trace: Trace, flow, mode: str = "strict", registry: Optional[OntologyRegistry] = None) -> ConformanceResult:
    """Minimal-cost alignment of ``trace`` against the expected ``flow``."""
    if mode not in ("strict", "relaxed"):
        raise ValueError(f"mode must be strict or relaxed, not {mode!r}")
    events = list(trace.events)
    extra_cost = []
    for e in events:
        if mode == "strict":
            extra_cost.append((1, "unexpected"))
        else:
            extra_cost.append((0, "unexpected") if _schema_valid(registry, e) else (1, "invalid-extra"))

    start = (0, flow)
    best = {start: 0}
    back: dict = {start: None}
    dq = deque([start])
    goal = None
    while dq:
        st = dq.popleft()
        i, p = st
        cost = best[st]
        if i == len(events) and nullable(p):
            goal = st
            break
        moves = []
        if i < len(events):
            d = derive(p, events[i].key)
            if d != EMPTY:
                moves.append(((i + 1, d), 0, None))
            c, kind = extra_cost[i]
            moves.append(((i + 1, p), c, Mismatch(kind, events[i].key, i)))
        for e in firsts(p):
            moves.append(((i, derive(p, e)), 1, Mismatch("missing", e, i)))
        for nxt, c, mm in moves:
            if nxt not in best or cost + c < best[nxt]:
                best[nxt] = cost + c
                back[nxt] = (st, mm, c)
                (dq.appendleft if c == 0 else dq.append)(nxt)
    if goal is None:  # cannot happen: skipping and inserting always reach the end
        raise RuntimeError("alignment failed")
    found = []
    st = goal
    while back[st] is not None:
        st, mm, c = back[st]
        if c:
            found.append(mm)
    found.reverse()
    return ConformanceResult(mode, tuple(found))


def tolerated_extras(trace: Trace, flow, registry: Optional[OntologyRegistry] = None) -> list[Mismatch]:
    """Schema-valid events a relaxed check skipped over (informational)."""
    strict = check_conformance(trace, flow, "strict", registry)
    return [m for m in strict.mismatches if m.kind == "unexpected"]
