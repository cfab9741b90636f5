"""Deterministic tick-driven runtime for the fleet mission.

One logical loop: messages sent during tick t are delivered at t + 1, and
within a tick the agents act in a fixed order (Operator, MCC, UVF-Manager,
then the roster). Task durations and performances come from a
``random.Random`` seeded with ``"<seed>:<run_label>"`` so two run labels can
diverge in timing while each stays reproducible.
"""
from __future__ import annotations

import hashlib
import json
import random
import sys
from collections import deque
from dataclasses import dataclass, field, fields
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Optional, Union

from .constraints import Instance, InstanceStore, check_invariants, check_transition_contract, value_violations
from .errors import ConstraintViolationError, DeadlockError, SchemaViolationError, SimulationError, UnknownStateError
from .model import StateMachine, UmlModel
from .ocl import Constraint
from .ontology import AgentMessage, OntologyRegistry, check_action, validate_message

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

UV_CLASSES = ("UAV", "UGV", "USV")
SINGLETONS = ("Operator", "MCC", "UVF-Manager")


# -- state machine ----------------------------------------------------------------------


@dataclass(frozen=True)
class Rejection:
    state: str
    event: str

    def __str__(self):
        return f"event {self.event!r} not accepted in state {self.state!r}"


def uv_step(machine: StateMachine, current: str, event: str) -> Union[str, Rejection]:
    """Target of the transition on ``event`` from ``current`` or its nearest
    ancestor that handles it; a Rejection otherwise."""
    if machine.state(current) is None:
        raise UnknownStateError(f"{machine.owner} has no state {current!r}")
    for name in [current, *machine.ancestors(current)]:
        for t in machine.transitions:
            if t.source == name and t.trigger == event:
                return t.target
    return Rejection(current, event)


def settle(machine: StateMachine, state: str) -> str:
    """Follow default entry substates down to a leaf."""
    seen = {state}
    cur = machine.state(state)
    while cur is not None and cur.entry and cur.entry not in seen:
        seen.add(cur.entry)
        state = cur.entry
        cur = machine.state(state)
    return state


# -- configuration -------------------------------------------------------------------------


@dataclass(frozen=True)
class PerformanceModel:
    kind: str = "seeded_uniform"  # fixed | seeded_uniform
    value: float = 90
    lo: int = 60
    hi: int = 100

    def __post_init__(self):
        if self.kind not in ("fixed", "seeded_uniform"):
            raise ValueError(f"unknown performance model {self.kind!r}")
        if self.kind == "seeded_uniform" and not (0 <= self.lo <= self.hi <= 100):
            raise ValueError("seeded_uniform needs 0 <= lo <= hi <= 100")

    def draw(self, rng: random.Random) -> float:
        if self.kind == "fixed":
            return self.value
        return rng.randint(self.lo, self.hi)


@dataclass(frozen=True)
class SimConfig:
    seed: int
    roster: tuple[tuple[str, str], ...] = (("UAV", "UAV"), ("UGV", "UGV"), ("USV", "USV"))
    run_label: str = "default"
    task_duration: Optional[int] = None  # None: drawn per UV from [1, 5]
    performance: PerformanceModel = PerformanceModel()
    discovery: bool = True
    unavailable: tuple[str, ...] = ()
    conformance_mode: str = "strict"
    aggregation: str = "mean"
    mission_mapping: str = "identity"
    max_ticks: int = 1000

    def __post_init__(self):
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise ValueError("seed must be a non-negative integer")
        if not self.roster:
            raise ValueError("roster must not be empty")
        ids = [uid for _, uid in self.roster]
        if len(set(ids)) != len(ids):
            raise ValueError("roster ids must be unique")
        for cls, uid in self.roster:
            if uid in SINGLETONS:
                raise ValueError(f"roster id {uid!r} collides with a singleton agent")
        if self.task_duration is not None and self.task_duration < 1:
            raise ValueError("task_duration must be >= 1")
        if self.conformance_mode not in ("strict", "relaxed"):
            raise ValueError("conformance_mode must be strict or relaxed")
        unknown = set(self.unavailable) - set(ids)
        if unknown:
            raise ValueError(f"unavailable ids not in roster: {sorted(unknown)}")

    @classmethod
    def from_dict(cls, doc: dict) -> "SimConfig":
        doc = dict(doc)
        unknown = set(doc) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "roster" in doc:
            doc["roster"] = tuple(
                (r["class"], r.get("id", r["class"])) if isinstance(r, dict) else tuple(r) for r in doc["roster"]
            )
        if "performance" in doc:
            doc["performance"] = PerformanceModel(**doc["performance"])
        if "unavailable" in doc:
            doc["unavailable"] = tuple(doc["unavailable"])
        return cls(**doc)

    @classmethod
    def load(cls, path, seed: Optional[int] = None) -> "SimConfig":
        path = Path(path)
        raw = path.read_bytes()
        doc = tomllib.loads(raw.decode("utf-8")) if path.suffix == ".toml" else json.loads(raw)
        if seed is not None:
            doc["seed"] = seed
        if "seed" not in doc:
            raise ValueError(f"{path}: seed is mandatory")
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "roster": [{"class": c, "id": i} for c, i in self.roster],
            "run_label": self.run_label,
            "task_duration": self.task_duration,
            "performance": {"kind": self.performance.kind, "value": self.performance.value,
                            "lo": self.performance.lo, "hi": self.performance.hi},
            "discovery": self.discovery,
            "unavailable": list(self.unavailable),
            "conformance_mode": self.conformance_mode,
            "aggregation": self.aggregation,
            "mission_mapping": self.mission_mapping,
            "max_ticks": self.max_ticks,
        }


def default_roster(n: int) -> tuple[tuple[str, str], ...]:
    """``n`` UVs cycling through UAV, UGV, USV; first three keep bare class ids."""
    out = []
    for k in range(n):
        cls = UV_CLASSES[k % 3]
        out.append((cls, cls if k < 3 else f"{cls}-{k // 3 + 1}"))
    return tuple(out)


# -- aggregation --------------------------------------------------------------------------


def aggregate_fleet_performance(uv_performances) -> float:
    """Arithmetic mean, rounded half-up to two decimals."""
    values = list(uv_performances)
    if not values:
        raise ValueError("no UV performances to aggregate")
    for v in values:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not 0 <= v <= 100:
            raise ValueError(f"performance {v!r} outside [0, 100]")
    mean = sum(Decimal(str(v)) for v in values) / len(values)
    return float(mean.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


AGGREGATORS = {"mean": aggregate_fleet_performance}
MISSION_MAPPINGS = {"identity": lambda fleet: fleet}


# -- traces -----------------------------------------------------------------------------


def payload_digest(content: dict) -> str:
    blob = json.dumps(content, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]


@dataclass(frozen=True)
class TraceEvent:
    seq: int
    tick: int
    sender: str
    receiver: str
    schema: str
    digest: str
    payload: dict = field(default_factory=dict, compare=False, hash=False)

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.sender, self.receiver, self.schema)

    def __str__(self):
        return f"{self.seq} {self.tick} {self.sender}->{self.receiver} {self.schema} {self.digest}"


@dataclass(frozen=True)
class Trace:
    events: tuple[TraceEvent, ...]
    roster: tuple[tuple[str, str], ...] = ()
    seed: Optional[int] = None
    run_label: str = ""

    def __len__(self):
        return len(self.events)

    def to_text(self) -> str:
        return "".join(f"{e}\n" for e in self.events)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "run_label": self.run_label,
            "roster": [{"class": c, "id": i} for c, i in self.roster],
            "events": [
                {"seq": e.seq, "tick": e.tick, "sender": e.sender, "receiver": e.receiver,
                 "schema": e.schema, "digest": e.digest, "payload": e.payload}
                for e in self.events
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "Trace":
        events = []
        last_seq, last_tick = None, None
        for raw in doc.get("events", []):
            ev = TraceEvent(int(raw["seq"]), int(raw["tick"]), raw["sender"], raw["receiver"], raw["schema"],
                            raw.get("digest", ""), dict(raw.get("payload", {})))
            if last_seq is not None and (ev.seq <= last_seq or ev.tick < last_tick):
                raise ValueError(f"trace event {ev.seq}: seq must increase and tick must not decrease")
            last_seq, last_tick = ev.seq, ev.tick
            events.append(ev)
        roster = tuple((r["class"], r["id"]) for r in doc.get("roster", []))
        return cls(tuple(events), roster, doc.get("seed"), doc.get("run_label", ""))

    @classmethod
    def from_json(cls, text: str) -> "Trace":
        return cls.from_dict(json.loads(text))

    def to_plantuml(self) -> str:
        agents = list(dict.fromkeys([*SINGLETONS, *(i for _, i in self.roster)]))
        for e in self.events:
            for a in (e.sender, e.receiver):
                if a not in agents:
                    agents.append(a)
        lines = ["@startuml", *(f'participant "{a}" as {_alias(a)}' for a in agents)]
        lines += [f"{_alias(e.sender)} -> {_alias(e.receiver)} : {e.schema}" for e in self.events]
        lines.append("@enduml")
        return "\n".join(lines) + "\n"


def _alias(agent: str) -> str:
    return agent.replace("-", "_")


# -- runtime ------------------------------------------------------------------------------


@dataclass
class AgentRuntime:
    id: str
    cls: str
    attrs: dict
    state: Optional[str] = None
    mailbox: deque = field(default_factory=deque)


class _Mission:
    """Mutable bookkeeping for a single ``run_mission`` call."""

    def __init__(self, model, registry, constraints, config):
        self.model, self.registry, self.constraints, self.config = model, registry, constraints, config
        self.rng = random.Random(f"{config.seed}:{config.run_label}")
        self.machine = model.machine_for("UV")
        if self.machine is None:
            raise SimulationError("model has no UV state machine")
        self.events: list[TraceEvent] = []
        self.outbox: list[AgentMessage] = []
        self.tick = 0
        self.agents: dict[str, AgentRuntime] = {}
        self.order: list[str] = []
        self.timers: dict[str, int] = {}
        self.pending_perf: dict[str, float] = {}
        self.durations: dict[str, int] = {}
        self.done = False
        self.notes: list[str] = []
        self._build()

    def _build(self):
        for cls in SINGLETONS:
            if self.model.cls(cls) is None:
                raise SimulationError(f"model lacks agent class {cls!r}")
        op = AgentRuntime("Operator", "Operator", {"operatorID": "operator-1"})
        mcc = AgentRuntime("MCC", "MCC", {"mccID": "mcc-1"})
        mgr = AgentRuntime(
            "UVF-Manager", "UVF-Manager",
            {"uvfID": "uvf-1", "uvCount": len(self.config.roster), "fleetPlan": "", "fleetPerformance": 0},
        )
        for a in (op, mcc, mgr):
            self.agents[a.id] = a
            self.order.append(a.id)
        for cls, uid in self.config.roster:
            if self.model.cls(cls) is None or not self.model.is_a(cls, "UV"):
                raise SimulationError(f"roster class {cls!r} is not a UV subclass in the model")
            uv = AgentRuntime(uid, cls, {"uvID": f"uv-{uid.lower()}", "task": "", "status": "Idle", "performance": 0})
            uv.state = self.machine.initial
            self.agents[uid] = uv
            self.order.append(uid)
            self.durations[uid] = self.config.task_duration or self.rng.randint(1, 5)
        for a in self.agents.values():
            self._check_values(a, a.attrs)

    # writes and messages

    def _check_values(self, agent: AgentRuntime, attrs: dict):
        bad = value_violations(self.model, self.constraints, agent.cls, attrs, agent.id)
        if bad:
            raise ConstraintViolationError(bad)

    def write(self, agent: AgentRuntime, **changes):
        after = {**agent.attrs, **changes}
        self._check_values(agent, after)
        agent.attrs = after

    def send(self, sender: str, receiver: str, schema: str, content: dict):
        msg = AgentMessage(sender, receiver, "send", schema, content, seq=len(self.events) + 1)
        problems = validate_message(self.registry, msg) + check_action(self.registry, msg)
        if problems:
            raise SchemaViolationError(problems)
        self.events.append(
            TraceEvent(msg.seq, self.tick, sender, receiver, schema, payload_digest(content), dict(content))
        )
        self.outbox.append(msg)

    def fire(self, uv: AgentRuntime, event: str):
        target = uv_step(self.machine, uv.state, event)
        if isinstance(target, Rejection):
            return target
        uv.state = settle(self.machine, target)
        return uv.state

    # behaviours

    def act(self, agent: AgentRuntime):
        handler = getattr(self, "_act_" + agent.cls.replace("-", "_"), None)
        if handler is None:
            handler = self._act_uv
        handler(agent)

    def _act_Operator(self, a):
        if self.tick == 0:
            self.send(a.id, "MCC", "Mission-Brief",
                      {"mission-ID": "mission-1", "description": "survey the operating area", "status": "new"})
        while a.mailbox:
            msg = a.mailbox.popleft()
            if msg.schema == "Mission-Performance":
                self.done = True

    def _plan(self, a):
        n = len(self.config.roster)
        self.send(a.id, "UVF-Manager", "Fleet-Plan",
                  {"plan-ID": "plan-1", "description": f"{n} UV task(s) for mission-1", "status": "planned"})

    def _act_MCC(self, a):
        while a.mailbox:
            msg = a.mailbox.popleft()
            if msg.schema == "Mission-Brief":
                if self.config.discovery:
                    self.send(a.id, "UVF-Manager", "UV-Discovery-Request",
                              {"request-ID": "discovery-1", "description": "list registered UVs"})
                else:
                    self._plan(a)
            elif msg.schema == "UV-List":
                self._plan(a)
            elif msg.schema == "Fleet-Performance":
                mapping = MISSION_MAPPINGS[self.config.mission_mapping]
                value = mapping(msg.content["performance-metric"])
                self.send(a.id, "Operator", "Mission-Performance",
                          {"mission-performance-ID": "mission-perf-1", "performance-metric": value})

    def _act_UVF_Manager(self, a):
        while a.mailbox:
            msg = a.mailbox.popleft()
            if msg.schema == "UV-Discovery-Request":
                ready = [uid for _, uid in self.config.roster if self.agents[uid].state == "Uncontrolled"]
                self.send(a.id, "MCC", "UV-List",
                          {"list-ID": "uv-list-1", "uv-IDs": ",".join(ready), "uv-count": len(ready)})
            elif msg.schema == "Fleet-Plan":
                self.write(a, fleetPlan=msg.content["plan-ID"])
                for cls, uid in self.config.roster:
                    self.send(a.id, uid, "UV-Task",
                              {"task-ID": f"task-{uid.lower()}", "description": f"{cls} mission leg", "status": "assigned"})
            elif msg.schema == "UV-Performance":
                self.pending_perf[msg.sender] = msg.content["performance-metric"]
                if len(self.pending_perf) == len(self.config.roster):
                    values = [self.pending_perf[uid] for _, uid in self.config.roster]
                    fleet = AGGREGATORS[self.config.aggregation](values)
                    self.write(a, fleetPerformance=fleet)
                    self.send(a.id, "MCC", "Fleet-Performance",
                              {"Fleet-Performance-ID": "fleet-perf-1", "performance-metric": fleet})

    def _act_uv(self, uv):
        if self.tick == 0:
            self.fire(uv, "power-on")
            if uv.id in self.config.unavailable:
                self.fire(uv, "failure")
                self.write(uv, status="Unavailable")
            else:
                self.fire(uv, "configure-complete")
                self.write(uv, status="Idle")
        while uv.mailbox:
            msg = uv.mailbox.popleft()
            if msg.schema != "UV-Task":
                continue
            moved = self.fire(uv, "assign-mission")
            if isinstance(moved, Rejection):
                self.notes.append(f"{uv.id}: {moved}")
                continue
            before = dict(uv.attrs)
            after = {**before, "status": "Active", "task": msg.content["task-ID"]}
            broken = check_transition_contract(self.constraints, "receiveTask", before, after, context="UV")
            if broken:
                raise ConstraintViolationError(broken)
            self.write(uv, status="Active", task=msg.content["task-ID"])
            self.timers[uv.id] = self.tick + self.durations[uv.id]
        if self.timers.get(uv.id) == self.tick:
            del self.timers[uv.id]
            perf = self.config.performance.draw(self.rng)
            self.write(uv, performance=perf)
            self.fire(uv, "mission-complete")
            self.write(uv, status="Idle")
            self.send(uv.id, "UVF-Manager", "UV-Performance",
                      {"UV-performance-ID": f"perf-{uv.id.lower()}", "performance-metric": perf})

    # loop

    def run(self):
        for tick in range(self.config.max_ticks):
            self.tick = tick
            inbound, self.outbox = self.outbox, []
            for msg in inbound:
                self.agents[msg.receiver].mailbox.append(msg)
            for aid in self.order:
                self.act(self.agents[aid])
            if self.done:
                return
            if not self.outbox and not self.timers and not any(a.mailbox for a in self.agents.values()):
                detail = "; ".join(self.notes) or "no pending work"
                raise DeadlockError(f"tick {tick}: no agent can act and the mission is incomplete ({detail})")
        raise DeadlockError(f"mission incomplete after {self.config.max_ticks} ticks")

    def store(self) -> InstanceStore:
        st = InstanceStore()
        for aid in self.order:
            a = self.agents[aid]
            st.instances.setdefault(a.cls, []).append(Instance(a.id, a.cls, dict(a.attrs)))
        st.link("Operator.mcc", "Operator", "MCC")
        st.link("MCC.manager", "MCC", "UVF-Manager")
        for _, uid in self.config.roster:
            st.link("UVF-Manager.uvs", "UVF-Manager", uid)
        return st


@dataclass(frozen=True)
class MissionResult:
    trace: Trace
    store: InstanceStore
    states: dict
    fleet_performance: float


def run_mission(
    model: UmlModel, registry: OntologyRegistry, constraints: list[Constraint], config: SimConfig
) -> tuple[Trace, InstanceStore]:
    result = simulate(model, registry, constraints, config)
    return result.trace, result.store


def simulate(model: UmlModel, registry: OntologyRegistry, constraints: list[Constraint], config: SimConfig) -> MissionResult:
    """Run the mission and return trace, final store, UV states and the fleet figure."""
    mission = _Mission(model, registry, constraints, config)
    mission.run()
    store = mission.store()
    broken = check_invariants(model, store, constraints)
    if broken:
        raise ConstraintViolationError(broken)
    trace = Trace(tuple(mission.events), config.roster, config.seed, config.run_label)
    states = {uid: mission.agents[uid].state for _, uid in config.roster}
    fleet = mission.agents["UVF-Manager"].attrs["fleetPerformance"]
    return MissionResult(trace, store, states, fleet)
