import pytest
from hypothesis import given, settings, strategies as st

from agilemdd.cli import default_model
from agilemdd.errors import MddError, ModelMergeError, ParseError
from agilemdd.model import NodeKind, RelationKind, StateDef, StateMachine, Transition, Visibility, dumps
from agilemdd.plantuml import DiagramKind, SourceUnit, has_errors, load_model, load_units, parse_unit

from conftest import GOLDEN


def parse(text, kind=None):
    return parse_unit(SourceUnit.from_text(text, kind=kind))


def test_class_with_private_attribute():
    m, diags = parse("@startuml\nclass UV { -uvID : string }\n@enduml")
    assert not diags
    attr = m.cls("UV").attribute("uvID")
    assert attr.type == "string" and attr.visibility is Visibility.PRIVATE


def test_inheritance_arrow_direction():
    m, _ = parse("@startuml\nclass UV\nclass UAV\nUV <|-- UAV\n@enduml")
    (rel,) = m.relationships
    assert (rel.kind, rel.source, rel.target) == (RelationKind.INHERITANCE, "UAV", "UV")


def test_empty_input():
    with pytest.raises(ParseError, match="empty"):
        parse("")


def test_nested_state_initial():
    text = "@startuml X\n[*] --> Available\nstate Available {\n  state Unregistered\n}\n@enduml"
    m, _ = parse(text)
    sm = m.state_machines[0]
    assert sm.initial == "Available"
    assert sm.state("Unregistered").parent == "Available"


def test_missing_initial_state():
    with pytest.raises(ParseError, match=r"\[\*\]"):
        parse("@startuml\nstate A\nA --> B : go\n@enduml", DiagramKind.STATE)


def test_single_transition_trigger():
    text = "@startuml UV\n[*] --> Unregistered\nstate Unregistered\nstate Registered\nUnregistered --> Registered : configure\n@enduml"
    m, _ = parse(text)
    (t,) = m.state_machines[0].transitions
    assert (t.source, t.target, t.trigger) == ("Unregistered", "Registered", "configure")


def test_uv_state_fixture_golden(fixtures):
    """Expected tree written out by hand from the fixture file."""
    m, diags = parse_unit(SourceUnit.from_path(fixtures / "model" / "uv_state.puml"))
    assert not diags
    expected = StateMachine(
        owner="UV",
        states=(
            StateDef("Initial"),
            StateDef("Available", entry="Unregistered"),
            StateDef("Unregistered", parent="Available"),
            StateDef("Registered", parent="Available", entry="Uncontrolled"),
            StateDef("Uncontrolled", parent="Registered"),
            StateDef("Controlled", parent="Registered"),
            StateDef("Unavailable"),
        ),
        initial="Initial",
        transitions=(
            Transition("Initial", "Available", "power-on"),
            Transition("Unregistered", "Registered", "configure-complete"),
            Transition("Registered", "Unregistered", "deregister"),
            Transition("Uncontrolled", "Controlled", "assign-mission", "status = 'Idle'", "status := 'Active'"),
            Transition("Controlled", "Uncontrolled", "mission-complete", None, "status := 'Idle'"),
            Transition("Available", "Unavailable", "failure"),
            Transition("Unavailable", "Available", "recovered"),
        ),
    )
    assert m.state_machines == (expected,)


def test_swimlane_start_and_action():
    m, _ = parse("@startuml\n|Operator|\nstart\n:send Mission-Brief to MCC;\nstop\n@enduml")
    flow = m.activity
    start = next(n for n in flow.nodes if n.kind is NodeKind.START)
    (nxt,) = flow.successors(start.id)
    node = flow.node(nxt)
    assert node.kind is NodeKind.ACTION and node.actor == "Operator"


def test_fork_with_three_branches():
    text = "@startuml\nstart\nfork\n:send UV-task;\nfork again\n:send UV-task;\nfork again\n:send UV-task;\nend fork\nstop\n@enduml"
    m, _ = parse(text)
    kinds = [n.kind for n in m.activity.nodes]
    assert kinds.count(NodeKind.FORK) == 1
    assert kinds.count(NodeKind.JOIN) == 1
    assert kinds.count(NodeKind.ACTION) == 3


def test_unbalanced_if():
    with pytest.raises(ParseError, match="never closed"):
        parse("@startuml\nstart\nif (ok?) then\n:x;\n@enduml")


def test_unsupported_constructs_warn():
    m, diags = parse("@startuml\nskinparam monochrome true\nclass A\nnote left of A : hi\n@enduml")
    assert m.cls("A") is not None
    assert diags and all(d.severity == "warning" for d in diags)


def test_fixture_model_loads(model):
    assert len(model.classes) == 7


def test_duplicate_file_is_idempotent(model):
    paths = default_model()
    twice, diags = load_model(paths + paths[:1])
    assert twice == model and not has_errors(diags)


def test_conflicting_definitions_raise():
    a = SourceUnit.from_text("@startuml\nclass A { x : int }\n@enduml", "a.puml")
    b = SourceUnit.from_text("@startuml\nclass A { x : string }\n@enduml", "b.puml")
    with pytest.raises(ModelMergeError):
        load_units([a, b])


def test_unknown_class_surfaces_as_diagnostic():
    units = [SourceUnit.from_path(p) for p in default_model()]
    drone = SourceUnit.from_text("@startuml Drone\n[*] --> Idle\nstate Idle\n@enduml", "drone.puml")
    _, diags = load_units(units + [drone])
    assert [d.reason for d in diags if d.severity == "error"] == ["unknown-class"]


def test_golden_canonical_model(model):
    golden = GOLDEN / "uvf_model.json"
    assert dumps(model) == golden.read_text(encoding="utf-8")


_SNIPPETS = ["@startuml", "@enduml", "class A {", "}", "state S {", "[*] --> S", "A <|-- B", "start", "stop",
             "fork", "fork again", "end fork", "if (x) then", "else", "endif", "|L|", ":act;", "A --> B : t", "A \"1\" -- \"*\" B"]


@settings(max_examples=300, deadline=None)
@given(st.one_of(st.binary(max_size=300).map(lambda b: b.decode("latin-1")),
                 st.lists(st.sampled_from(_SNIPPETS), max_size=12).map("\n".join)))
def test_parser_never_crashes(text):
    try:
        _, diags = parse(text)
    except MddError:
        return
    assert all(d.line >= 1 for d in diags)
