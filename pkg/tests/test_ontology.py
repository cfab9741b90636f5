from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from agilemdd.errors import OntologyError, UnknownSchemaError
from agilemdd.model import RelationKind
from agilemdd.ontology import (
    AgentMessage, PredicateName, check_action, check_predicate_consistency, load_ontology, register_ontology,
    validate_message,
)

CORE = ["Mission-Brief", "Fleet-Plan", "UV-Task", "UV-Performance", "Fleet-Performance", "Mission-Performance"]

WELL_FORMED = {
    "Mission-Brief": {"mission-ID": "m-1", "description": "patrol", "status": "new"},
    "Fleet-Plan": {"plan-ID": "p-1", "description": "split", "status": "planned"},
    "UV-Task": {"task-ID": "t-1", "description": "survey", "status": "assigned"},
    "UV-Performance": {"UV-performance-ID": "p1", "performance-metric": 88},
    "Fleet-Performance": {"Fleet-Performance-ID": "f1", "performance-metric": 90.5},
    "Mission-Performance": {"mission-performance-ID": "mp1", "performance-metric": 0},
}


def msg(schema, content, action="send"):
    return AgentMessage("A", "B", action, schema, content)


def test_core_registry_counts(fixtures):
    reg = load_ontology([fixtures / "ontology" / "uvf.onto"])
    assert sorted(reg.concepts) == sorted(CORE)
    assert len(reg.predicates) == 4
    assert sorted(reg.actions) == ["receive", "send"]


def test_discovery_extends(registry):
    assert {"UV-Discovery-Request", "UV-List"} <= set(registry.concepts)
    assert "UV-List" in registry.actions["send"].payloads


@pytest.mark.parametrize("schema", CORE)
def test_well_formed_messages(registry, schema):
    m = msg(schema, WELL_FORMED[schema])
    assert validate_message(registry, m) == []
    assert check_action(registry, m) == []


@pytest.mark.parametrize("schema", CORE)
def test_missing_required_field(registry, schema):
    content = dict(WELL_FORMED[schema])
    content.pop(next(iter(content)))
    (v,) = validate_message(registry, msg(schema, content))
    assert v.kind == "missing-required-field"


@pytest.mark.parametrize("schema", CORE)
def test_extra_field(registry, schema):
    (v,) = validate_message(registry, msg(schema, {**WELL_FORMED[schema], "priority": "high"}))
    assert v.kind == "undeclared-field"


def test_mission_brief_missing_status(registry):
    (v,) = validate_message(registry, msg("Mission-Brief", {"mission-ID": "m-1", "description": "patrol"}))
    assert v.kind == "missing-required-field" and v.constraint_id == "Mission-Brief.status"


def test_metric_must_be_number(registry):
    (v,) = validate_message(registry, msg("UV-Performance", {"UV-performance-ID": "p1", "performance-metric": "high"}))
    assert v.kind == "type-mismatch"


def test_metric_range(registry):
    (v,) = validate_message(registry, msg("UV-Performance", {"UV-performance-ID": "p1", "performance-metric": 101}))
    assert v.kind == "out-of-range"


def test_status_enum(registry):
    (v,) = validate_message(registry, msg("UV-Task", {**WELL_FORMED["UV-Task"], "status": "bored"}))
    assert v.kind == "type-mismatch"


def test_unknown_schema(registry):
    with pytest.raises(UnknownSchemaError):
        validate_message(registry, msg("Weather-Report", {}))


def test_action_payload(registry):
    (v,) = check_action(registry, msg("Mission-Brief", WELL_FORMED["Mission-Brief"], action="broadcast"))
    assert v.kind == "action-payload"


def test_duplicate_schema():
    text = "concept Mission-Brief {\n  mission-ID: string required\n}\n" * 2
    with pytest.raises(OntologyError) as err:
        register_ontology(text)
    assert err.value.reason == "duplicate-schema"


def test_unknown_payload():
    with pytest.raises(OntologyError) as err:
        register_ontology("action send(payload=Weather-Report)")
    assert err.value.reason == "unknown-payload"


def test_concept_needs_identifier():
    with pytest.raises(OntologyError) as err:
        register_ontology("concept Note {\n  text: string required\n}")
    assert err.value.reason == "missing-identifier"


def test_predicates_consistent_with_model(registry, model):
    assert check_predicate_consistency(registry, model) == []


def test_false_assertion(registry, model):
    reg = register_ontology("assert USV is-a Operator", base=registry)
    (v,) = check_predicate_consistency(reg, model)
    assert v.kind == "asserted-not-modeled"


def test_removed_inheritance_edge(registry, model):
    rels = tuple(r for r in model.relationships
                 if not (r.kind is RelationKind.INHERITANCE and r.source == "UAV"))
    (v,) = check_predicate_consistency(registry, replace(model, relationships=rels))
    assert v.constraint_id == "predicate.is-a" and v.subject == "UAV is-a UV"


def test_unstated_model_edge(registry, model):
    trimmed = replace(registry, assertions=tuple(
        a for a in registry.assertions if a.predicate is not PredicateName.OWNS))
    (v,) = check_predicate_consistency(trimmed, model)
    assert v.kind == "modeled-not-asserted"


def test_registry_dump_is_stable(registry, fixtures):
    again = load_ontology([fixtures / "ontology" / "uvf.onto", fixtures / "ontology" / "discovery.onto"])
    assert again.dumps() == registry.dumps()


@settings(max_examples=200)
@given(st.dictionaries(st.sampled_from(["mission-ID", "description", "status", "x", "y"]),
                       st.one_of(st.text(max_size=5), st.integers(-5, 200), st.sampled_from(["new", "failed"])),
                       max_size=5))
def test_validate_iff_oracle(registry, content):
    """Independent re-statement of the schema: required ids, string types, enum, no extras."""
    statuses = {"new", "planned", "assigned", "active", "completed", "failed"}
    ok = (
        set(content) == {"mission-ID", "description", "status"}
        and isinstance(content["mission-ID"], str) and isinstance(content["description"], str)
        and content["status"] in statuses
    )
    assert (validate_message(registry, msg("Mission-Brief", content)) == []) == ok


@settings(max_examples=200)
@given(st.text(max_size=200))
def test_register_fuzz(text):
    try:
        register_ontology(text)
    except OntologyError:
        pass
