import json
import logging

import networkx as nx
import pytest
from hypothesis import given, settings, strategies as st

from agilemdd.complexity import (
    ControlFlowGraph, RiskTier, build_cfg_from_graphfile, build_cfg_from_source, cfg_to_document,
    cfgs_from_document, classify, components, cyclomatic, function_spans, get_profile, heuristic_function_spans,
    report,
)
from agilemdd.errors import EmptyGraphError, GraphSchemaError, SourceParseError, UnsupportedDialectError


def graph_with(e, n, unit="u"):
    """A connected graph with exactly ``e`` edges on ``n`` nodes (chain plus self-free extras)."""
    nodes = [f"n{i}" for i in range(n)]
    edges = [(nodes[i], nodes[i + 1]) for i in range(n - 1)]
    extra = [(nodes[j], nodes[i]) for i in range(n) for j in range(i + 1, n) if (nodes[j], nodes[i]) not in edges]
    edges += extra[: e - len(edges)]
    assert len(edges) == e
    return ControlFlowGraph(unit, tuple(nodes), tuple(edges))


def nx_m(cfg):
    g = nx.MultiGraph()
    g.add_nodes_from(cfg.nodes)
    g.add_edges_from(cfg.edges)
    return len(cfg.edges) - len(cfg.nodes) + 2 * nx.number_connected_components(g)


@pytest.mark.parametrize("e,n,m", [(8, 8, 2), (23, 19, 6), (15, 13, 4), (12, 11, 3)])
def test_formula(e, n, m):
    assert cyclomatic(graph_with(e, n)) == (e, n, 1, m)


def test_single_node():
    assert cyclomatic(ControlFlowGraph("u", ("a",), ())).M == 1


def test_empty_graph():
    with pytest.raises(EmptyGraphError):
        cyclomatic(ControlFlowGraph("u", (), ()))


def test_example_fixture(fixtures):
    (cfg,) = build_cfg_from_graphfile(fixtures / "graphs" / "example.cfg.json")
    assert cyclomatic(cfg).M == 3


@pytest.mark.parametrize("m,tier", [(1, "low"), (6, "low"), (10, "low"), (11, "moderate"), (20, "moderate"),
                                    (21, "high"), (50, "high"), (51, "severe"), (400, "severe")])
def test_classify(m, tier):
    assert classify(m) is RiskTier(tier)


@pytest.mark.parametrize("m", [0, -3])
def test_classify_rejects(m):
    with pytest.raises(ValueError):
        classify(m)


@given(st.integers(1, 200), st.integers(1, 200))
def test_classify_monotone(a, b):
    if a <= b:
        assert classify(a).rank <= classify(b).rank


@pytest.mark.parametrize("name,ms,total", [("table1", [2, 4, 4, 2], 12), ("table2", [3, 5, 6, 3], 17)])
def test_table_fixtures(fixtures, name, ms, total):
    rep = report(build_cfg_from_graphfile(fixtures / "graphs" / "tables" / f"{name}.cfg.json"))
    assert [r.unit for r in rep.rows] == ["Operator", "MCC", "UVF-Manager", "UV"]
    assert [r.M for r in rep.rows] == ms
    assert rep.model_total_M == total
    assert all(r.P == 1 for r in rep.rows)


def test_report_singleton():
    assert report([ControlFlowGraph("x", ("a",), ())]).model_total_M == 1


def test_edge_to_missing_node():
    doc = {"units": [{"name": "u", "nodes": ["a", "b"], "edges": [["a", "b"], ["b", "c"]]}]}
    with pytest.raises(GraphSchemaError) as err:
        cfgs_from_document(doc)
    assert "$.units[0].edges[1][1]" in str(err.value)


@pytest.mark.parametrize("doc", [[], {"units": []}, {"units": [{"name": "u", "nodes": []}]},
                                 {"units": [{"name": "u", "nodes": ["a", "a"]}]},
                                 {"units": [{"name": "u", "nodes": ["a"], "edges": [["a"]]}]},
                                 {"units": [{"name": "", "nodes": ["a"]}]}])
def test_schema_errors(doc):
    with pytest.raises(GraphSchemaError):
        cfgs_from_document(doc)


def test_not_json(tmp_path):
    p = tmp_path / "bad.cfg.json"
    p.write_text("{")
    with pytest.raises(GraphSchemaError):
        build_cfg_from_graphfile(p)


def test_duplicate_edges_collapse(caplog):
    with caplog.at_level(logging.WARNING):
        cfg = ControlFlowGraph.build("u", ["a", "b"], [("a", "b"), ("a", "b")])
    assert cfg.edges == (("a", "b"),)
    assert "duplicate edge" in caplog.text


def test_document_roundtrip(fixtures):
    cfgs = build_cfg_from_graphfile(fixtures / "graphs" / "tables" / "table2.cfg.json")
    assert cfgs_from_document(json.loads(json.dumps(cfg_to_document(cfgs)))) == cfgs


@st.composite
def random_graphs(draw, max_nodes=25):
    n = draw(st.integers(1, max_nodes))
    nodes = [f"v{i}" for i in range(n)]
    pairs = st.tuples(st.integers(0, n - 1), st.integers(0, n - 1))
    raw = draw(st.lists(pairs, max_size=3 * n, unique=True))
    return ControlFlowGraph("g", tuple(nodes), tuple((nodes[a], nodes[b]) for a, b in raw))


@settings(max_examples=300)
@given(random_graphs())
def test_components_match_networkx(cfg):
    r = cyclomatic(cfg)
    assert r.M == nx_m(cfg)
    assert r.M == r.E - r.N + 2 * r.P
    g = nx.Graph()
    g.add_nodes_from(cfg.nodes)
    g.add_edges_from(cfg.edges)
    assert sorted(sorted(c) for c in components(cfg)) == sorted(sorted(c) for c in nx.connected_components(g))


@settings(max_examples=200)
@given(random_graphs(), st.data())
def test_edge_add_and_pendant(cfg, data):
    base = cyclomatic(cfg).M
    a = data.draw(st.sampled_from(cfg.nodes))
    b = data.draw(st.sampled_from([v for v in cfg.nodes if v in _component_of(cfg, a)]))
    if (a, b) not in cfg.edges:
        more = ControlFlowGraph("g", cfg.nodes, cfg.edges + ((a, b),))
        assert cyclomatic(more).M == base + 1
    pendant = ControlFlowGraph("g", cfg.nodes + ("fresh",), cfg.edges + ((a, "fresh"),))
    assert cyclomatic(pendant).M == base


def _component_of(cfg, v):
    return next(c for c in components(cfg) if v in c)


# source extraction

STRAIGHT = '''
class A:
    AGENT = "Alpha"

    def run(self):
        x = 1
        y = x + 1
        return y
'''

IF_ELSE = '''
class B:
    def run(self, x):
        if x:
            y = 1
        else:
            y = 2
        return y
'''


def only(files, profile="pyagent"):
    (cfg,) = build_cfg_from_source(files, profile)
    return cfg


def test_straight_line():
    cfg = only({"a.py": STRAIGHT})
    assert cfg.unit == "Alpha"
    assert cyclomatic(cfg).M == 1


def test_if_else_matches_path_count():
    cfg = only({"b.py": IF_ELSE})
    assert cyclomatic(cfg).M == 2
    g = nx.DiGraph(list(cfg.edges))
    sources = [v for v in g if g.in_degree(v) == 0]
    sinks = [v for v in g if g.out_degree(v) == 0]
    paths = sum(1 for s in sources for t in sinks for _ in nx.all_simple_paths(g, s, t))
    assert paths == 2


def test_methods_add_up():
    # two methods: one if, one while, plus one dispatch choice between the methods
    src = IF_ELSE.replace("return y", "return y\n\n    def other(self, z):\n        while z:\n            z -= 1\n        return z")
    cfg = only({"c.py": src})
    assert cfg.decisions == 3
    assert cyclomatic(cfg).M == 4


def test_loose_functions_named_after_file():
    cfg = only({"pkg/helpers.py": "def f(x):\n    if x:\n        return 1\n    return 0\n"})
    assert cfg.unit == "helpers" and cyclomatic(cfg).M == 2


def test_boolean_operators_optional():
    src = "class C:\n    def f(self, a, b):\n        if a and b:\n            return 1\n        return 0\n"
    assert cyclomatic(only({"c.py": src})).M == 2
    assert cyclomatic(only({"c.py": src}, get_profile("pyagent", count_boolean_ops=True))).M == 3


JAVA = '''
public class Mcc {
    public void handle(int x) {
        if (x > 0) {
            send(x);
        } else if (x < -5) {
            drop();
        }
        for (int i = 0; i < x; i++) {
            tick();
        }
        switch (x) {
            case 1: a(); break;
            case 2: b(); break;
            default: c();
        }
    }
}
'''


def test_brace_profile():
    cfg = only({"Mcc.java": JAVA}, "brace")
    assert cfg.unit == "Mcc"
    assert cyclomatic(cfg).M == 1 + 2 + 1 + 2


def test_unsupported_dialect():
    with pytest.raises(UnsupportedDialectError):
        get_profile("cobol")


def test_source_syntax_error():
    with pytest.raises(SourceParseError):
        build_cfg_from_source({"x.py": "class A:\n    def f(:\n"}, "pyagent")


def test_function_spans():
    assert function_spans(IF_ELSE, "b.py") == [("run", 3, 8)]
    assert function_spans("x", "b.txt") is None
    assert heuristic_function_spans(IF_ELSE) == [("run", 3, 8)]


_STMTS = ["x = 1", "return x", "if a:", "elif b:", "else:", "while c:", "for i in d:", "try:", "except E:"]


@st.composite
def py_methods(draw, depth=0):
    """A random well-formed method body; returns (lines, decision count)."""
    lines, decisions = [], 0
    for _ in range(draw(st.integers(1, 3))):
        kind = draw(st.sampled_from(["simple", "if", "loop", "try"] if depth < 3 else ["simple"]))
        if kind == "simple":
            lines.append("x = 1")
            continue
        inner, d = draw(py_methods(depth + 1))
        block = ["    " + ln for ln in inner]
        if kind == "if":
            lines += ["if a:", *block]
            decisions += 1 + d
            if draw(st.booleans()):
                inner2, d2 = draw(py_methods(depth + 1))
                lines += ["elif b:", *("    " + ln for ln in inner2)]
                decisions += 1 + d2
            if draw(st.booleans()):
                inner3, d3 = draw(py_methods(depth + 1))
                lines += ["else:", *("    " + ln for ln in inner3)]
                decisions += d3
        elif kind == "loop":
            lines += [draw(st.sampled_from(["while c:", "for i in d:"])), *block]
            decisions += 1 + d
        else:
            inner2, d2 = draw(py_methods(depth + 1))
            lines += ["try:", *block, "except E:", *("    " + ln for ln in inner2)]
            decisions += 1 + d + d2
    return lines, decisions


@settings(max_examples=150, deadline=None)
@given(st.lists(py_methods(), min_size=1, max_size=3))
def test_extractor_decisions_plus_one(methods):
    src = ["class R:"]
    for k, (body, _) in enumerate(methods):
        src += [f"    def m{k}(self):"] + ["        " + ln for ln in body]
    cfg = only({"r.py": "\n".join(src) + "\n"})
    r = cyclomatic(cfg)
    assert r.P == 1
    # every method beyond the first is one more way through the class
    assert cfg.decisions == sum(d for _, d in methods) + len(methods) - 1
    assert r.M == cfg.decisions + 1


@pytest.mark.parametrize("name,en", [
    ("table1", [(8, 8), (15, 13), (16, 14), (8, 8)]),
    ("table2", [(12, 11), (22, 19), (23, 19), (12, 11)]),
])
def test_table_fixture_sizes(fixtures, name, en):
    rep = report(build_cfg_from_graphfile(fixtures / "graphs" / "tables" / f"{name}.cfg.json"))
    assert [(r.E, r.N) for r in rep.rows] == en
