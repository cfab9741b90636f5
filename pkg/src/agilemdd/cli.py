"""Command line entry point: ``agilemdd <command>``.

Exit codes: 0 success, 1 violations or a failed verdict, 2 usage or
configuration errors. Every command accepts ``--format json``.
"""
from __future__ import annotations

import argparse
import json
import sys
import tempfile
import time
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

from . import codegen, complexity, conformance, constraints, ontology, plantuml, simulator
from .errors import InvalidLayerError, MddError
from .model import dumps as dump_model

OK, FAILED, USAGE = 0, 1, 2


def fixtures_dir() -> Path:
    return Path(str(resources.files("agilemdd").joinpath("fixtures")))


def resolve(path) -> Path:
    """A path as given, else the same relative path under the bundled fixtures."""
    p = Path(path)
    if p.exists():
        return p
    for base in (fixtures_dir(), fixtures_dir() / "graphs"):
        if (base / p).exists():
            return base / p
    raise FileNotFoundError(f"no such file: {path}")


def default_model() -> list[Path]:
    return sorted((fixtures_dir() / "model").glob("*.puml"))


def default_ontology() -> list[Path]:
    d = fixtures_dir() / "ontology"
    return [d / "uvf.onto", d / "discovery.onto"]


def default_constraints() -> Path:
    return fixtures_dir() / "constraints" / "uvf.ocl"


class UsageError(Exception):
    pass


# -- output -------------------------------------------------------------------------------


def emit(args, doc: dict, text: str):
    if args.format == "json":
        print(json.dumps(doc, indent=2, sort_keys=True))
    else:
        sys.stdout.write(text if text.endswith("\n") or not text else text + "\n")


def _diag(d) -> dict:
    return {"path": d.path, "line": d.line, "column": d.column, "severity": d.severity,
            "reason": d.reason, "message": d.message}


def _defect(d) -> dict:
    return {"location": d.location, "reason": d.reason, "message": d.message}


def _layer_items(exc: InvalidLayerError) -> list:
    out = []
    for d in exc.diagnostics:
        if hasattr(d, "to_dict"):
            out.append(d.to_dict())
        elif hasattr(d, "severity"):
            out.append(_diag(d))
        elif hasattr(d, "location"):
            out.append(_defect(d))
        else:
            out.append({"message": str(d)})
    return out


# -- shared loading -----------------------------------------------------------------------


def load_layers(args):
    model_paths = [resolve(p) for p in args.model] if args.model else default_model()
    model, diags = plantuml.load_model(model_paths)
    return model, diags


def load_registry(args) -> ontology.OntologyRegistry:
    paths = [resolve(p) for p in args.ontology] if args.ontology else default_ontology()
    return ontology.load_ontology(paths)


def load_constraint_set(args):
    path = resolve(args.constraints) if args.constraints else default_constraints()
    return constraints.load_constraints(path)


def sim_config(args) -> simulator.SimConfig:
    if args.config:
        cfg = simulator.SimConfig.load(resolve(args.config), seed=args.seed)
    else:
        if args.seed is None:
            raise UsageError("--seed is required without --config")
        cfg = simulator.SimConfig(seed=args.seed)
    if args.roster_size is not None:
        if args.roster_size < 1:
            raise UsageError("--roster-size must be >= 1")
        cfg = replace(cfg, roster=simulator.default_roster(args.roster_size))
    if args.no_discovery:
        cfg = replace(cfg, discovery=False)
    if args.run_label:
        cfg = replace(cfg, run_label=args.run_label)
    return cfg


# -- commands ---------------------------------------------------------------------------------


def cmd_parse(args) -> int:
    model, diags = load_layers(args)
    if args.emit_model:
        text = dump_model(model)
        if args.emit_model == "-":
            sys.stdout.write(text)
        else:
            Path(args.emit_model).write_text(text, encoding="utf-8")
    summary = {
        "classes": len(model.classes),
        "relationships": len(model.relationships),
        "state_machines": len(model.state_machines),
        "activity_nodes": len(model.activity.nodes) if model.activity else 0,
    }
    code = FAILED if plantuml.has_errors(diags) else OK
    lines = [f"{k}: {v}" for k, v in summary.items()] + [str(d) for d in diags]
    if args.emit_model != "-":
        emit(args, {"command": "parse", "exit_code": code, "summary": summary,
                    "diagnostics": [_diag(d) for d in diags]}, "\n".join(lines))
    return code


def cmd_check(args) -> int:
    model, diags = load_layers(args)
    cons, cdiags = load_constraint_set(args)
    cdiags += constraints.validate_constraints(model, cons, str(args.constraints or default_constraints().name))
    defects = constraints.reconcile_cardinality(model, cons)
    violations = []
    if args.instances:
        store = constraints.InstanceStore.load(resolve(args.instances))
        defects += store.validate(model)
        violations += constraints.check_invariants(model, store, cons)
    registry = load_registry(args)
    violations += ontology.check_predicate_consistency(registry, model)
    if args.messages:
        for raw in json.loads(resolve(args.messages).read_text(encoding="utf-8")):
            msg = ontology.AgentMessage(raw["sender"], raw["receiver"], raw.get("action", "send"), raw["schema"],
                                        raw.get("content", {}), raw.get("seq", 0))
            violations += ontology.validate_message(registry, msg)
    rules = constraints.CodeQualityRuleSet(
        space_per_indent=args.space_per_indent, max_line_length=args.max_line_length,
        max_function_length=args.max_function_length,
    )
    for path in args.code or []:
        p = resolve(path)
        violations += constraints.check_code_quality(p.read_text(encoding="utf-8"), rules, str(path))
    violations = constraints.sort_violations(violations)
    problems = plantuml.has_errors(diags) or plantuml.has_errors(cdiags) or defects or violations
    code = FAILED if problems else OK
    doc = {
        "command": "check", "exit_code": code,
        "diagnostics": [_diag(d) for d in diags + cdiags],
        "defects": [_defect(d) for d in defects],
        "violations": [v.to_dict() for v in violations],
        "constraints": len(cons), "concepts": len(registry.concepts),
    }
    lines = [str(d) for d in diags + cdiags] + [str(d) for d in defects] + [str(v) for v in violations]
    lines.append(f"{len(violations)} violation(s), {len(defects)} defect(s)")
    emit(args, doc, "\n".join(lines))
    return code


def _bundle(args) -> codegen.PromptBundle:
    model_paths = [resolve(p) for p in args.model] if args.model else default_model()
    cons = resolve(args.constraints) if args.constraints else default_constraints()
    onto = [resolve(p) for p in args.ontology] if args.ontology else default_ontology()
    return codegen.assemble_prompt(model_paths, cons, onto, args.target)


def _backend(args) -> codegen.BackendConfig:
    if args.backend == "offline":
        return codegen.BackendConfig("offline_template")
    return codegen.BackendConfig(
        "http_llm", endpoint=args.endpoint, model=args.llm_model, token_env=args.token_env,
        timeout=args.timeout, max_retries=args.retries,
    )


def cmd_generate(args) -> int:
    bundle = _bundle(args)
    if args.prompt_out:
        Path(args.prompt_out).write_text(bundle.render(), encoding="utf-8")
    artifact = codegen.generate(bundle, _backend(args))
    out = Path(args.out)
    written = artifact.write(out)
    audit = codegen.audit_artifact(artifact)
    code = FAILED if audit else OK
    doc = {"command": "generate", "exit_code": code, "manifest": artifact.manifest(),
           "written": [str(p) for p in written], "audit": [v.to_dict() for v in audit]}
    lines = [f"digest {bundle.digest}"] + [f"wrote {p}" for p in written] + [str(v) for v in audit]
    emit(args, doc, "\n".join(lines))
    return code


def cmd_analyze(args) -> int:
    inputs = []
    for g in args.graph or []:
        inputs.append((str(g), complexity.build_cfg_from_graphfile(resolve(g))))
    if args.source:
        profile = complexity.get_profile(args.profile, args.count_boolean_ops)
        files = {}
        for src in args.source:
            p = resolve(src)
            paths = sorted(x for x in p.rglob("*") if x.suffix in profile.extensions) if p.is_dir() else [p]
            files.update({str(x): x.read_text(encoding="utf-8") for x in paths})
        inputs.append((" ".join(args.source), complexity.build_cfg_from_source(files, profile)))
    if not inputs:
        raise UsageError("analyze needs --graph or --source")
    reports = [(name, complexity.report(cfgs)) for name, cfgs in inputs]
    doc = {"command": "analyze", "exit_code": OK,
           "reports": [{"input": name, **rep.to_dict()} for name, rep in reports]}
    if len(reports) == 1:
        text = reports[0][1].to_text()
    else:
        text = "\n".join(f"# {name}\n{rep.to_text()}" for name, rep in reports)
    emit(args, doc, text)
    return OK


def _sim_inputs(args):
    model, diags = load_layers(args)
    if plantuml.has_errors(diags):
        raise InvalidLayerError("structural", diags)
    cons, cdiags = load_constraint_set(args)
    if plantuml.has_errors(cdiags):
        raise InvalidLayerError("constraints", cdiags)
    return model, load_registry(args), cons


def cmd_simulate(args) -> int:
    model, registry, cons = _sim_inputs(args)
    cfg = sim_config(args)
    result = simulator.simulate(model, registry, cons, cfg)
    trace = result.trace
    if args.trace_out:
        Path(args.trace_out).write_text(trace.to_json(), encoding="utf-8")
    if args.sequence_out:
        Path(args.sequence_out).write_text(trace.to_plantuml(), encoding="utf-8")
    doc = {"command": "simulate", "exit_code": OK, "config": cfg.to_dict(), "trace": trace.to_dict(),
           "fleet_performance": result.fleet_performance, "uv_states": result.states}
    emit(args, doc, trace.to_text())
    return OK


def cmd_conform(args) -> int:
    model, registry, _ = _sim_inputs(args)
    trace = simulator.Trace.from_json(resolve(args.trace).read_text(encoding="utf-8"))
    roster = trace.roster or simulator.SimConfig(seed=0).roster
    flow = conformance.expected_flow(model, roster, discovery=not args.no_discovery)
    result = conformance.check_conformance(trace, flow, args.mode, registry)
    code = OK if result.passed else FAILED
    lines = [f"{result.mode}: {result.verdict} ({len(trace)} events)"] + [str(m) for m in result.mismatches]
    emit(args, {"command": "conform", "exit_code": code, "events": len(trace), **result.to_dict()}, "\n".join(lines))
    return code


# -- pipeline ------------------------------------------------------------------------------


@dataclass
class StageResult:
    name: str
    status: str = "skipped"  # ok | failed | skipped
    duration: float = 0.0
    artifacts: list = field(default_factory=list)
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"stage": self.name, "status": self.status, "duration": round(self.duration, 6),
                "artifacts": self.artifacts, "detail": self.detail}


STAGES = ("parse", "constrain", "ontology", "generate", "analyze", "simulate", "conform")


def run_pipeline(args, out: Path) -> tuple[list[StageResult], int]:
    """Run every stage in order. After a failure later stages are skipped,
    except analyze and simulate which fall back to bundled fixtures."""
    results = {name: StageResult(name) for name in STAGES}
    state: dict = {}
    failed = False

    def stage(name, fn, independent=False):
        nonlocal failed
        r = results[name]
        if failed and not independent:
            return
        t0 = time.perf_counter()
        try:
            status, detail, artifacts = fn(failed)
            r.status, r.detail, r.artifacts = status, detail, artifacts
        except (MddError, OSError, ValueError) as exc:
            r.status, r.detail = "failed", {"error": f"{type(exc).__name__}: {exc}"}
        r.duration = time.perf_counter() - t0
        if r.status == "failed":
            failed = True

    def parse(_):
        model, diags = load_layers(args)
        state["model"] = model
        bad = plantuml.has_errors(diags)
        return ("failed" if bad else "ok"), {"classes": len(model.classes),
                                             "diagnostics": [_diag(d) for d in diags]}, []

    def constrain(_):
        cons, diags = load_constraint_set(args)
        diags += constraints.validate_constraints(state["model"], cons)
        defects = constraints.reconcile_cardinality(state["model"], cons)
        state["constraints"] = cons
        bad = plantuml.has_errors(diags) or defects
        return ("failed" if bad else "ok"), {"constraints": len(cons), "defects": [_defect(d) for d in defects]}, []

    def onto(_):
        reg = load_registry(args)
        state["registry"] = reg
        v = ontology.check_predicate_consistency(reg, state["model"])
        return ("failed" if v else "ok"), {"concepts": len(reg.concepts), "violations": [x.to_dict() for x in v]}, []

    def generate(_):
        bundle = _bundle(args)
        artifact = codegen.generate(bundle, _backend(args))
        written = artifact.write(out / "generated")
        audit = codegen.audit_artifact(artifact)
        state["artifact"] = artifact
        detail = {"digest": bundle.digest, "files": [p for p, _ in artifact.files],
                  "audit": [v.to_dict() for v in audit]}
        return ("failed" if audit else "ok"), detail, [str(p) for p in written]

    def analyze(fallback):
        if fallback or "artifact" not in state:
            cfgs = complexity.build_cfg_from_graphfile(fixtures_dir() / "graphs" / "tables" / "table2.cfg.json")
            source = "fixture:tables/table2.cfg.json"
        else:
            cfgs = complexity.build_cfg_from_source(dict(state["artifact"].files), "pyagent")
            source = "generated"
        rep = complexity.report(cfgs)
        path = out / "complexity.json"
        path.write_text(rep.to_json(), encoding="utf-8")
        return "ok", {"source": source, **rep.to_dict()}, [str(path)]

    def simulate(fallback):
        if fallback or not {"model", "registry", "constraints"} <= state.keys():
            model, _ = plantuml.load_model(default_model())
            reg = ontology.load_ontology(default_ontology())
            cons, _ = constraints.load_constraints(default_constraints())
        else:
            model, reg, cons = state["model"], state["registry"], state["constraints"]
        cfg = sim_config(args)
        result = simulator.simulate(model, reg, cons, cfg)
        state["trace"], state["sim"] = result.trace, (model, reg, cfg)
        tpath, spath = out / "trace.json", out / "trace.puml"
        tpath.write_text(result.trace.to_json(), encoding="utf-8")
        spath.write_text(result.trace.to_plantuml(), encoding="utf-8")
        return "ok", {"events": len(result.trace), "fleet_performance": result.fleet_performance}, [str(tpath), str(spath)]

    def conform(_):
        if "trace" not in state:
            raise MddError("no trace to check")
        model, reg, cfg = state["sim"]
        flow = conformance.expected_flow(model, cfg.roster, discovery=cfg.discovery)
        res = conformance.check_conformance(state["trace"], flow, args.mode or cfg.conformance_mode, reg)
        return ("ok" if res.passed else "failed"), res.to_dict(), []

    stage("parse", parse)
    stage("constrain", constrain)
    stage("ontology", onto)
    stage("generate", generate)
    stage("analyze", analyze, independent=True)
    stage("simulate", simulate, independent=True)
    stage("conform", conform, independent=bool(state.get("trace")))
    ordered = [results[n] for n in STAGES]
    code = FAILED if any(r.status == "failed" for r in ordered) else OK
    return ordered, code


def cmd_pipeline(args) -> int:
    if args.seed is None and not args.config:
        raise UsageError("--seed is required without --config")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        stages, code = run_pipeline(args, out)
    else:
        with tempfile.TemporaryDirectory(prefix="agilemdd-") as tmp:
            stages, code = run_pipeline(args, Path(tmp))
    record = {"command": "pipeline", "exit_code": code, "stages": [s.to_dict() for s in stages]}
    if args.out:
        (Path(args.out) / "run_record.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    lines = [f"{s.name:<10} {s.status:<8} {s.duration * 1000:8.1f} ms" for s in stages]
    lines.append(f"exit {code}")
    emit(args, record, "\n".join(lines))
    return code


# -- argument parsing ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="agilemdd", description="Layered UML models to checked, generated and simulated agents.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, layers=True):
        p.add_argument("--format", choices=("text", "json"), default="text")
        if layers:
            p.add_argument("--model", nargs="+", help="PlantUML sources (default: bundled fleet model)")
            p.add_argument("--constraints", help="OCL constraint file")
            p.add_argument("--ontology", nargs="+", help="ontology definition files, in registration order")

    def sim_flags(p):
        p.add_argument("--seed", type=int)
        p.add_argument("--config", help="SimConfig as JSON or TOML")
        p.add_argument("--roster-size", type=int)
        p.add_argument("--run-label", default="")
        p.add_argument("--no-discovery", action="store_true")

    def gen_flags(p):
        p.add_argument("--backend", choices=("offline", "http"), default="offline")
        p.add_argument("--target", default="python-agents")
        p.add_argument("--endpoint")
        p.add_argument("--llm-model", default="gpt-4")
        p.add_argument("--token-env", default="AGILEMDD_LLM_TOKEN")
        p.add_argument("--timeout", type=float, default=120.0)
        p.add_argument("--retries", type=int, default=2)

    p = sub.add_parser("parse", help="parse and validate the model")
    common(p)
    p.add_argument("--emit-model", help="write the canonical model JSON ('-' for stdout)")
    p.set_defaults(fn=cmd_parse)

    p = sub.add_parser("check", help="constraints, instance data and ontology")
    common(p)
    p.add_argument("--instances", help="instance store JSON")
    p.add_argument("--messages", help="JSON list of agent messages to validate")
    p.add_argument("--code", nargs="+", help="source files for the code-quality rules")
    p.add_argument("--space-per-indent", type=int, default=4)
    p.add_argument("--max-line-length", type=int, default=120)
    p.add_argument("--max-function-length", type=int, default=60)
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("generate", help="assemble the prompt and generate code")
    common(p)
    gen_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--prompt-out", help="also write the rendered prompt")
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("analyze", help="cyclomatic complexity report")
    common(p, layers=False)
    p.add_argument("--graph", nargs="+", help=".cfg.json graph files")
    p.add_argument("--source", nargs="+", help="source files or directories")
    p.add_argument("--profile", default="pyagent", help="language profile for --source")
    p.add_argument("--count-boolean-ops", action="store_true")
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("simulate", help="run the fleet mission")
    common(p)
    sim_flags(p)
    p.add_argument("--trace-out", help="write the trace as JSON")
    p.add_argument("--sequence-out", help="write the trace as a PlantUML sequence diagram")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("conform", help="check a trace against the activity flow")
    common(p)
    p.add_argument("--trace", required=True)
    p.add_argument("--mode", choices=("strict", "relaxed"), default="strict")
    p.add_argument("--no-discovery", action="store_true", help="expect the modeled flow without discovery")
    p.set_defaults(fn=cmd_conform)

    p = sub.add_parser("pipeline", help="all stages end to end")
    common(p)
    gen_flags(p)
    sim_flags(p)
    p.add_argument("--mode", choices=("strict", "relaxed"))
    p.add_argument("--out", help="keep outputs here (default: temporary directory)")
    p.set_defaults(fn=cmd_pipeline)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (UsageError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"agilemdd {args.command}: {exc}", file=sys.stderr)
        return USAGE
    except InvalidLayerError as exc:
        emit(args, {"command": args.command, "exit_code": USAGE, "layer": exc.layer, "diagnostics": _layer_items(exc)},
             str(exc))
        return USAGE
    except ValueError as exc:
        print(f"agilemdd {args.command}: invalid configuration: {exc}", file=sys.stderr)
        return USAGE
    except MddError as exc:
        emit(args, {"command": args.command, "exit_code": FAILED, "error": type(exc).__name__, "message": str(exc)},
             f"{type(exc).__name__}: {exc}")
        return FAILED
