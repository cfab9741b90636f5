"""Layered UML models for multi-agent systems: parse, constrain, generate,
measure and simulate."""
from .errors import MddError
from .model import UmlModel
from .plantuml import load_model, load_units
from .constraints import InstanceStore, check_invariants, load_constraints
from .ontology import OntologyRegistry, load_ontology, register_ontology, validate_message
from .complexity import ControlFlowGraph, RiskTier, build_cfg_from_graphfile, build_cfg_from_source, classify
from .simulator import SimConfig, Trace, simulate
from .conformance import check_conformance, expected_flow
from .codegen import BackendConfig, PromptBundle, assemble_prompt, generate

__version__ = "0.1.0"

__all__ = [
    "MddError", "UmlModel", "load_model", "load_units", "InstanceStore", "check_invariants",
    "load_constraints", "OntologyRegistry", "load_ontology", "register_ontology", "validate_message",
    "ControlFlowGraph", "RiskTier", "build_cfg_from_graphfile", "build_cfg_from_source", "classify",
    "SimConfig", "Trace", "simulate", "check_conformance", "expected_flow", "BackendConfig",
    "PromptBundle", "assemble_prompt", "generate",
]
