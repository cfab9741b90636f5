"""Generate the agents with the offline backend, audit them, and measure the
cyclomatic complexity of the generated code."""
import argparse
import sys
import tempfile
from pathlib import Path

from agilemdd.cli import default_constraints, default_model, default_ontology
from agilemdd.codegen import BackendConfig, assemble_prompt, audit_artifact, generate
from agilemdd.complexity import build_cfg_from_source, report


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", help="write the generated files here")
    ap.add_argument("--target", default="python-agents")
    args = ap.parse_args(argv)
    bundle = assemble_prompt(default_model(), default_constraints(), default_ontology(), args.target)
    art = generate(bundle, BackendConfig())
    with tempfile.TemporaryDirectory() as tmp:
        out = Path(args.out or tmp)
        art.write(out)
        print(f"prompt digest {bundle.digest}, {len(art.files)} files -> {out if args.out else '(temporary)'}")
    findings = audit_artifact(art)
    for v in findings:
        print(v)
    print(f"audit: {len(findings)} finding(s)")
    print(report(build_cfg_from_source(dict(art.files), "pyagent")).to_text())
    return 1 if findings else 0


if __name__ == "__main__":
    sys.exit(main())
