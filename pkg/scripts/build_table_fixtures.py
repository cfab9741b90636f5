"""Write the bundled graph fixtures for the two complexity tables and the
small worked example.

Only E, N and P of each unit are fixed; the shape is a statement chain with
forward skip edges (one per decision), which is how a sequence of if-blocks
without else arms looks once lowered.
"""
import argparse
import json
from pathlib import Path

TABLES = {
    "table1": [("Operator", 8, 8), ("MCC", 15, 13), ("UVF-Manager", 16, 14), ("UV", 8, 8)],
    "table2": [("Operator", 12, 11), ("MCC", 22, 19), ("UVF-Manager", 23, 19), ("UV", 12, 11)],
}

EXAMPLE = {
    "name": "example",
    "nodes": ["start", "cond", "then", "else", "merge", "loop", "body", "end"],
    "edges": [
        ["start", "cond"], ["cond", "then"], ["cond", "else"], ["then", "merge"], ["else", "merge"],
        ["merge", "loop"], ["loop", "body"], ["body", "loop"], ["loop", "end"],
    ],
    "entries": ["start"],
}


def chain_with_skips(name, edges, nodes):
    ids = [f"s{i}" for i in range(nodes)]
    out = [[ids[i], ids[i + 1]] for i in range(nodes - 1)]
    extra = edges - len(out)
    if extra < 0 or 2 * extra > nodes - 2:
        raise ValueError(f"{name}: cannot place {extra} skip edges on {nodes} nodes")
    out += [[ids[2 * k], ids[2 * k + 2]] for k in range(extra)]
    return {"name": name, "nodes": ids, "edges": out, "entries": [ids[0]]}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=Path(__file__).resolve().parents[1] / "src/agilemdd/fixtures/graphs")
    args = ap.parse_args()
    out = Path(args.out)
    (out / "tables").mkdir(parents=True, exist_ok=True)
    for table, rows in TABLES.items():
        doc = {"units": [chain_with_skips(*row) for row in rows]}
        (out / "tables" / f"{table}.cfg.json").write_text(json.dumps(doc, indent=1) + "\n")
    (out / "example.cfg.json").write_text(json.dumps({"units": [EXAMPLE]}, indent=1) + "\n")
    print(f"wrote graph fixtures under {out}")


if __name__ == "__main__":
    main()
