"""Recompute the two complexity tables from the bundled graph fixtures and
compare against the published M values."""
import argparse
import json
import sys
import time

from agilemdd.cli import fixtures_dir
from agilemdd.complexity import build_cfg_from_graphfile, report

PUBLISHED = {
    "table1": ({"Operator": 2, "MCC": 4, "UVF-Manager": 4, "UV": 2}, 12),
    "table2": ({"Operator": 3, "MCC": 5, "UVF-Manager": 6, "UV": 3}, 17),
}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--json", action="store_true", help="machine-readable output")
    args = ap.parse_args(argv)
    results, ok = {}, True
    for name, (units, total) in PUBLISHED.items():
        t0 = time.perf_counter()
        rep = report(build_cfg_from_graphfile(fixtures_dir() / "graphs" / "tables" / f"{name}.cfg.json"))
        elapsed = time.perf_counter() - t0
        got = {r.unit: r.M for r in rep.rows}
        match = got == units and rep.model_total_M == total
        ok &= match
        results[name] = {**rep.to_dict(), "matches_published": match, "seconds": round(elapsed, 6)}
        if not args.json:
            print(f"{name}  ({'matches' if match else 'DIFFERS'}, {elapsed * 1000:.1f} ms)")
            print(rep.to_text())
    if args.json:
        print(json.dumps(results, indent=2, sort_keys=True))
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
