"""Convert a MATPOWER case file into the bus/branch/gen CSV tables.

usage: python3 scripts/matpower_to_csv.py CASE.m OUT_DIR [--lmp FILE | --dc-lmp]

Bus prices come from ``--lmp`` (CSV with columns bus,lmp in $/kWh), from a
lossless DC optimal dispatch of the case's linear generator costs
(``--dc-lmp``), or default to zero.
"""

import argparse
import csv
import sys

from evsiting.grid import save_grid_csv
from evsiting.matpower import case_to_grid, dc_opf_lmp, parse_case


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("case", help="MATPOWER .m file")
    ap.add_argument("out", help="output directory")
    src = ap.add_mutually_exclusive_group()
    src.add_argument("--lmp", help="CSV with columns bus,lmp ($/kWh)")
    src.add_argument("--dc-lmp", action="store_true", help="price buses with a DC optimal dispatch ($/MWh converted to $/kWh)")
    args = ap.parse_args(argv)
    with open(args.case) as fh:
        case = parse_case(fh.read())
    lmp = None
    if args.lmp:
        with open(args.lmp, newline="") as fh:
            lmp = {int(r["bus"]): float(r["lmp"]) for r in csv.DictReader(fh)}
    elif args.dc_lmp:
        per_mwh, _ = dc_opf_lmp(case)
        lmp = {b: v / 1000.0 for b, v in per_mwh.items()}
    grid = case_to_grid(case, lmp)
    problems = grid.problems()
    if problems:
        print("\n".join(problems), file=sys.stderr)
        return 1
    save_grid_csv(grid, args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
