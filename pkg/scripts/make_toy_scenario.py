"""Regenerate the bundled toy scenario file.

usage: python3 scripts/make_toy_scenario.py [OUT.json] [--seed N]
"""

import argparse

from evsiting.scenario import save_scenario
from evsiting.synthetic import toy_scenario


def main(argv=None):
    ap = argparse.ArgumentParser(description="Write the desk-scale toy scenario as JSON.")
    ap.add_argument("out", nargs="?", default="src/evsiting/data/toy.json")
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args(argv)
    save_scenario(toy_scenario(seed=args.seed), args.out)


if __name__ == "__main__":
    main()
