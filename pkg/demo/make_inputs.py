#!/usr/bin/env python
"""Write a self-contained demo dataset (registry, corpora, config).

Usage::

    python demo/make_inputs.py [output_dir]

Then run the pipeline against it::

    docrte --config <output_dir>/config.json run-all
"""
from __future__ import annotations

import argparse
from pathlib import Path

from docrte.simulate import write_demo_inputs


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("output_dir", nargs="?", default="demo/data",
                        help="where to write registry.json, corpora, and config.json")
    parser.add_argument("--relations", type=int, default=24,
                        help="number of relation types in the demo registry")
    parser.add_argument("--seed", type=int, default=101,
                        help="seed for the simulated world")
    args = parser.parse_args()
    out = Path(args.output_dir)
    write_demo_inputs(out, n_relations=args.relations, seed=args.seed)
    print(f"demo inputs written to {out}/")
    print(f"next: docrte --config {out / 'config.json'} run-all")


if __name__ == "__main__":
    main()
