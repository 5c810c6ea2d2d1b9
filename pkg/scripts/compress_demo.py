#!/usr/bin/env python3
"""End-to-end demo: generate a synthetic archive, compress it with all three
techniques, verify the report, and print the bookkeeping table.

Usage: python scripts/compress_demo.py [workdir]
"""

import json
import pathlib
import sys

from tensorpress.cli import main as cli

workdir = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
workdir.mkdir(parents=True, exist_ok=True)

archive = workdir / "model.qtns"
config = workdir / "config.json"
output = workdir / "compressed.qtns"

assert cli([
    "gen", str(archive), "--seed", "7",
    "--layer", "fc1=128x128",
    "--layer", "conv1=16x8x3x3",
    "--layer", "head=10x128",
]) == 0

config.write_text(json.dumps({
    "defaults": {
        "seed": 42,
        "stage_list": ["prune", "decompose", "factorize"],
        "prune": {"alpha": 0.1417, "stages": 3, "entangle_prob": 0.1},
        "rank_svd": 41,
        "anneal": {"rank": 41},
    },
    "layers": {
        "fc1": {},
        "conv1": {"rank_svd": 8, "anneal": {"rank": 8}},
    },
}, indent=2))

assert cli(["compress", str(archive), str(config), str(output)]) == 0
assert cli(["verify", str(archive), str(output), str(output) + ".report.json"]) == 0
print(f"\nartifacts in {workdir}/")
