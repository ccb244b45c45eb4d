#!/usr/bin/env python3
"""Launch a configured experiment via the library CLI.

Thin wrapper so experiment configs under configs/ can be run directly:

    python scripts/run_experiment.py configs/desk_scale.json [--out DIR] [--seed N ...]
"""

import sys

from lqgames.cli import main


def run() -> int:
    if len(sys.argv) < 2:
        print(__doc__)
        return 1
    config, rest = sys.argv[1], sys.argv[2:]
    import json
    from pathlib import Path

    mode = json.loads(Path(config).read_text()).get("mode", "nash")
    command = "nash" if mode == "nash" else ("verify" if mode == "verify" else "run")
    return main([command, "--config", config, *rest])


if __name__ == "__main__":
    raise SystemExit(run())
