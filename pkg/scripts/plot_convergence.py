#!/usr/bin/env python3
"""Plot objective-gap traces emitted by the run command.

    python scripts/plot_convergence.py out/desk_scale/trace_seed*.csv -o gaps.png
"""

import argparse
import csv


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("traces", nargs="+", help="trace CSV files")
    parser.add_argument("-o", "--output", default="gaps.png")
    args = parser.parse_args()
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib is required for plotting: pip install matplotlib")
        return 1
    fig, ax = plt.subplots(figsize=(6, 4))
    for path in args.traces:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        ax.semilogy([int(r["t"]) for r in rows],
                    [float(r["objective_gap"]) for r in rows], label=path)
    ax.set_xlabel("outer iteration")
    ax.set_ylabel("objective gap")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(args.output, dpi=150)
    print(f"wrote {args.output}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
