#!/usr/bin/env python3
"""Plot residual-vs-work curves from zo-harness trace CSVs.

Documentation stub, not a build dependency. Usage:

    python3 scripts/plot_traces.py out/quad_rate [more dirs...]

Reads every rep*_trace.csv under each directory (and one level of K*
subdirectories), takes the checkpoint rows (those with a residual_norm), and
plots residual norm against cumulative oracle evaluations on log-log axes.
Requires matplotlib.
"""

import csv
import pathlib
import sys

try:
    import matplotlib.pyplot as plt
except ImportError:
    sys.exit("matplotlib is required: pip install matplotlib")


def trace_files(root: pathlib.Path):
    yield from sorted(root.glob("rep*_trace.csv"))
    for sub in sorted(root.glob("K*/")):
        yield from sorted(sub.glob("rep*_trace.csv"))


def checkpoints(path: pathlib.Path):
    with path.open() as fh:
        for row in csv.DictReader(fh):
            if row["residual_norm"]:
                yield int(row["cum_evals"]), float(row["residual_norm"])


def main(dirs):
    fig, ax = plt.subplots(figsize=(7, 5))
    for d in dirs:
        root = pathlib.Path(d)
        for path in trace_files(root):
            pts = list(checkpoints(path))
            if not pts:
                continue
            evals, resid = zip(*pts)
            ax.loglog(evals, resid, alpha=0.5, linewidth=1,
                      label=str(path.relative_to(root.parent)))
    ax.set_xlabel("cumulative oracle evaluations")
    ax.set_ylabel("residual norm")
    ax.grid(True, which="both", alpha=0.3)
    if len(ax.get_lines()) <= 12:
        ax.legend(fontsize=7)
    out = pathlib.Path(dirs[0]) / "residual_vs_work.png"
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    print(f"wrote {out}")


if __name__ == "__main__":
    if len(sys.argv) < 2:
        sys.exit(__doc__)
    main(sys.argv[1:])
