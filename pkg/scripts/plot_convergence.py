#!/usr/bin/env python3
"""Render semilog/log-log convergence plots from emitted rates CSVs.

The experiment runner writes plot-ready columns only; this helper turns
them into PNGs. Usage:

    python scripts/plot_convergence.py runs/quartic_tau0_rates.csv [more.csv ...]
"""

import pathlib
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from mdcontrol.cli import read_rates_csv


def main(paths) -> int:
    if not paths:
        print(__doc__)
        return 2
    fig, (ax_semi, ax_loglog) = plt.subplots(1, 2, figsize=(10, 4))
    for path in paths:
        rows = read_rates_csv(path)
        n = [r["n"] for r in rows]
        err = [r["error"] for r in rows]
        label = pathlib.Path(path).stem
        ax_semi.semilogy(n, err, label=label)
        ax_loglog.loglog(n, err, label=label)
    for ax, title in ((ax_semi, "semilog"), (ax_loglog, "log-log")):
        ax.set_xlabel("iteration")
        ax.set_ylabel("error")
        ax.set_title(title)
        ax.legend(fontsize=8)
    out = pathlib.Path(paths[0]).with_suffix(".png")
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
