"""Plot optimum curves and ensemble traces from CLI output.

    python3 scripts/plot_figures.py --optimum none=nf.optimum.csv \
        --optimum markovian=mk.optimum.csv --trajectory tr.csv --out fig.png

``--optimum`` files come from ``entfeedback sweep`` (columns omega, c_hat,
lambda_hat); ``--trajectory`` files from ``entfeedback trajectory``.
Needs the ``plot`` extra (matplotlib).
"""
import argparse
import csv

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def load(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    return {k: np.array([float(r[k]) for r in rows]) for k in rows[0]}


def labelled(text):
    label, _, path = text.partition("=")
    return (label, path) if path else (text, text)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--optimum", action="append", default=[], type=labelled,
                   help="label=path of a sweep optimum CSV (repeatable)")
    p.add_argument("--trajectory", action="append", default=[], type=labelled,
                   help="label=path of a trajectory CSV (repeatable)")
    p.add_argument("--out", default="figures.png")
    args = p.parse_args()

    panels = (2 if args.optimum else 0) + (1 if args.trajectory else 0)
    if not panels:
        p.error("give at least one --optimum or --trajectory file")
    fig, axes = plt.subplots(panels, 1, figsize=(6, 3 * panels), squeeze=False)
    axes = list(axes[:, 0])
    if args.optimum:
        ax_c, ax_l = axes.pop(0), axes.pop(0)
        for label, path in args.optimum:
            d = load(path)
            ax_c.plot(d["omega"], d["c_hat"], label=label)
            ax_l.plot(d["omega"], d["lambda_hat"], label=label)
        ax_c.set_ylabel("max C")
        ax_l.set_ylabel("optimal lambda")
        ax_l.set_xlabel("omega")
        ax_c.legend()
    if args.trajectory:
        ax = axes.pop(0)
        for label, path in args.trajectory:
            d = load(path)
            ax.plot(d["t"], d["C_mean_state"], label=f"{label}: C of mean state")
            ax.plot(d["t"], d["C_mean_of_C"], "--", label=f"{label}: mean of C")
        ax.set_xlabel("t")
        ax.set_ylabel("C")
        ax.legend()
    fig.tight_layout()
    fig.savefig(args.out, dpi=120)
    print(args.out)


if __name__ == "__main__":
    main()
