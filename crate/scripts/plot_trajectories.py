#!/usr/bin/env python3
"""Plot robot paths and error traces from an se2sim CSV log.

    python3 scripts/plot_trajectories.py out/example4.csv [-o fig.png] [--arrows 8]
"""

import argparse

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("csv")
    ap.add_argument("-o", "--output", help="image file (default: <csv>.png)")
    ap.add_argument("--arrows", type=int, default=6, help="heading arrows per robot")
    args = ap.parse_args()

    df = pd.read_csv(args.csv)
    fig, (ax, ax_err) = plt.subplots(1, 2, figsize=(13, 5.5))

    for node, g in df.groupby("node"):
        label = "leader" if node == 0 else f"follower {node}"
        (line,) = ax.plot(g.x, g.y, lw=1.2, label=label)
        idx = np.linspace(0, len(g) - 1, args.arrows).astype(int)
        s = g.iloc[idx]
        span = max(np.ptp(df.x), np.ptp(df.y), 1.0)
        ax.quiver(
            s.x, s.y, np.cos(s.theta), np.sin(s.theta),
            color=line.get_color(), angles="xy", scale_units="xy",
            scale=20.0 / span, width=0.004,
        )
        if node != 0:
            ax_err.semilogy(g.t, g.err_pose.clip(lower=1e-16), color=line.get_color(), label=label)

    ax.set_aspect("equal", adjustable="datalim")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title("paths (arrows: heading)")
    ax.legend(loc="best", fontsize="small")
    ax_err.set_xlabel("t [s]")
    ax_err.set_ylabel("‖log(g_ref⁻¹ g)‖")
    ax_err.set_title("tracking error")
    ax_err.grid(True, which="both", alpha=0.3)
    ax_err.legend(loc="best", fontsize="small")

    fig.tight_layout()
    out = args.output or args.csv.rsplit(".", 1)[0] + ".png"
    fig.savefig(out, dpi=120)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
