#!/usr/bin/env python3
"""Render figures from the tidy CSV files in this directory (needs pandas + matplotlib)."""
import glob
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd

HERE = os.path.dirname(os.path.abspath(__file__))


def read(name):
    path = os.path.join(HERE, name)
    return pd.read_csv(path, comment="#") if os.path.exists(path) else None


episodes = read("episodes.csv")
if episodes is not None and len(episodes):
    metrics = [m for m in ["t_g", "t_s", "d_g", "d_f", "psi_g", "psi_f"] if episodes[m].notna().any()]
    fig, axes = plt.subplots(1, len(metrics), figsize=(3 * len(metrics), 3.2))
    for ax, m in zip(axes if len(metrics) > 1 else [axes], metrics):
        groups = [g[m].replace([float("inf")], float("nan")).dropna() for _, g in episodes.groupby("label")]
        ax.boxplot(groups, showfliers=False)
        ax.set_xticks(range(1, len(groups) + 1), sorted(episodes["label"].unique()))
        ax.set_title(m)
    fig.tight_layout()
    fig.savefig(os.path.join(HERE, "boxplots.png"), dpi=150)

for curve in sorted(glob.glob(os.path.join(HERE, "curve_*.csv"))):
    df = pd.read_csv(curve, comment="#")
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.plot(df["episode"], df["reward"], alpha=0.2, lw=0.5, label="raw")
    for col in [c for c in df.columns if c.startswith("ma")]:
        ax.plot(df["episode"], df[col], label=col)
    ax.set_xlabel("episode")
    ax.set_ylabel("cumulative reward")
    ax.legend()
    fig.tight_layout()
    fig.savefig(curve[:-4] + ".png", dpi=150)

radial = read("radial.csv")
if radial is not None and len(radial):
    fig, ax = plt.subplots(figsize=(5, 3))
    for (label, seed), g in radial.groupby(["label", "seed"]):
        ax.plot(g["time"], g["mean_dist"], lw=0.8, label=f"{label} {seed}")
    ax.axhline(radial["rho_g"].iloc[0], ls="--", c="g")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("mean target distance to goal (m)")
    fig.tight_layout()
    fig.savefig(os.path.join(HERE, "radial.png"), dpi=150)

timeline = read("selections.csv")
if timeline is not None and len(timeline):
    first = timeline[timeline["seed"] == timeline["seed"].min()]
    fig, ax = plt.subplots(figsize=(6, 2.5))
    for h, g in first.groupby("herder"):
        ax.step(g["time"], g["target"], where="post", label=f"herder {h}")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("selected target")
    ax.legend()
    fig.tight_layout()
    fig.savefig(os.path.join(HERE, "selections.png"), dpi=150)
