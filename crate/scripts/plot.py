#!/usr/bin/env python3
"""Figures from the CSV outputs of an output directory.

    python3 scripts/plot.py out            # writes out/plots/*.png
"""
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd


def sweep(out, dst):
    df = pd.read_csv(out / "sweep.csv")
    fig, (a, b) = plt.subplots(1, 2, figsize=(11, 4))
    for m in ["lstm", "cnn", "rf", "ensemble"]:
        a.plot(df.window_len, df[f"acc_{m}"], marker="o", label=m)
    a.set(xlabel="window (samples)", ylabel="test accuracy")
    a.legend()
    for m in ["lstm", "cnn", "rf", "meta"]:
        b.plot(df.window_len, df[f"ms_{m}"], marker="o", label=m)
    b.set(xlabel="window (samples)", ylabel="ms per window")
    b.legend()
    fig.tight_layout()
    fig.savefig(dst / "sweep.png", dpi=120)


def hitl(out, dst):
    df = pd.read_csv(out / "hitl" / "hitl.csv")
    fig, (a, b) = plt.subplots(2, 1, figsize=(10, 6), sharex=True)
    a.plot(df.t, df.acc_plain, label="classifier only")
    a.plot(df.t, df.acc_hitl, label="with corrections")
    a.set(ylabel="cumulative accuracy")
    a.legend()
    b.plot(df.t, df.plain_elbow, label="elbow, classifier only")
    b.plot(df.t, df.hitl_elbow, label="elbow, with corrections")
    b.set(xlabel="t (s)", ylabel="deg")
    b.legend()
    fig.tight_layout()
    fig.savefig(dst / "hitl.png", dpi=120)


def live(session, dst, name):
    traj = pd.read_csv(session / "trajectory.csv")
    lat = pd.read_csv(session / "latency.csv")
    fig, (a, b) = plt.subplots(2, 1, figsize=(10, 6))
    for col in ["base_rotation", "elbow_flexion", "finger_aperture"]:
        a.plot(traj.t, traj[col], label=col)
    a.set(xlabel="t (s)", ylabel="deg")
    a.legend()
    b.hist(lat.e2e_ms, bins=60)
    b.axvline(lat.e2e_ms.median(), color="k", ls="--", label=f"p50 {lat.e2e_ms.median():.2f} ms")
    b.set(xlabel="end-to-end latency (ms)", ylabel="ticks")
    b.legend()
    fig.tight_layout()
    fig.savefig(dst / f"{name}.png", dpi=120)


def main():
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "out")
    dst = out / "plots"
    dst.mkdir(parents=True, exist_ok=True)
    if (out / "sweep.csv").exists():
        sweep(out, dst)
    if (out / "hitl" / "hitl.csv").exists():
        hitl(out, dst)
    for name in ["live", "serve"]:
        if (out / name / "trajectory.csv").exists():
            live(out / name, dst, name)
    print(f"plots in {dst}")


if __name__ == "__main__":
    main()
