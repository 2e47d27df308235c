"""CSV reports and SVG rate plots for residual sweeps."""

from __future__ import annotations

import csv
import os
from collections import defaultdict

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "nambulab"

CSV_FIELDS = [
    "theorem_id",
    "geometry",
    "r",
    "seed",
    "k",
    "residual",
    "scaled_residual",
    "slope",
    "r2",
    "converged",
]


def series_rows(series_list):
    """One CSV row per (series, k), deterministically ordered."""
    rows = []
    for s in series_list:
        for k, res, scaled in zip(s.ks, s.residuals, s.scaled_residuals):
            rows.append(
                {
                    "theorem_id": s.theorem_id,
                    "geometry": s.geometry,
                    "r": s.r,
                    "seed": s.seed,
                    "k": k,
                    "residual": repr(float(res)),
                    "scaled_residual": repr(float(scaled)),
                    "slope": repr(float(s.slope)),
                    "r2": repr(float(s.r2)),
                    "converged": str(bool(s.converged)).lower(),
                }
            )
    rows.sort(key=lambda row: (row["theorem_id"], row["geometry"], int(row["r"]),
                               int(row["seed"]), int(row["k"])))
    return rows


def write_csv(path, series_list):
    rows = series_rows(series_list)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def plot_series(series_list, outdir):
    """One log-log SVG per theorem with the fitted decay lines."""
    os.makedirs(outdir, exist_ok=True)
    groups = defaultdict(list)
    for s in series_list:
        groups[(s.theorem_id, s.geometry)].append(s)
    paths = []
    for (tid, geometry), group in sorted(groups.items()):
        fig, ax = plt.subplots(figsize=(5.5, 4.2))
        for s in sorted(group, key=lambda x: (x.r, x.seed)):
            label = f"seed {s.seed}" + (f", r={s.r}" if s.r else "")
            pts = [(k, r) for k, r in zip(s.ks, s.residuals) if r > 0]
            if not pts:
                continue
            ks, rs = zip(*pts)
            (line,) = ax.loglog(ks, rs, "o", ms=5, label=f"{label}: slope {s.slope:.2f}")
            kk = np.linspace(min(ks), max(ks), 50)
            ax.loglog(kk, np.exp(s.intercept) * kk**s.slope, "--", lw=1,
                      color=line.get_color(), alpha=0.7)
        ax.set_xlabel("level k")
        ax.set_ylabel("residual operator norm")
        thr = group[0].slope_threshold
        ax.set_title(f"{tid} on {geometry} (target slope <= {thr})")
        ax.grid(True, which="both", alpha=0.3)
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = os.path.join(outdir, f"rate_{tid}_{geometry}.svg")
        fig.savefig(path)
        plt.close(fig)
        paths.append(path)
    return paths


def plot_rows(rows, outdir):
    """Rebuild per-theorem SVG plots from CSV rows (the report path)."""
    os.makedirs(outdir, exist_ok=True)
    groups = defaultdict(list)
    for row in rows:
        groups[(row["theorem_id"], row["geometry"])].append(row)
    paths = []
    for (tid, geometry), rws in sorted(groups.items()):
        fig, ax = plt.subplots(figsize=(5.5, 4.2))
        by_series = defaultdict(list)
        for row in rws:
            by_series[(int(row["r"]), int(row["seed"]), float(row["slope"]))].append(row)
        for (r, seed, slope), srows in sorted(by_series.items()):
            srows.sort(key=lambda rw: int(rw["k"]))
            ks = [int(rw["k"]) for rw in srows]
            rs = [float(rw["residual"]) for rw in srows]
            pts = [(k, v) for k, v in zip(ks, rs) if v > 0]
            if not pts:
                continue
            kk, vv = zip(*pts)
            label = f"seed {seed}" + (f", r={r}" if r else "")
            ax.loglog(kk, vv, "o-", ms=5, lw=0.8, label=f"{label}: slope {slope:.2f}")
        ax.set_xlabel("level k")
        ax.set_ylabel("residual operator norm")
        ax.set_title(f"{tid} on {geometry}")
        ax.grid(True, which="both", alpha=0.3)
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = os.path.join(outdir, f"rate_{tid}_{geometry}.svg")
        fig.savefig(path)
        plt.close(fig)
        paths.append(path)
    return paths


def summary_lines(series_list):
    lines = []
    for s in sorted(series_list, key=lambda x: (x.theorem_id, x.geometry, x.r, x.seed)):
        status = "pass" if s.passed else ("no-conv" if not s.converged else "FAIL")
        extra = ""
        if "c_fit" in s.extra:
            extra = f"  c_fit={s.extra['c_fit']:.4f}"
        lines.append(
            f"{s.theorem_id:20s} {s.geometry:5s} r={s.r} seed={s.seed}: "
            f"slope={s.slope:+.3f} (thr {s.slope_threshold:+.1f}) R2={s.r2:.3f} "
            f"max k^p r = {max(s.scaled_residuals):.3e}  [{status}]{extra}"
        )
    return lines
