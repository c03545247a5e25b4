"""Figure rendering for the report paths.

Each function takes already-computed results and writes one PNG next to
the delimited output it illustrates.  Rendering is headless (Agg).
"""

from __future__ import annotations

from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def epidemic_curve_figure(outputs, path: Path | str) -> Path:
    """Incidence proportion over time: per-run mean with an sd band."""
    inc = np.stack([o.incidence for o in outputs]).astype(float)
    n_agents = outputs[0].n_agents
    days = np.arange(inc.shape[1])
    mean = inc.mean(axis=0) / n_agents
    sd = (inc.std(axis=0, ddof=1) if len(outputs) > 1 else np.zeros(inc.shape[1])) / n_agents
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(days, mean, color="tab:red", lw=1.5, label=f"mean of {len(outputs)} runs")
    ax.fill_between(days, mean - sd, mean + sd, color="tab:red", alpha=0.25, lw=0,
                    label="+/- 1 sd")
    ax.set_xlabel("day")
    ax.set_ylabel("incidence proportion")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def r0_curve_figure(curve, path: Path | str) -> Path:
    xs = np.array([e.kappa for e in curve.estimates])
    ys = np.array([e.r0 for e in curve.estimates])
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(xs, ys, "o", color="tab:blue")
    grid = np.linspace(0, xs.max() * 1.05, 50)
    ax.plot(grid, curve.slope * grid + curve.intercept, "-", color="tab:gray",
            label=f"fit: {curve.slope:.3f}k{curve.intercept:+.3f} (R2={curve.r_squared:.3f})")
    ax.set_xlabel("transmission scaling")
    ax.set_ylabel("reproductive ratio")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def secondary_cases_figure(curve, path: Path | str) -> Path:
    """Histogram of secondary-case counts, one panel per scaling value."""
    n = len(curve.estimates)
    cols = min(2, n)
    rows = -(-n // cols)
    fig, axes = plt.subplots(rows, cols, figsize=(4 * cols, 3 * rows), squeeze=False)
    for k, est in enumerate(curve.estimates):
        ax = axes[k // cols][k % cols]
        xs = sorted(est.histogram)
        ax.bar(xs, [est.histogram[x] for x in xs], color="tab:blue", width=0.9)
        ax.set_title(f"scaling {est.kappa:g} (mean {est.r0:.2f})", fontsize=10)
        ax.set_xlabel("secondary cases")
        ax.set_ylabel("frequency")
    for k in range(n, rows * cols):
        axes[k // cols][k % cols].axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def synchrony_report_figure(report, path: Path | str) -> Path:
    labels = [b.label.split("_")[-1] for b in report.bins]
    values = [b.synchrony_mean if b.synchrony_mean is not None else np.nan
              for b in report.bins]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(range(len(values)), values, "o-", color="tab:green")
    ax.set_xticks(range(len(values)), labels)
    if report.mode == "size":
        ax.set_xlabel("SLA size bin (small to large)")
    else:
        ax.set_xlabel("pairwise distance bin (near to far)")
    ax.set_ylabel("synchrony")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def attack_rates_figure(rates, path: Path | str) -> Path:
    bands = list(rates.national)
    x = np.arange(len(bands))
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(x - 0.2, [rates.community[b] for b in bands], width=0.4, label="community")
    ax.bar(x + 0.2, [rates.national[b] for b in bands], width=0.4, label="national")
    ax.set_xticks(x, bands)
    ax.set_xlabel("age band")
    ax.set_ylabel("cumulative ill per 10k")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def seeding_scan_figure(scan, path: Path | str) -> Path:
    counts = sorted({c.sla_count for c in scan.cells})
    props = sorted({c.proportion for c in scan.cells})
    grid = np.full((len(props), len(counts)), np.nan)
    for c in scan.cells:
        grid[props.index(c.proportion), counts.index(c.sla_count)] = (
            np.nan if c.synchrony_mean is None else c.synchrony_mean)
    fig, ax = plt.subplots(figsize=(6, 4.5))
    masked = np.ma.masked_invalid(grid)
    if masked.count() and len(counts) > 1 and len(props) > 1:
        mesh = ax.pcolormesh(counts, props, masked, shading="nearest", cmap="viridis")
        fig.colorbar(mesh, ax=ax, label="synchrony")
    ax.set_yscale("log")
    ax.set_xlabel("number of seeded SLAs")
    ax.set_ylabel("seeded proportion")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def calibration_figure(fractions: dict, targets: dict, path: Path | str) -> Path:
    names = list(targets)
    x = np.arange(len(names))
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(x, [fractions[n] for n in names], width=0.5, color="tab:blue")
    for i, n in enumerate(names):
        lo, hi = targets[n]
        ax.plot([i - 0.3, i + 0.3], [lo, lo], color="tab:red", lw=1)
        ax.plot([i - 0.3, i + 0.3], [hi, hi], color="tab:red", lw=1)
    ax.set_xticks(x, names)
    ax.set_ylabel("fraction of transmissions")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)
