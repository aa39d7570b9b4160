"""Scenario run outputs: the metrics CSV, a JSON summary, and figures.

The CSV is byte-deterministic for a given (scenario, seed): fixed column
order, fixed float formatting, rows sorted by (advisory_id, vehicle_id).
"""

from __future__ import annotations

import json
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

__all__ = ["write_metrics_csv", "write_summary_json", "render_figures", "METRICS_COLUMNS"]

METRICS_COLUMNS = ("advisory_id", "vehicle_id", "delivery_ms", "compliance_s")


def metrics_csv_lines(metrics) -> list[str]:
    lines = [",".join(METRICS_COLUMNS)]
    for row in metrics.deliveries:
        compliance = "" if row.compliance_s is None else f"{row.compliance_s:.3f}"
        lines.append(
            f"{row.advisory_id},{row.vehicle_id},{row.delivery_ms:.3f},{compliance}"
        )
    return lines


def write_metrics_csv(metrics, path):
    with open(path, "w") as fh:
        fh.write("\n".join(metrics_csv_lines(metrics)) + "\n")


def write_summary_json(metrics, path):
    with open(path, "w") as fh:
        json.dump(metrics.summary(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def render_figures(metrics, out_dir) -> list[str]:
    """Speed traces and delivery latency figures, written as PNGs."""
    written = []

    fig, ax = plt.subplots(figsize=(9, 5))
    for vehicle_id, trace in sorted(metrics.traces.items()):
        times = [t for t, _ in trace]
        speeds = [v for _, v in trace]
        ax.plot(times, speeds, linewidth=0.9, alpha=0.6)
    for at_s, advisory_id, speed_mps in metrics.advisory_marks:
        ax.axvline(at_s, color="crimson", linestyle="--", linewidth=1.0)
        ax.axhline(speed_mps, color="crimson", linestyle=":", linewidth=1.0)
        ax.annotate(
            f"advisory {advisory_id}: {speed_mps:.1f} m/s",
            xy=(at_s, speed_mps),
            xytext=(4, 4),
            textcoords="offset points",
            fontsize=8,
            color="crimson",
        )
    ax.set_xlabel("time (s)")
    ax.set_ylabel("speed (m/s)")
    ax.set_title(f"fleet speed traces (seed {metrics.seed}, {metrics.profile_name})")
    fig.tight_layout()
    path = os.path.join(out_dir, "speed_traces.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    if metrics.deliveries:
        fig, ax = plt.subplots(figsize=(7, 4))
        latencies = [row.delivery_ms for row in metrics.deliveries]
        ax.hist(latencies, bins=min(30, max(5, len(latencies) // 2)), color="steelblue")
        ax.set_xlabel("advisory delivery latency (ms)")
        ax.set_ylabel("deliveries")
        ax.set_title(f"advisory delivery latency ({metrics.profile_name})")
        fig.tight_layout()
        path = os.path.join(out_dir, "delivery_latency.png")
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)

    return written
