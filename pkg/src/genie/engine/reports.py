"""Report rendering: delimited output plus matplotlib figures on disk."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

plt.rcParams.update({
    "figure.figsize": (7.0, 4.2),
    "figure.dpi": 110,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
})


def write_csv(path: Path, rows: list[dict]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    if not rows:
        path.write_text("")
        return path
    fields = list(rows[0].keys())
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
    return path


def render_reuse_report(report, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [write_csv(out / "bench_reuse.csv",
                       report.to_rows() + [{"mode": "summary", "query": "",
                                            **{k: v for k, v in report.summary().items()
                                               if k.endswith(("_without", "_with"))}}])]
    summary = report.summary()
    fig, axes = plt.subplots(1, 3, figsize=(9.5, 3.4))
    metrics = [("invocations", "simulator invocations"),
               ("estimated_s", "model-estimated runtime (s)"),
               ("bytes", "bytes materialized")]
    for ax, (key, label) in zip(axes, metrics):
        vals = [summary[f"{key}_without"], summary[f"{key}_with"]]
        ax.bar(["no reuse", "reuse"], vals, color=["#b35955", "#4878a8"])
        ax.set_title(label)
        for x, v in enumerate(vals):
            ax.annotate(f"{v:,.0f}" if v >= 1 else f"{v:.3f}", (x, v),
                        ha="center", va="bottom", fontsize=8)
    fig.suptitle("Reuse workload: persistent coverage vs cold per query")
    fig.tight_layout()
    fig_path = out / "bench_reuse.png"
    fig.savefig(fig_path)
    plt.close(fig)
    paths.append(fig_path)
    return paths


def render_class_report(results, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = [{"query": r.name,
             "adaptive_estimated_s": round(r.adaptive_estimated_s, 4),
             "static_high_estimated_s": round(r.static_high_estimated_s, 4),
             "speedup": round(r.speedup, 2),
             "accuracy_vs_static_high": round(r.accuracy, 4),
             "adaptive_wall_s": round(r.adaptive_wall_s, 3),
             "static_wall_s": round(r.static_wall_s, 3)} for r in results]
    paths = [write_csv(out / "query_classes.csv", rows)]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8.2, 3.4))
    names = [r.name for r in results]
    ax1.bar(names, [r.speedup for r in results], color="#4878a8")
    ax1.set_ylabel("estimated-runtime speedup (x)")
    ax1.set_title("adaptive vs static-high")
    ax2.bar(names, [100 * r.accuracy for r in results], color="#6a9a58")
    ax2.set_ylim(0, 105)
    ax2.set_ylabel("answer accuracy vs static-high (%)")
    ax2.axhline(90, color="#555", ls="--", lw=0.8)
    fig.tight_layout()
    fig_path = out / "query_classes.png"
    fig.savefig(fig_path)
    plt.close(fig)
    paths.append(fig_path)
    return paths


def render_tradeoff_report(rows: list[dict], out_dir: str | Path) -> list[Path]:
    """rows: axis, value, est_seconds, meas_seconds, est_accuracy, meas_accuracy."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [write_csv(out / "tradeoff.csv", rows)]
    fig, axes = plt.subplots(2, 2, figsize=(8.4, 6.0))
    for col, axis in enumerate(("temporal", "spatial")):
        sub = [r for r in rows if r["axis"] == axis]
        xs = [r["value"] for r in sub]
        ax = axes[0][col]
        ax.plot(xs, [r["est_seconds"] for r in sub], "o-", label="model")
        ax.plot(xs, [r["meas_seconds"] for r in sub], "s--", label="measured")
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("sampling interval (h)" if axis == "temporal"
                      else "grid resolution (deg)")
        ax.set_ylabel("runtime (s)")
        ax.legend(fontsize=8)
        ax = axes[1][col]
        ax.plot(xs, [r["est_accuracy"] for r in sub], "o-", label="model")
        ax.plot(xs, [r["meas_accuracy"] for r in sub], "s--", label="measured")
        ax.set_xscale("log")
        ax.set_ylim(0.5, 1.02)
        ax.set_xlabel("sampling interval (h)" if axis == "temporal"
                      else "grid resolution (deg)")
        ax.set_ylabel("accuracy score")
        ax.legend(fontsize=8)
    fig.suptitle("Runtime/accuracy trade-off: cost model vs measured runs")
    fig.tight_layout()
    fig_path = out / "tradeoff.png"
    fig.savefig(fig_path)
    plt.close(fig)
    paths.append(fig_path)
    return paths


def render_field_heatmap(field, out_path: str | Path, t_index: int | None = None,
                         stations: list[tuple[float, float]] | None = None) -> Path:
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    vals = field.values[:, :, t_index] if t_index is not None \
        else field.values.max(axis=2)
    fig, ax = plt.subplots(figsize=(7.2, 4.6))
    im = ax.imshow(vals, origin="lower", aspect="auto", cmap="inferno",
                   extent=(field.bbox.lon_min, field.bbox.lon_max,
                           field.bbox.lat_min, field.bbox.lat_max))
    fig.colorbar(im, ax=ax, label=f"{field.attribute[1]}")
    if stations:
        ax.scatter([lon for _, lon in stations], [lat for lat, _ in stations],
                   s=10, c="#4dd0e1", marker="^", label="stations")
        ax.legend(fontsize=8, loc="upper right")
    ax.set_xlabel("longitude")
    ax.set_ylabel("latitude")
    title = f"{field.attribute[0]}.{field.attribute[1]} " \
            f"({field.spatial_res} deg, {field.temporal_res} h)"
    ax.set_title(title + ("" if t_index is not None else " - max over time"))
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
    return out_path


def render_query_results(rows: list[dict], epochs: list[dict],
                         out_dir: str | Path, name: str = "query") -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [write_csv(out / f"{name}_rows.csv", rows)]
    if epochs:
        paths.append(write_csv(out / f"{name}_epochs.csv", epochs))
        fig, ax = plt.subplots(figsize=(6.0, 3.2))
        xs = [e["epoch"] for e in epochs]
        ax.bar([str(x) for x in xs], [e["latency_s"] for e in epochs],
               color="#4878a8")
        ax.set_xlabel("epoch")
        ax.set_ylabel("latency (s)")
        ax.set_title("per-epoch latency")
        fig.tight_layout()
        p = out / f"{name}_epochs.png"
        fig.savefig(p)
        plt.close(fig)
        paths.append(p)
    return paths
