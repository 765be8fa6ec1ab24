"""Render a directory of scenario outputs into a summary report.

The machine contract stays the CSV/JSON files written by the runner; this
module reads them back and adds two human-facing artifacts:

* ``report.json`` — every scenario verdict plus an ``all_pass`` flag;
* ``<scenario_id>.png`` — the cost series per scenario: thin lines for
  the individual seeds, a heavy line for the pooled mean, a shaded band
  for its confidence interval, and exact transport distances as markers
  when present.

Figures carry no timestamps, so rendering the same results twice
produces identical files.
"""

from __future__ import annotations

import csv
import json
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .errors import InvalidParameter  # noqa: E402

__all__ = ["read_series_csv", "collect_results", "render_figure",
           "render_report"]


def _maybe_float(cell: str):
    return None if cell == "" else float(cell)


def read_series_csv(path) -> dict:
    """CSV rows grouped by seed label: ``{seed: {t, coupled, lp, ci_low,
    ci_high}}`` with lists in checkpoint order."""
    out: dict = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        needed = {"scenario_id", "seed", "t", "coupled_cost"}
        if not needed.issubset(fields):
            raise InvalidParameter(f"{path}: not a scenario series CSV")
        for row in reader:
            rec = out.setdefault(row["seed"], {
                "t": [], "coupled": [], "lp": [], "ci_low": [], "ci_high": [],
            })
            rec["t"].append(float(row["t"]))
            rec["coupled"].append(float(row["coupled_cost"]))
            rec["lp"].append(_maybe_float(row.get("lp_distance", "")))
            rec["ci_low"].append(_maybe_float(row.get("ci_low", "")))
            rec["ci_high"].append(_maybe_float(row.get("ci_high", "")))
    return out


def collect_results(results_dir) -> dict:
    """Pair up ``<id>.csv`` / ``<id>.json`` files under a directory."""
    found: dict = {}
    for name in sorted(os.listdir(results_dir)):
        base, ext = os.path.splitext(name)
        if base == "report" or ext not in (".csv", ".json"):
            continue
        path = os.path.join(results_dir, name)
        entry = found.setdefault(base, {"csv": None, "verdict": None})
        if ext == ".csv":
            entry["csv"] = path
        else:
            with open(path) as fh:
                entry["verdict"] = json.load(fh)
    return found


def _plot_one(ax, seed, rec, pooled: bool):
    kwargs = {"lw": 2.2, "color": "C0", "zorder": 3} if pooled else \
             {"lw": 0.8, "color": "0.65", "zorder": 2}
    label = "pooled" if pooled else None
    ax.plot(rec["t"], rec["coupled"], label=label, **kwargs)
    if pooled and all(v is not None for v in rec["ci_low"]):
        ax.fill_between(rec["t"], rec["ci_low"], rec["ci_high"],
                        color="C0", alpha=0.2, lw=0, zorder=1,
                        label="95% band")
    lp_pts = [(t, v) for t, v in zip(rec["t"], rec["lp"]) if v is not None]
    if pooled and lp_pts:
        ax.plot(*zip(*lp_pts), ls="none", marker="o", ms=4, color="C3",
                zorder=4, label="exact transport")


def render_figure(scenario_id: str, series: dict, path) -> None:
    """One PNG per scenario from grouped CSV rows."""
    fig, ax = plt.subplots(figsize=(6.0, 3.8))
    for seed, rec in series.items():
        if seed != "pooled":
            _plot_one(ax, seed, rec, pooled=False)
    if "pooled" in series:
        _plot_one(ax, "pooled", series["pooled"], pooled=True)
    vals = [v for rec in series.values() for v in rec["coupled"]]
    if vals and min(vals) > 0 and max(vals) / min(vals) > 30:
        ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("coupled cost")
    ax.set_title(scenario_id)
    if ax.get_legend_handles_labels()[0]:
        ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    # a null Date keeps the PNG bytes independent of when it was drawn
    fig.savefig(path, dpi=120, metadata={"Date": None})
    plt.close(fig)


def render_report(results_dir, report_dir=None) -> dict:
    """Summarize a results directory; returns paths and the overall flag.

    ``report.json`` holds each scenario verdict under its id plus
    ``all_pass``; one PNG is rendered beside it per scenario CSV.
    """
    if report_dir is None:
        report_dir = results_dir
    os.makedirs(report_dir, exist_ok=True)
    found = collect_results(results_dir)
    if not found:
        raise InvalidParameter(f"{results_dir}: no scenario outputs found")

    verdicts = {}
    figures = []
    for sid in sorted(found):
        entry = found[sid]
        if entry["verdict"] is not None:
            verdicts[sid] = entry["verdict"]
        if entry["csv"] is not None:
            series = read_series_csv(entry["csv"])
            fig_path = os.path.join(report_dir, f"{sid}.png")
            render_figure(sid, series, fig_path)
            figures.append(fig_path)

    all_pass = bool(verdicts) and all(v.get("pass", False)
                                      for v in verdicts.values())
    report = {
        "scenarios": verdicts,
        "n_scenarios": len(verdicts),
        "n_pass": sum(1 for v in verdicts.values() if v.get("pass", False)),
        "all_pass": all_pass,
    }
    report_path = os.path.join(report_dir, "report.json")
    with open(report_path, "w") as fh:
        fh.write(json.dumps(report, indent=2, sort_keys=True))
        fh.write("\n")
    return {"report_json": report_path, "figures": figures,
            "all_pass": all_pass}
