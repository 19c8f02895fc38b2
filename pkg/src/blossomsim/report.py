"""
Report tables, artifact files and figures.

Every table has the frozen header ``row,boundary,center,total``; the row
labels of each table are listed in :data:`TABLE_ROWS`. Undefined ratios
(e.g. a proportion over zero flowers) are written as empty cells.
"""

from __future__ import annotations

import csv
import io
import json
import os
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .execution import CATEGORIES, PHASES, RunSummary

SCHEMA_VERSION = 1
COLUMNS = ("row", "boundary", "center", "total")
TABLE_NAMES = ("funnel", "motion_plan", "efficiency", "cycle_time")
TABLE_TITLES = {
    "funnel": "Detected clusters vs clusters attempted",
    "motion_plan": "Accepted clusters vs motion-plan outcome",
    "efficiency": "Thinning efficiency",
    "cycle_time": "Mean cycle time per thinned cluster [s]",
}
TABLE_ROWS = {
    "funnel": ("accepted", "rejected_automatic", "rejected_policy", "total", "acceptance_rate"),
    "motion_plan": ("success", "no_ik", "non_optimal_ik", "total", "success_rate"),
    "efficiency": tuple(c.value for c in CATEGORIES)
    + ("thinned_proportion", "clusters_thinned", "clusters_completely_removed", "proportional_success"),
    "cycle_time": PHASES + ("total", "cycles"),
}
TRACE_COLUMNS = (
    ("seed", "cluster_id", "strategy", "ik", "aborted", "enter_s", "exit_s", "duration_s")
    + tuple(f"{p}_s" for p in PHASES)
    + ("flowers", "completely_removed", "states")
)
FORMATS = ("delimited", "structured", "plain")


def _ratio(num, den) -> Optional[float]:
    return num / den if den else None


def _rows(name: str, s: RunSummary) -> dict:
    if name == "funnel":
        return {
            "accepted": s.accepted,
            "rejected_automatic": s.rejected_auto,
            "rejected_policy": s.rejected_policy,
            "total": s.detected,
            "acceptance_rate": _ratio(s.accepted, s.detected),
        }
    if name == "motion_plan":
        return {
            "success": s.success,
            "no_ik": s.no_ik,
            "non_optimal_ik": s.non_optimal,
            "total": s.accepted,
            "success_rate": _ratio(s.success, s.accepted),
        }
    if name == "efficiency":
        n = s.flowers_total
        out = {c.value: _ratio(s.flower_counts[c.value], n) for c in CATEGORIES}
        out["thinned_proportion"] = s.thinned_proportion if n else None
        out["clusters_thinned"] = s.clusters_thinned
        out["clusters_completely_removed"] = s.clusters_completely_removed
        out["proportional_success"] = s.proportional_success if s.clusters_thinned else None
        return out
    if name == "cycle_time":
        n = s.cycle_count
        out = {p: (v if n else None) for p, v in s.phase_means().items()}
        out["total"] = s.mean_cycle_time if n else None
        out["cycles"] = n
        return out
    raise KeyError(name)


def table(name: str, summaries: Mapping[str, RunSummary]) -> list:
    """Rows ``[label, boundary, center, total]``; no rows when nothing was detected."""
    if not any(s.detected for s in summaries.values()):
        return []
    per = {k: _rows(name, s) for k, s in summaries.items()}
    return [[label] + [per[c][label] if c in per else None for c in COLUMNS[1:]] for label in TABLE_ROWS[name]]


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def table_csv(name: str, summaries: Mapping[str, RunSummary]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for row in table(name, summaries):
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _pct(x: Optional[float]) -> str:
    return "n/a" if x is None else f"{100.0 * x:.0f}%"


def headline(summaries: Mapping[str, RunSummary]) -> list:
    """One-line results: acceptance, motion-plan success, thinned share, proportional success."""
    strat = [k for k in ("boundary", "center") if k in summaries]
    total = summaries.get("total")
    lines = []

    def per(fn):
        return " / ".join(f"{k} {_pct(fn(summaries[k]))}" for k in strat)

    lines.append("acceptance " + per(lambda s: _ratio(s.accepted, s.detected)))
    lines.append("motion-plan success " + per(lambda s: _ratio(s.success, s.accepted)))
    if any(summaries[k].flowers_total for k in strat):
        lines.append("flowers thinned " + per(lambda s: s.thinned_proportion if s.flowers_total else None))
        lines.append("flowers saved " + per(lambda s: s.saved_proportion if s.flowers_total else None))
    if any(summaries[k].cycle_count for k in strat):
        lines.append(
            "mean cycle time "
            + " / ".join(f"{k} {summaries[k].mean_cycle_time:.2f} s" for k in strat if summaries[k].cycle_count)
        )
    if total is not None and total.clusters_thinned:
        lines.append(f"proportional success {_pct(total.proportional_success)}")
    return lines


def render_plain(summaries: Mapping[str, RunSummary]) -> str:
    out = []
    for name in TABLE_NAMES:
        out.append(f"{TABLE_TITLES[name]}")
        rows = [list(COLUMNS)] + [[_cell(v) for v in r] for r in table(name, summaries)]
        widths = [max(len(r[i]) for r in rows) for i in range(len(COLUMNS))]
        for r in rows:
            out.append("  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths))).rstrip())
        out.append("")
    out.extend(headline(summaries))
    return "\n".join(out) + "\n"


def render_delimited(summaries: Mapping[str, RunSummary]) -> str:
    parts = []
    for name in TABLE_NAMES:
        parts.append(f"# {name}\n" + table_csv(name, summaries))
    return "\n".join(parts)


def structured(summaries: Mapping[str, RunSummary], mode: str, extra: Optional[dict] = None) -> dict:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "mode": mode,
        "summaries": {k: s.to_dict() for k, s in summaries.items()},
        "tables": {name: {"columns": list(COLUMNS), "rows": table(name, summaries)} for name in TABLE_NAMES},
        "headline": headline(summaries),
    }
    if extra:
        doc.update(extra)
    return doc


def render_structured(summaries: Mapping[str, RunSummary], mode: str = "simulation", extra: Optional[dict] = None) -> str:
    return json.dumps(structured(summaries, mode, extra), indent=1, sort_keys=True) + "\n"


def report_tables(summaries: Mapping[str, RunSummary], fmt: str = "plain", mode: str = "simulation",
                  extra: Optional[dict] = None) -> str:
    if fmt == "delimited":
        return render_delimited(summaries)
    if fmt == "structured":
        return render_structured(summaries, mode, extra)
    if fmt == "plain":
        return render_plain(summaries)
    raise ValueError(f"unknown format {fmt!r}")


def traces_csv(replicates: Sequence) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for rep in replicates:
        for res in rep.results.values():
            for t in res.traces:
                w.writerow(
                    [rep.seed, t.cluster_id, t.strategy.value, t.ik.value, _cell(t.aborted),
                     repr(t.enter_time), repr(t.exit_time), repr(t.duration)]
                    + [repr(float(t.phase_durations[p])) if p in t.phase_durations else "" for p in PHASES]
                    + [len(t.flower_outcomes), _cell(t.completely_removed) if not t.aborted else "",
                       " ".join(s.value for s, _ in t.state_sequence)]
                )
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Figures
# ---------------------------------------------------------------------------

_STRATS = ("boundary", "center")


def _save(fig, path: Path):
    # drop the Software tag so PNG bytes depend only on the data
    fig.savefig(path, dpi=100, metadata={"Software": None})


def render_figures(summaries: Mapping[str, RunSummary], out_dir) -> list:
    """Write PNG figures for the available tables; returns the written paths."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    strat = [k for k in _STRATS if k in summaries]
    written = []
    if not strat:
        return written

    # funnel and motion-plan outcome counts
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6))
    for ax, name, keys in (
        (axes[0], "funnel", ("accepted", "rejected_automatic", "rejected_policy")),
        (axes[1], "motion_plan", ("success", "no_ik", "non_optimal_ik")),
    ):
        width = 0.8 / len(strat)
        for i, k in enumerate(strat):
            rows = _rows(name, summaries[k])
            xs = [j + (i - (len(strat) - 1) / 2) * width for j in range(len(keys))]
            ax.bar(xs, [rows[r] for r in keys], width, label=k)
        ax.set_xticks(range(len(keys)))
        ax.set_xticklabels([r.replace("_", " ") for r in keys], fontsize=8)
        ax.set_title(TABLE_TITLES[name], fontsize=9)
        ax.set_ylabel("clusters")
        ax.legend(fontsize=8)
    fig.tight_layout()
    path = out_dir / "funnel.png"
    _save(fig, path)
    plt.close(fig)
    written.append(path)

    if any(summaries[k].flowers_total for k in strat):
        fig, ax = plt.subplots(figsize=(5, 3.6))
        bottom = [0.0] * len(strat)
        for c in CATEGORIES:
            vals = [100.0 * summaries[k].proportion(c) for k in strat]
            ax.bar(strat, vals, 0.6, bottom=bottom, label=c.value.replace("_", " "))
            bottom = [b + v for b, v in zip(bottom, vals)]
        ax.set_ylabel("flowers [%]")
        ax.set_title(TABLE_TITLES["efficiency"], fontsize=9)
        ax.legend(fontsize=7, loc="upper left", bbox_to_anchor=(1.0, 1.0))
        fig.tight_layout()
        path = out_dir / "efficiency.png"
        _save(fig, path)
        plt.close(fig)
        written.append(path)

    if any(summaries[k].cycle_count for k in strat):
        fig, ax = plt.subplots(figsize=(5.5, 3.6))
        bottom = [0.0] * len(strat)
        for p in PHASES:
            vals = [summaries[k].phase_means()[p] for k in strat]
            ax.bar(strat, vals, 0.6, bottom=bottom, label=p.replace("_", " "))
            bottom = [b + v for b, v in zip(bottom, vals)]
        ax.set_ylabel("seconds per cluster")
        ax.set_title(TABLE_TITLES["cycle_time"], fontsize=9)
        ax.legend(fontsize=7, loc="upper left", bbox_to_anchor=(1.0, 1.0))
        fig.tight_layout()
        path = out_dir / "cycle_time.png"
        _save(fig, path)
        plt.close(fig)
        written.append(path)
    return written


# ---------------------------------------------------------------------------
# Artifact bundle
# ---------------------------------------------------------------------------

REPORT_EXT = {"delimited": "csv", "structured": "json", "plain": "txt"}


def write_artifacts(out_dir, summaries: Mapping[str, RunSummary], fmt: str, mode: str,
                    replicates: Optional[Sequence] = None, decisions_text: Optional[str] = None,
                    extra: Optional[dict] = None, figures: bool = True) -> dict:
    """Write every deterministic artifact of a run and return ``{name: path}``.

    Files: summary.json, one CSV per table, report.<ext> in the requested
    format, decisions.csv, traces.csv (simulations only) and PNG figures
    under ``figures/``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {}

    def put(name, text):
        p = out / name
        with open(p, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        files[name] = p

    put("summary.json", render_structured(summaries, mode, extra))
    for name in TABLE_NAMES:
        put(f"{name}.csv", table_csv(name, summaries))
    put(f"report.{REPORT_EXT[fmt]}", report_tables(summaries, fmt, mode, extra))
    if decisions_text is not None:
        put("decisions.csv", decisions_text)
    if replicates is not None:
        put("traces.csv", traces_csv(replicates))
    if figures:
        for p in render_figures(summaries, out / "figures"):
            files[os.path.join("figures", p.name)] = p
    return files
