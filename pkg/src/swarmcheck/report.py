"""Run reporting: consolidated JSON, a delimited run table, and figures.

The hive knows trace numbers and timings; the workers log states and
transitions per run as JSON lines.  Consolidation joins the two into the
final report schema (estimated runs, actual runs, max/total states,
max/total time) and, when an output directory is given, renders the run
table as CSV and a couple of matplotlib figures next to it.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Optional

__all__ = [
    "load_run_records",
    "consolidate",
    "write_run_table",
    "render_figures",
    "summary_lines",
]

RUN_FIELDS = [
    "trace_id",
    "worker",
    "states",
    "transitions",
    "duration",
    "reached",
    "consumed_fully",
    "bug",
]


def load_run_records(paths: Iterable[Path]) -> list[dict]:
    """Read worker JSONL logs; keeps only per-trace run records."""
    records: list[dict] = []
    for path in paths:
        path = Path(path)
        if not path.exists():
            continue
        with path.open("r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                record = json.loads(line)
                if "trace_id" in record and "states" in record:
                    records.append(record)
    return records


def consolidate(hive_report: dict, records: list[dict], workers: int) -> dict:
    """Fill the state columns of the hive report from worker run records."""
    report = dict(hive_report)
    states = [r["states"] for r in records]
    durations = [r["duration"] for r in records]
    report["workers"] = workers
    report["max_states"] = max(states) if states else 0
    report["total_states"] = sum(states)
    report["max_time_s"] = round(max(durations), 6) if durations else 0.0
    report["total_time_s"] = round(sum(durations), 6)
    report["per_run"] = sorted(records, key=lambda r: r.get("ts", 0.0))
    return report


def write_run_table(records: list[dict], path: Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=RUN_FIELDS, extrasaction="ignore")
        writer.writeheader()
        for record in records:
            row = dict(record)
            bug = row.get("bug")
            row["bug"] = bug["label"] if isinstance(bug, dict) else ""
            writer.writerow(row)


def render_figures(report: dict, records: list[dict], outdir: Path) -> list[Path]:
    """Render per-run state counts and coverage progress as PNG files."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    states = sorted((r["states"] for r in records), reverse=True)
    if states:
        fig, ax = plt.subplots(figsize=(7, 4))
        ax.bar(range(len(states)), states, width=1.0, color="#4878a8", edgecolor="none")
        ax.set_xlabel("run (sorted by size)")
        ax.set_ylabel("states explored")
        ax.set_title(f"states per run (max {states[0]}, total {sum(states)})")
        fig.tight_layout()
        path = outdir / "states_per_run.png"
        fig.savefig(path, dpi=110)
        plt.close(fig)
        written.append(path)

    progress = report.get("covered_progress") or []
    total = report.get("est_runs")
    if progress and total:
        times = [p[0] for p in progress]
        fraction = [p[1] / total for p in progress]
        fig, ax = plt.subplots(figsize=(7, 4))
        ax.step([0.0] + times, [0.0] + fraction, where="post", color="#a84848")
        ax.set_xlabel("seconds since start")
        ax.set_ylabel("trace numbers covered (fraction)")
        ax.set_ylim(0.0, 1.05)
        ax.set_title("ledger coverage over time")
        fig.tight_layout()
        path = outdir / "coverage.png"
        fig.savefig(path, dpi=110)
        plt.close(fig)
        written.append(path)
    return written


def summary_lines(report: dict) -> list[str]:
    """Human-readable summary in the usual results-table column order."""
    return [
        f"termination:   {report.get('termination')}",
        f"# est. runs:   {report.get('est_runs')}",
        f"# runs:        {report.get('runs')}",
        f"max. # states: {report.get('max_states')}",
        f"max. time:     {report.get('max_time_s')} s",
        f"total # states: {report.get('total_states')}",
        f"total time:    {report.get('total_time_s')} s",
    ]
