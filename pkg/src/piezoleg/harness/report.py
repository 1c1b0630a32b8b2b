"""Best-performance tables per stride frequency from finished sweeps and baselines.

Given several output directories (e.g. two simulated robots) the per-directory
best values are averaged.
"""

import math
from pathlib import Path

import numpy as np

from .sweep import GAIT_SHAPES, MATCHINGS, read_csv

METRICS = ("nu", "sigma", "epsilon")
REPORT_FIELDS = ("gait", "source", "f_hz", "nu", "sigma", "epsilon", "runs")


def _sources(out_dir, gait):
    out_dir = Path(out_dir)
    yield "closed_loop", out_dir / f"sweep_{gait}" / "results.csv"
    for m in MATCHINGS:
        yield f"{m}_sine", out_dir / f"baseline_{gait}_{m}" / "results.csv"


def best_metrics(rows):
    """``{f_hz: {metric: max over rows}}``, ignoring NaN and diverged rows."""
    out = {}
    for r in rows:
        for k in METRICS:
            v = r.get(k)
            if v is None or not math.isfinite(v):
                continue
            cell = out.setdefault(r["f_hz"], {})
            cell[k] = max(cell.get(k, -math.inf), v)
    return out


def build_report(out_dirs):
    """Rows of REPORT_FIELDS for every gait and source found in ``out_dirs``."""
    collected = {}
    for d in out_dirs:
        for gait in GAIT_SHAPES:
            for source, path in _sources(d, gait):
                if not path.exists():
                    continue
                for f, cell in best_metrics(read_csv(path)).items():
                    collected.setdefault((gait, source, f), []).append(cell)
    rows = []
    order = {s: i for i, s in enumerate(["closed_loop"] + [f"{m}_sine" for m in MATCHINGS])}
    for (gait, source, f), cells in sorted(collected.items(),
                                           key=lambda kv: (kv[0][0], order[kv[0][1]], kv[0][2])):
        row = {"gait": gait, "source": source, "f_hz": f, "runs": len(cells)}
        for k in METRICS:
            vals = [c[k] for c in cells if k in c]
            row[k] = float(np.mean(vals)) if vals else math.nan
        rows.append(row)
    return rows


def format_report(rows):
    lines = [f"{'gait':<6} {'source':<16} {'f_hz':>6} {'nu':>8} {'sigma':>8} {'epsilon':>8}"]
    for r in rows:
        lines.append(f"{r['gait']:<6} {r['source']:<16} {r['f_hz']:>6g} "
                     f"{r['nu']:>8.3f} {r['sigma']:>8.3f} {r['epsilon']:>8.3f}")
    return "\n".join(lines)
