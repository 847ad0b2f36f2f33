"""Tidy CSV emission from result records for downstream plotting."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .records import read_records


class PlotDataError(ValueError):
    pass


@dataclass(frozen=True)
class PlotSpec:
    x: str                        # metadata field providing the x value
    y: str                        # metric name providing y (value, se)
    groups: tuple[str, ...] = ()  # metadata fields forming the group key
    transform: str = "none"       # "none" or "log" (applied to y)


def emit_plot_data(records_path, spec: PlotSpec, out_csv) -> int:
    """Write `group...,x,y,y_se` rows sorted by group then x.

    Multiple records at the same (group, x) aggregate to their median with a
    spread-based standard error. The log transform drops nonpositive y values
    and returns the drop count.
    """
    records = [r for r in read_records(records_path) if r.metric == spec.y]
    if not records:
        available = sorted({r.metric for r in read_records(records_path)})
        raise PlotDataError(f"metric {spec.y!r} not found; available: {available}")

    def field_of(rec, name):
        if name not in rec.metadata:
            available = sorted(rec.metadata)
            raise PlotDataError(f"field {name!r} absent; available: {available}")
        return rec.metadata[name]

    buckets: dict[tuple, list] = {}
    for rec in records:
        if rec.value is None:
            continue
        key = tuple(field_of(rec, g) for g in spec.groups) + (field_of(rec, spec.x),)
        buckets.setdefault(key, []).append((rec.value, rec.se))

    rows = []
    dropped = 0
    for key in sorted(buckets, key=lambda k: tuple(str(v) for v in k)):
        values = [v for v, _ in buckets[key]]
        ses = [s for _, s in buckets[key] if s is not None]
        y = float(np.median(values))
        if len(values) > 1:
            y_se = float(np.std(values, ddof=1) / math.sqrt(len(values)))
        else:
            y_se = ses[0] if ses else 0.0
        if spec.transform == "log":
            if y <= 0:
                dropped += 1
                continue
            y_ratio_se = y_se / y
            y, y_se = math.log(y), y_ratio_se
        rows.append(list(key[:-1]) + [key[-1], y, y_se])

    out_csv = Path(out_csv)
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    with out_csv.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(spec.groups) + [spec.x, "y", "y_se"])
        writer.writerows(rows)
    return dropped
