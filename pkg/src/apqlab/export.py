"""CSV writing with fixed column order and shortest round-trip number formatting."""

from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        return repr(x)
    if x is None:
        return ""
    return str(x)


def csv_text(header: Sequence[str], rows: Iterable[Sequence], comments: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    for line in comments:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_atomic(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path, header, rows, comments=()) -> None:
    write_atomic(path, csv_text(header, rows, comments))


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    """Header and rows, skipping ``#`` comment lines."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]


# ---------------------------------------------------------------------------
# Table builders shared by the CLI and tests


def class_headers(prefix: str, k: int) -> list[str]:
    return [f"{prefix}_{i}" for i in range(1, k + 1)]


def summary_rows(stats) -> tuple[list[str], list[list]]:
    header = ["class", "mean_delay", "delay_ci", "mean_sojourn", "sojourn_ci", "mean_queue", "count"]
    rows = [[i + 1, stats.mean_delay[i], stats.delay_ci[i], stats.mean_sojourn[i], stats.sojourn_ci[i],
             stats.mean_queue[i], stats.observations[i]] for i in range(stats.n_classes)]
    return header, rows


def series_rows(stats) -> tuple[list[str], list[list]]:
    header = ["time", *class_headers("Q", stats.n_classes)]
    rows = [[t, *q] for t, q in zip(stats.sample_times.tolist(), stats.series.tolist())]
    return header, rows


_KIND = {0: "departure", 1: "arrival", 2: "service_start"}


def trace_rows(trace) -> tuple[list[str], list[list]]:
    t, kind, cls, cid = trace.events()
    rows = [[a, _KIND[b], c, d] for a, b, c, d in zip(t.tolist(), kind.tolist(), cls.tolist(), cid.tolist())]
    return ["time", "event_kind", "class_index", "customer_id"], rows


def fluid_rows(traj, sample_interval=None) -> tuple[list[str], list[list]]:
    k = len(traj.arrival_rates)
    header = ["time", *class_headers("L", k), *class_headers("P", k), "active_set"]
    return header, traj.rows(sample_interval)
