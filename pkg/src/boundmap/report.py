"""Per-scan update reports and their CSV form."""

from __future__ import annotations

import csv
import statistics
from dataclasses import asdict, dataclass, fields
from typing import IO, Sequence

CSV_COLUMNS = (
    "scan_index",
    "n_points",
    "n_rays",
    "traversed",
    "L_size",
    "F_size",
    "records_added",
    "records_removed",
    "record_count",
    "t_depth_us",
    "t_candidates_us",
    "t_raycast_us",
    "t_update_us",
    "t_total_us",
)

TIMING_COLUMNS = tuple(c for c in CSV_COLUMNS if c.startswith("t_"))


@dataclass
class UpdateReport:
    scan_index: int = 0
    n_points: int = 0
    n_rays: int = 0
    traversed: int = 0
    L_size: int = 0
    F_size: int = 0
    records_added: int = 0
    records_removed: int = 0
    record_count: int = 0
    t_depth_us: int = 0
    t_candidates_us: int = 0
    t_raycast_us: int = 0
    t_update_us: int = 0
    t_total_us: int = 0

    def row(self) -> list[int]:
        return [getattr(self, c) for c in CSV_COLUMNS]


assert tuple(f.name for f in fields(UpdateReport)) == CSV_COLUMNS


def write_csv(out: IO[str], reports: Sequence[UpdateReport], extra: dict[str, Sequence] | None = None) -> None:
    """One header row, then one row per report; ``extra`` appends columns."""
    extra = extra or {}
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(list(CSV_COLUMNS) + list(extra))
    for n, rep in enumerate(reports):
        writer.writerow(rep.row() + [col[n] for col in extra.values()])


def summarize(reports: Sequence[UpdateReport], warmup: int = 1) -> dict[str, dict[str, float]]:
    """Mean and median of each column over the reports after the warm-up scans."""
    steady = list(reports[warmup:]) or list(reports)
    out: dict[str, dict[str, float]] = {}
    for col in CSV_COLUMNS[1:]:
        vals = [getattr(r, col) for r in steady]
        out[col] = {
            "mean": statistics.fmean(vals) if vals else 0.0,
            "median": statistics.median(vals) if vals else 0.0,
        }
    return out


def as_dict(report: UpdateReport) -> dict[str, int]:
    return asdict(report)
