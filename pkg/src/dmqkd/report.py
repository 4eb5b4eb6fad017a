"""Results table: one row per (format, distance) operating point."""

import csv
import json
import os
from dataclasses import asdict, dataclass, fields

__all__ = ["ReportRow", "row_from_summary", "collect_rows", "write_report_csv", "read_report_csv",
           "format_table"]


@dataclass(frozen=True)
class ReportRow:
    format: str
    distance_km: float
    nu: float
    va: float
    xi_hat: float
    xi_se: float
    transmittance_hat: float
    skr_mbps: float


def row_from_summary(s):
    return ReportRow(
        format=s["format"], distance_km=float(s["distance_km"]), nu=float(s["nu"]), va=float(s["va"]),
        xi_hat=float(s["xi_mean"]), xi_se=float(s["xi_se"]),
        transmittance_hat=float(s["transmittance_mean"]), skr_mbps=float(s["skr_at_mean_bps"]) / 1e6,
    )


def collect_rows(paths):
    """Rows from ``summary.json`` files, or directories containing one, sorted by format then distance."""
    rows = []
    for p in paths:
        if os.path.isdir(p):
            p = os.path.join(p, "summary.json")
        with open(p) as fh:
            rec = json.load(fh)
        rows.append(row_from_summary(rec.get("summary", rec)))
    return sorted(rows, key=lambda r: (r.format, r.distance_km))


_FIELDS = [f.name for f in fields(ReportRow)]


def write_report_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_FIELDS)
        for r in rows:
            d = asdict(r)
            w.writerow([d[k] if isinstance(d[k], str) else repr(d[k]) for k in _FIELDS])


def read_report_csv(path):
    with open(path, newline="") as fh:
        return [ReportRow(**{k: (v if k == "format" else float(v)) for k, v in row.items()})
                for row in csv.DictReader(fh)]


def format_table(rows):
    """Fixed-width text table; an empty list gives the header alone."""
    head = f"{'format':<9}{'d [km]':>8}{'nu':>8}{'V_A':>9}{'xi_hat':>10}{'+-SE':>9}{'T_hat':>9}{'SKR [Mbps]':>12}"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(f"{r.format:<9}{r.distance_km:>8g}{r.nu:>8.3f}{r.va:>9.3f}{r.xi_hat:>10.4f}"
                     f"{r.xi_se:>9.4f}{r.transmittance_hat:>9.4f}{r.skr_mbps:>12.3f}")
    return "\n".join(lines)
