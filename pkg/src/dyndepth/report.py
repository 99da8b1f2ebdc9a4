"""Run report serialization: JSON documents and flat CSV tables.

Floats are formatted with a fixed 12-significant-digit pattern so repeated
runs with the same config produce byte-identical files.
"""

from __future__ import annotations

import csv
import json

from .dynamic import RunReport

METRIC_COLUMNS = [
    "scale",
    "height",
    "width",
    "dynamic",
    "compute_fraction",
    "mean_depth",
    "budget_target",
    "ssim_codes",
    "mse_codes",
    "ssim_feature",
    "mse_feature",
]


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def scale_rows(report: RunReport) -> list[dict]:
    rows = []
    for s in report.scales:
        rows.append(
            {
                "scale": s.scale,
                "height": s.height,
                "width": s.width,
                "dynamic": s.dynamic,
                "compute_fraction": s.compute_fraction,
                "mean_depth": s.mean_depth,
                "budget_target": s.budget_target,
                "ssim_codes": s.ssim_codes,
                "mse_codes": s.mse_codes,
                "ssim_feature": s.ssim_feature,
                "mse_feature": s.mse_feature,
            }
        )
    return rows


def report_to_dict(report: RunReport, seed: int) -> dict:
    return {
        "seed": seed,
        "speedup": float(format(report.speedup, ".12g")),
        "scales": [
            {k: (float(_fmt(v)) if isinstance(v, float) else v) for k, v in row.items()}
            for row in scale_rows(report)
        ],
    }


def write_report_json(path, report: RunReport, seed: int) -> None:
    with open(path, "w") as f:
        json.dump(report_to_dict(report, seed), f, indent=2, sort_keys=True)
        f.write("\n")


def write_metrics_csv(path, report: RunReport) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(METRIC_COLUMNS)
        for row in scale_rows(report):
            writer.writerow([_fmt(row[col]) for col in METRIC_COLUMNS])


def write_table_csv(path, columns: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(col)) for col in columns])
