from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from ..wavegen.interferers import CLASS_NAMES


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=False) + "\n")


def write_tables(report: dict, csv_dir) -> dict:
    """Write confusion.csv, acc_vs_sir.csv and acc_vs_snr.csv; return their paths."""
    csv_dir = Path(csv_dir)
    csv_dir.mkdir(parents=True, exist_ok=True)
    paths = {}
    p = csv_dir / "confusion.csv"
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["true\\pred", *CLASS_NAMES])
        for name, row in zip(CLASS_NAMES, report["confusion"]):
            w.writerow([name, *(f"{v:.6f}" for v in row)])
    paths["confusion"] = p
    for key, label in (("acc_vs_sir", "sir_db"), ("acc_vs_snr", "snr_db")):
        p = csv_dir / f"{key}.csv"
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([label, "accuracy"])
            for level, acc in sorted(report[key].items(), key=lambda kv: float(kv[0])):
                w.writerow([f"{float(level):g}", f"{acc:.6f}"])
        paths[key] = p
    return paths


def compare_strategies(rand_report: dict, pre_report: dict) -> dict:
    """Side-by-side stability of the two strategies; the ordering is informational only."""
    d_rand = rand_report["stability_delta"]
    d_pre = pre_report["stability_delta"]
    return {
        "rand_stability_delta": d_rand,
        "pre_stability_delta": d_pre,
        "rand_instances": len(rand_report["instances"]),
        "pre_instances": len(pre_report["instances"]),
        "pre_more_stable": bool(d_pre < d_rand),
        "stochastic": True,
        "note": "desk-scale deltas vary with seeds; the ordering is logged, not asserted",
    }
