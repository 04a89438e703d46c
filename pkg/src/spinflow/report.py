"""Run artifacts: delimited series, machine-readable reports and figures.

Every series-producing command writes `series.csv` plus a rendered PNG of
the same data next to it; checks are collected into a deterministic
`report.json` (timestamps and environment go to `meta.json` so reports
stay byte-identical for identical config and seed).
"""

from __future__ import annotations

import csv
import json
import os
import platform
import time
from dataclasses import dataclass, field

import numpy as np

SERIES_COLUMNS = ["step", "t", "E", "E_n-1", "E_n", "Qv_l2", "Qh_l2", "min_psi", "max_psi"]


@dataclass
class CheckReport:
    checks: list = field(default_factory=list)

    def add(self, name: str, measured: float, expected: float, tolerance: float, passed: bool | None = None) -> bool:
        if passed is None:
            passed = bool(abs(measured - expected) <= tolerance)
        self.checks.append(
            {
                "check_name": name,
                "measured": float(measured),
                "expected": float(expected),
                "tolerance": float(tolerance),
                "pass": bool(passed),
            }
        )
        return bool(passed)

    @property
    def all_passed(self) -> bool:
        return all(c["pass"] for c in self.checks)

    def to_json(self, extra: dict | None = None) -> str:
        payload = {"checks": self.checks, "all_passed": self.all_passed}
        if extra:
            payload.update(extra)
        return json.dumps(payload, indent=2, sort_keys=True)


def write_report(out_dir: str, report: CheckReport, config: dict, extra: dict | None = None) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        fh.write(report.to_json(extra))
        fh.write("\n")
    meta = {
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "config": config,
    }
    with open(os.path.join(out_dir, "meta.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_series(out_dir: str, rows: list[dict], render: bool = True) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "series.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SERIES_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in SERIES_COLUMNS})
    if render:
        render_series_figure(rows, os.path.join(out_dir, "series.png"))
    return path


def render_series_figure(rows: list[dict], path: str) -> None:
    """Energy and gradient-norm history alongside the CSV."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    t = [r["t"] for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 3.4))
    ax1.plot(t, [r["E_n-1"] for r in rows], label="E_{n-1}")
    ax1.plot(t, [r["E_n"] for r in rows], label="E_n")
    ax1.plot(t, [r["E_n-1"] + r["E_n"] for r in rows], label="sum", lw=2, color="k")
    ax1.set_xlabel("t")
    ax1.set_ylabel("energy")
    ax1.legend(frameon=False, fontsize=8)
    ax2.semilogy(t, [max(r["Qv_l2"], 1e-300) for r in rows], label="|Q_v|")
    ax2.semilogy(t, [max(r["Qh_l2"], 1e-300) for r in rows], label="|Q_h|")
    ax2.set_xlabel("t")
    ax2.set_ylabel("gradient L2 norm")
    ax2.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_defect_figure(levels: list[int], defects: list[float], path: str, title: str) -> None:
    """Log-log convergence plot for the gradient-check command."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(4.4, 3.4))
    ax.loglog(levels, defects, "o-", label="measured defect")
    ref = [defects[0] * (levels[0] / N) ** 2 for N in levels]
    ax.loglog(levels, ref, "--", color="gray", label="order 2")
    ax.set_xlabel("N")
    ax.set_ylabel("normalized defect")
    ax.set_title(title, fontsize=9)
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def write_snapshot(out_dir: str, tag: str, arrays: dict, meta: dict) -> None:
    """Binary little-endian float64 snapshot with a JSON sidecar."""
    os.makedirs(out_dir, exist_ok=True)
    sidecar = {"arrays": {}, **meta}
    for name, arr in arrays.items():
        fname = f"{tag}_{name}.bin"
        arr.astype("<f8").tofile(os.path.join(out_dir, fname))
        sidecar["arrays"][name] = {"file": fname, "shape": list(arr.shape), "dtype": "<f8"}
    with open(os.path.join(out_dir, f"{tag}.json"), "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
