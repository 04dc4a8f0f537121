"""Reports, two-sample KS panels and deterministic file output."""

import csv
import json
import os
import platform
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

STAT_COLUMNS = ("test", "part", "curve", "node", "time", "statistic", "p_value", "p_corrected", "passed")


def fmt(v):
    """17 significant digits for floats; integers and strings as they are."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return "" if v is None else str(v)


def write_csv(path, columns, rows):
    """Write rows (dicts or sequences) with a fixed header; floats use 17 significant digits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            vals = [row.get(c) for c in columns] if isinstance(row, dict) else list(row)
            w.writerow([fmt(v) for v in vals])


def software_versions():
    import numba
    import scipy

    from .. import __version__

    return {"areatilt": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "numba": numba.__version__, "python": platform.python_version()}


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not serializable: {type(o).__name__}")


def ks_panel(test, part, a, b, labels, level):
    """Two-sample KS on each column of ``a`` vs ``b`` with Bonferroni correction.

    ``labels`` holds one ``(curve, node, time)`` per column.  Returns (rows, passed).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    m = a.shape[1]
    rows = []
    for j in range(m):
        res = stats.ks_2samp(a[:, j], b[:, j])
        corrected = min(1.0, float(res.pvalue) * m)
        curve, node, time = labels[j]
        rows.append({"test": test, "part": part, "curve": curve, "node": node, "time": time,
                     "statistic": float(res.statistic), "p_value": float(res.pvalue),
                     "p_corrected": corrected, "passed": corrected > level})
    return rows, all(r["passed"] for r in rows)


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class Report:
    kind: str
    checks: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    telemetry: dict = field(default_factory=dict)
    manifest: dict = field(default_factory=dict)
    header: str = ""
    notes: list = field(default_factory=list)
    inconclusive: bool = False
    wall_clock: float = 0.0

    @property
    def passed(self):
        return not self.inconclusive and bool(self.checks) and all(c.passed for c in self.checks)

    def add(self, name, passed, detail=""):
        self.checks.append(Check(name, bool(passed), detail))

    def lines(self):
        out = [self.header] if self.header else []
        for c in self.checks:
            out.append(f"{'PASS' if c.passed else 'FAIL'}  {c.name}" + (f"  ({c.detail})" if c.detail else ""))
        if self.inconclusive:
            out.append("INCONCLUSIVE  " + "; ".join(self.notes))
        out.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return out

    def as_dict(self):
        return {
            "kind": self.kind, "header": self.header, "passed": self.passed, "inconclusive": self.inconclusive,
            "checks": [{"name": c.name, "passed": c.passed, "detail": c.detail} for c in self.checks],
            "telemetry": self.telemetry, "notes": self.notes, "wall_clock_seconds": self.wall_clock,
            "manifest": self.manifest,
        }

    def write(self, out_dir):
        """statistics.csv, one CSV per table, report.json and manifest.json."""
        os.makedirs(out_dir, exist_ok=True)
        write_csv(os.path.join(out_dir, "statistics.csv"), STAT_COLUMNS, self.rows)
        for name, (columns, rows) in sorted(self.tables.items()):
            write_csv(os.path.join(out_dir, f"{name}.csv"), columns, rows)
        write_json(os.path.join(out_dir, "report.json"), self.as_dict())
        write_json(os.path.join(out_dir, "manifest.json"), self.manifest)
        return out_dir
