"""Per-epoch metrics and their CSV / JSON serialisation."""
from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

CSV_COLUMNS = ("epoch", "rounds", "samples_xi", "samples_zeta_grad", "samples_zeta_hess",
               "samples_zeta_jac", "grad_norm_sq", "x_err_sq", "y_err_sq", "inner_err_sq",
               "f_value")
CSV_HEADER = ",".join(CSV_COLUMNS)


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


def _sq(v):
    return float(np.dot(v, v))


def epoch_metrics(instance, x, y):
    """Distance-to-solution metrics at ``(x, y)``; NaN where undefined."""
    nan = math.nan
    grad = instance.hypergradient(x)
    x_err = nan if instance.x_star is None else _sq(x - instance.x_star)
    if instance.kind == "single-level":
        y_err = inner_err = nan
    else:
        y_err = nan if instance.y_star is None else _sq(y - instance.y_star)
        inner_err = _sq(y - instance.inner_solution(x))
    return {"grad_norm_sq": _sq(grad), "x_err_sq": x_err, "y_err_sq": y_err,
            "inner_err_sq": inner_err, "f_value": instance.f_value(x)}


@dataclass
class RunTrace:
    """Recorded epochs of one run plus the final state and ledger totals."""

    algorithm: str
    records: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    x: np.ndarray = None
    y: np.ndarray = None
    ledger: dict = field(default_factory=dict)
    truncations: list = field(default_factory=list)

    def record(self, epoch, ledger, metrics):
        row = {"epoch": int(epoch), "rounds": ledger.rounds,
               **{f"samples_{k}": v for k, v in ledger.samples.items()}}
        row.update(metrics)
        self.records.append(row)

    def column(self, name):
        return np.array([r[name] for r in self.records], dtype=float)

    @property
    def final(self):
        return self.records[-1]

    def best(self, name="grad_norm_sq"):
        return float(np.nanmin(self.column(name)))

    def to_csv(self):
        buf = io.StringIO()
        buf.write(CSV_HEADER + "\n")
        for r in self.records:
            buf.write(",".join(_fmt(r[c]) for c in CSV_COLUMNS) + "\n")
        return buf.getvalue()

    def summary(self):
        def clean(v):
            return None if isinstance(v, float) and math.isnan(v) else v
        return {
            "algorithm": self.algorithm,
            "config": self.config,
            "epochs_recorded": len(self.records),
            "final": {k: clean(v) for k, v in self.final.items()},
            "ledger": self.ledger,
            "final_x": None if self.x is None else [float(v) for v in self.x],
            "final_y": None if self.y is None else [float(v) for v in self.y],
        }


def write_trace(trace: RunTrace, csv_path, json_path=None):
    """Write the CSV rows and, if requested, the JSON summary.

    Raises ``OSError`` when a path cannot be written.
    """
    with open(csv_path, "w", newline="") as fh:
        fh.write(trace.to_csv())
    if json_path is not None:
        with open(json_path, "w") as fh:
            json.dump(trace.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")
