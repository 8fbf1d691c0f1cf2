"""Tolerance-based accuracy and report emission.

A sample passes at tolerance tau when its entrywise-l1 relative error is
strictly below tau:

    sum_jk |pred_jk - true_jk| / (sum_jk |true_jk| + eps) < tau

Malformed predictions (unparseable decoder output) count as failures at
every tolerance and are reported in their own column.
"""

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError

METRIC_EPS = 1e-7
DEFAULT_TAUS = (0.05, 0.02, 0.01, 0.005)

CSV_COLUMNS = ["function", "arch_or_scheme", "n", "tau", "accuracy", "n_eval", "malformed"]


def relative_l1_errors(predictions, targets, eps: float = METRIC_EPS) -> np.ndarray:
    """Per-sample guarded relative errors; malformed predictions (None)
    come back as +inf."""
    if len(predictions) != len(targets):
        raise DimensionError("prediction/target counts differ")
    if len(targets) == 0:
        raise DimensionError("empty evaluation set")
    out = np.empty(len(targets))
    for i, (p, t) in enumerate(zip(predictions, targets)):
        t = np.asarray(t, dtype=np.float64)
        if p is None:
            out[i] = np.inf
            continue
        p = np.asarray(p, dtype=np.float64)
        if p.shape != t.shape:
            raise DimensionError(f"sample {i}: shape {p.shape} != {t.shape}")
        out[i] = np.abs(p - t).sum() / (np.abs(t).sum() + eps)
    return out


def tolerance_accuracy(predictions, targets, tau: float, eps: float = METRIC_EPS) -> float:
    """Fraction of samples with relative error strictly below tau."""
    errors = relative_l1_errors(predictions, targets, eps)
    return float((errors < tau).mean())


@dataclass
class ResultSet:
    """Predictions of one (function, arch/scheme, n) cell."""

    function: str
    arch_or_scheme: str
    n: int
    predictions: list
    targets: list

    @property
    def malformed(self) -> int:
        return sum(1 for p in self.predictions if p is None)


@dataclass
class AccuracyReport:
    rows: list = field(default_factory=list)  # dicts keyed by CSV_COLUMNS

    def to_csv(self) -> str:
        buf = io.StringIO(newline="")
        writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow(row)
        return buf.getvalue()

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())


def report(results, taus=DEFAULT_TAUS, eps: float = METRIC_EPS) -> AccuracyReport:
    """One row per (result set, tau); accuracy is nonincreasing as tau
    shrinks on the same predictions."""
    results = list(results)
    if not results:
        raise DimensionError("no result sets to report")
    rep = AccuracyReport()
    for rs in results:
        errors = relative_l1_errors(rs.predictions, rs.targets, eps)
        for tau in taus:
            rep.rows.append(
                {
                    "function": rs.function,
                    "arch_or_scheme": rs.arch_or_scheme,
                    "n": rs.n,
                    "tau": repr(float(tau)),
                    "accuracy": repr(float((errors < tau).mean())),
                    "n_eval": len(rs.targets),
                    "malformed": rs.malformed,
                }
            )
    return rep
