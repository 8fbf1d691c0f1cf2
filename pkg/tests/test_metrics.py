"""Tolerance-accuracy formula cases, monotonicity, and CSV emission."""

import numpy as np
import pytest

from matfun.errors import DimensionError
from matfun.metrics import (
    DEFAULT_TAUS,
    AccuracyReport,
    ResultSet,
    relative_l1_errors,
    report,
    tolerance_accuracy,
)


class TestToleranceAccuracy:
    def test_perfect_predictions(self):
        y = [np.eye(2)] * 5
        for tau in DEFAULT_TAUS:
            assert tolerance_accuracy(y, y, tau) == 1.0

    def test_single_sample_formula(self):
        pred = [np.array([[1.03]])]
        target = [np.array([[1.0]])]
        # 0.03 / (1 + 1e-7): below 0.05, not below 0.02
        assert tolerance_accuracy(pred, target, 0.05) == 1.0
        assert tolerance_accuracy(pred, target, 0.02) == 0.0

    def test_mixed_batch(self):
        preds = [np.array([[1.03]]), np.array([[1.0]])]
        targets = [np.array([[1.0]]), np.array([[1.0]])]
        assert tolerance_accuracy(preds, targets, 0.05) == 1.0
        assert tolerance_accuracy(preds, targets, 0.02) == 0.5

    def test_strict_boundary(self):
        pred = [np.array([[1.03]])]
        target = [np.array([[1.0]])]
        err = relative_l1_errors(pred, target)[0]
        assert tolerance_accuracy(pred, target, err) == 0.0  # strictly less
        assert tolerance_accuracy(pred, target, np.nextafter(err, 1.0)) == 1.0

    def test_scale_invariance_with_zero_eps(self):
        rng = np.random.default_rng(0)
        targets = [rng.normal(size=(3, 3)) for _ in range(20)]
        preds = [t + 0.01 * rng.normal(size=(3, 3)) for t in targets]
        base = relative_l1_errors(preds, targets, eps=0.0)
        scaled = relative_l1_errors(
            [1e6 * p for p in preds], [1e6 * t for t in targets], eps=0.0
        )
        np.testing.assert_allclose(base, scaled, rtol=1e-12)

    def test_malformed_counts_as_failure(self):
        preds = [None, np.array([[1.0]])]
        targets = [np.array([[1.0]]), np.array([[1.0]])]
        assert tolerance_accuracy(preds, targets, 0.5) == 0.5

    def test_empty_set_rejected(self):
        with pytest.raises(DimensionError):
            tolerance_accuracy([], [], 0.05)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(DimensionError):
            tolerance_accuracy([np.eye(2)], [np.eye(3)], 0.05)

    def test_monotone_in_tau(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            targets = [rng.normal(size=(2, 2)) for _ in range(16)]
            preds = [
                t + rng.normal() * 0.05 * rng.normal(size=(2, 2)) for t in targets
            ]
            accs = [tolerance_accuracy(preds, targets, t) for t in (0.05, 0.02, 0.01, 0.005)]
            assert all(a >= b for a, b in zip(accs, accs[1:]))


class TestReport:
    def _result(self, rng, exact=False):
        targets = [rng.normal(size=(2, 2)) for _ in range(10)]
        preds = [t.copy() if exact else t + 0.02 * rng.normal(size=(2, 2)) for t in targets]
        return ResultSet("exp", "P1000", 2, preds, targets)

    def test_perfect_row(self):
        rng = np.random.default_rng(2)
        rep = report([self._result(rng, exact=True)])
        assert all(float(r["accuracy"]) == 1.0 for r in rep.rows)

    def test_row_structure_and_monotonicity(self):
        rng = np.random.default_rng(3)
        rep = report([self._result(rng)])
        assert len(rep.rows) == len(DEFAULT_TAUS)
        accs = [float(r["accuracy"]) for r in rep.rows]
        assert accs == sorted(accs, reverse=True)

    def test_csv_shape(self, tmp_path):
        rng = np.random.default_rng(4)
        rep = report([self._result(rng)])
        path = tmp_path / "report.csv"
        rep.write_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "function,arch_or_scheme,n,tau,accuracy,n_eval,malformed"
        assert len(lines) == 1 + len(DEFAULT_TAUS)

    def test_malformed_column(self):
        targets = [np.eye(1), np.eye(1)]
        rs = ResultSet("sign", "FP15", 1, [None, np.eye(1)], targets)
        rep = report([rs], taus=(0.05,))
        assert rep.rows[0]["malformed"] == 1
        assert float(rep.rows[0]["accuracy"]) == 0.5

    def test_empty_rejected(self):
        with pytest.raises(DimensionError):
            report([])
