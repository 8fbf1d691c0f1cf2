"""Constructive approximation tests: squarer, products, matrix powers,
the exponential assembly, and certification accounting."""

import math

import numpy as np
import pytest

from matfun.construct import (
    ExpNetParams,
    build_binary_product,
    build_exp_net,
    build_lary_product,
    build_matrix_power_net,
    build_square_net,
    certify,
    compute_K,
    taylor_tail_bound,
)
from matfun.errors import BudgetError
from matfun.oracles import mat_exp
from matfun.relunet import forward_eval, identity_net


class TestSquareNet:
    def test_exact_at_zero(self):
        net = build_square_net(1e-2, 1.0)
        assert forward_eval(net, [0.0])[0] == 0.0

    def test_grid_sup_error(self):
        net = build_square_net(1e-2, 1.0)
        xs = np.linspace(-1.0, 1.0, 100_000).reshape(-1, 1)
        err = np.abs(net.forward_batch(xs).ravel() - xs.ravel() ** 2)
        assert err.max() <= 1e-2

    def test_endpoint(self):
        for m in (1.0, 2.5):
            net = build_square_net(5e-3, m)
            assert abs(forward_eval(net, [m])[0] - m * m) <= 5e-3

    def test_depth_grows_logarithmically(self):
        depths = [build_square_net(d, 1.0).depth for d in (1e-1, 1e-2, 1e-4, 1e-8)]
        assert depths == sorted(depths)
        # halving the log-tolerance roughly doubles the sawtooth count
        assert depths[-1] <= 2 * depths[-2] + 4

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            build_square_net(0.0, 1.0)
        with pytest.raises(ValueError):
            build_square_net(0.1, 0.5)


class TestBinaryProduct:
    def test_zero_factor(self):
        net = build_binary_product(1e-3, 1.0, 1.0)
        xs = np.stack([np.linspace(-1, 1, 500), np.zeros(500)], axis=1)
        assert np.abs(net.forward_batch(xs)).max() <= 1e-3

    def test_random_pairs(self):
        net = build_binary_product(1e-3, 1.0, 1.0)
        rng = np.random.default_rng(0)
        pts = rng.uniform(-1, 1, size=(100_000, 2))
        err = np.abs(net.forward_batch(pts).ravel() - pts[:, 0] * pts[:, 1])
        assert err.max() <= 1e-3

    def test_symmetry(self):
        net = build_binary_product(1e-3, 1.0, 1.0)
        rng = np.random.default_rng(1)
        pts = rng.uniform(-1, 1, size=(1000, 2))
        fwd = net.forward_batch(pts).ravel()
        rev = net.forward_batch(pts[:, ::-1]).ravel()
        assert np.abs(fwd - rev).max() <= 2e-3

    def test_asymmetric_bounds(self):
        net = build_binary_product(1e-2, 2.0, 3.0)
        rng = np.random.default_rng(2)
        x = rng.uniform(-2, 2, size=5000)
        y = rng.uniform(-3, 3, size=5000)
        err = np.abs(net.forward_batch(np.stack([x, y], 1)).ravel() - x * y)
        assert err.max() <= 1e-2


class TestLaryProduct:
    def test_single_factor_is_identity(self):
        net = build_lary_product(1, 1e-2, [1.0])
        assert net.depth == 0
        assert forward_eval(net, [0.73])[0] == 0.73

    def test_triple_product(self):
        net = build_lary_product(3, 1e-2, [1.0, 1.0, 1.0])
        rng = np.random.default_rng(3)
        pts = rng.uniform(-1, 1, size=(100_000, 3))
        err = np.abs(net.forward_batch(pts).ravel() - pts.prod(axis=1))
        assert err.max() <= 1e-2

    def test_width_linear_in_factor_count(self):
        ratios = []
        for l in range(2, 9):
            net = build_lary_product(l, 1e-2, [1.0] * l)
            ratios.append(net.width / l)
            rng = np.random.default_rng(l)
            pts = rng.uniform(-1, 1, size=(20_000, l))
            err = np.abs(net.forward_batch(pts).ravel() - pts.prod(axis=1))
            assert err.max() <= 1e-2
        assert max(ratios) <= 8.0


class TestComputeK:
    def test_reference_values(self):
        # max{e, (1 + ln(sqrt2/(sqrtpi 0.01)))/ln2 - 1} = 6.76 -> 7
        assert compute_K(1, 1.0, 0.01) == 7
        # loose tolerance: the e*n*M branch dominates, ceil(e) = 3
        assert compute_K(1, 1.0, 1.0) == 3

    def test_matches_direct_formula(self):
        for n in (1, 2, 3):
            for m in (1.0, 2.0):
                for eps in (0.5, 0.1, 0.01):
                    first = math.e * n * m
                    second = (
                        n * m + math.log(math.sqrt(2) / (math.sqrt(math.pi) * eps))
                    ) / math.log(2) - 1
                    assert compute_K(n, m, eps) == math.ceil(max(first, second))

    def test_monotone_in_epsilon(self):
        ks = [compute_K(2, 1.0, e) for e in (0.5, 0.1, 0.05, 0.01, 0.001)]
        assert ks == sorted(ks)


class TestPowerNet:
    def test_power_zero_is_constant_identity(self):
        net = build_matrix_power_net(2, 0, 1e-2, 1.0)
        rng = np.random.default_rng(4)
        for _ in range(5):
            out = forward_eval(net, rng.uniform(-1, 1, size=4))
            np.testing.assert_array_equal(out.reshape(2, 2), np.eye(2))

    def test_power_one_is_exact(self):
        net = build_matrix_power_net(2, 1, 1e-2, 1.0)
        x = np.array([1.0, -2.0, 3.0, -4.0])
        np.testing.assert_array_equal(forward_eval(net, x), x)

    def test_square_against_product_oracle(self):
        net = build_matrix_power_net(2, 2, 1e-2, 1.0)
        rng = np.random.default_rng(5)
        worst = 0.0
        for _ in range(10_000):
            a = rng.uniform(-1, 1, size=(2, 2))
            out = net.forward_batch(a.ravel()[None]).reshape(2, 2)
            worst = max(worst, np.abs(out - a @ a).max())
        assert worst <= 1e-2

    def test_path_count(self):
        # one l-ary branch per index path: n^(k-1) per entry
        from matfun.construct import _power_paths

        n, k = 3, 3
        per_entry = {}
        for entry, coords in _power_paths(n, k):
            assert len(coords) == k
            per_entry[entry] = per_entry.get(entry, 0) + 1
        assert set(per_entry.values()) == {n ** (k - 1)}
        assert len(per_entry) == n * n

    def test_budget_error(self):
        with pytest.raises(BudgetError):
            build_matrix_power_net(3, 9, 1e-3, 1.0, budget=10_000)


class TestExpNet:
    def test_scalar_certification(self):
        params = ExpNetParams(1, 1.0, 0.1)
        net = build_exp_net(params)
        xs = np.linspace(-1, 1, 100_000).reshape(-1, 1)
        err = np.abs(net.forward_batch(xs).ravel() - np.exp(xs.ravel()))
        assert err.max() <= 0.1

    def test_matrix_certification(self):
        params = ExpNetParams(2, 1.0, 0.5)
        net = build_exp_net(params)
        rng = np.random.default_rng(6)
        pts = rng.uniform(-1, 1, size=(2000, 4))
        outs = net.forward_batch(pts)
        worst = 0.0
        for x, y in zip(pts, outs):
            ref = mat_exp(x.reshape(2, 2))
            worst = max(worst, np.linalg.norm(y.reshape(2, 2) - ref))
        assert worst <= 0.5

    def test_zero_matrix_hits_identity(self):
        params = ExpNetParams(2, 1.0, 0.5)
        net = build_exp_net(params)
        out = forward_eval(net, np.zeros(4)).reshape(2, 2)
        assert np.abs(out - np.eye(2)).max() <= 0.5

    def test_budget_error_is_clean(self):
        with pytest.raises(BudgetError):
            build_exp_net(ExpNetParams(3, 1.0, 0.1), budget=1_000_000)

    def test_depth_scales_like_k_log_k(self):
        ratios = []
        for eps in (0.5, 0.1, 0.05, 0.01):
            params = ExpNetParams(1, 1.0, eps)
            net = build_exp_net(params)
            ratios.append(net.depth / (params.K * max(math.log(params.K), 1.0)))
        assert max(ratios) <= 10.0


class TestTailBound:
    def test_tail_bound_holds_for_sampled_matrices(self):
        rng = np.random.default_rng(7)
        for n in (1, 2):
            k_lo = math.ceil(2 * math.e * n) - 1
            for k in range(k_lo, k_lo + 3):
                bound = taylor_tail_bound(n, 1.0, k)
                for _ in range(200):
                    a = rng.uniform(-1, 1, size=(n, n))
                    partial = np.eye(n)
                    term = np.eye(n)
                    for j in range(1, k + 1):
                        term = term @ a / j
                        partial = partial + term
                    tail = np.linalg.norm(mat_exp(a) - partial)
                    assert tail <= bound


class TestCertify:
    def test_identity_network_zero_error(self):
        report = certify(identity_net(1), "identity", box=(-1, 1), samples=101)
        assert report.max_error == 0.0

    def test_exp_certification_report(self):
        params = ExpNetParams(1, 1.0, 0.1)
        net = build_exp_net(params)
        report = certify(net, "exp", box=(-1, 1), samples=2_000)
        assert report.max_error <= 0.1
        assert report.passed
        assert report.width == net.width
        assert report.width_bound_ref == params.K * 1**params.K
        assert report.width_ratio == report.width / report.width_bound_ref
        d = report.to_dict()
        assert d["oracle"] == "exp"
