"""Constructive ReLU approximation of the matrix exponential.

Building blocks: a sawtooth-composition squarer (exact piecewise-linear
interpolation of x^2 on a dyadic grid), the polarization product
xy = ((x+y)^2 - (x-y)^2)/4, balanced product trees for l factors, per-path
matrix-power networks, and the truncated-Taylor assembly, with exact
width/depth accounting and sample-based error certification.
"""

import itertools
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import relunet
from .errors import BudgetError, CertificationError, DimensionError
from .linalg import frob
from .oracles import mat_exp, oracle as oracle_fn
from .relunet import (
    ReluNetwork,
    Layer,
    affine_net,
    carry_net,
    chain,
    identity_net,
    pad_to_depth,
    parallel,
    _normalize,
)

DEFAULT_BUDGET = 10_000_000


def compute_K(n: int, M: float, epsilon: float) -> int:
    """Truncation order: ceil(max{e n M, (nM + ln(sqrt2/(sqrtpi eps)))/ln2 - 1})."""
    if n < 1 or M < 1 or epsilon <= 0:
        raise ValueError("need n >= 1, M >= 1, epsilon > 0")
    first = math.e * n * M
    second = (n * M + math.log(math.sqrt(2.0) / (math.sqrt(math.pi) * epsilon))) / math.log(2.0) - 1.0
    return max(1, math.ceil(max(first, second)))


def taylor_tail_bound(n: int, M: float, K: int) -> float:
    """Frobenius bound on the order-K Taylor remainder of e^A over [-M,M]^{n x n}."""
    return (1.0 / math.sqrt(2.0 * math.pi)) * 0.5 ** (K + 1) * math.exp(n * M)


@dataclass
class ExpNetParams:
    """Build parameters for the exponential network.

    K and delta are derived: K from `compute_K`, delta = epsilon / (2 e^n),
    the per-power entrywise tolerance that leaves half the error budget to
    the Taylor tail.
    """

    n: int
    M: float
    epsilon: float
    K: int = field(init=False)
    delta: float = field(init=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.M < 1:
            raise ValueError("M must be >= 1")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        self.K = compute_K(self.n, self.M, self.epsilon)
        self.delta = self.epsilon / (2.0 * math.exp(self.n))


# ----------------------------------------------------------------------
# squarer and products


def _sawtooth_steps(bound: float, delta: float) -> int:
    """Smallest s with bound^2 * 4^-(s+1) <= delta."""
    s = max(0, math.ceil(math.log(bound * bound / delta, 4.0) - 1.0))
    while bound * bound * 4.0 ** -(s + 1) > delta:
        s += 1
    while s > 0 and bound * bound * 4.0 ** -s <= delta:
        s -= 1
    return s


def build_square_net(delta: float, M: float) -> ReluNetwork:
    """ReLU net approximating x^2 on [-M, M] to sup error <= delta.

    Realized as x^2 = M^2 f(|x|/M) with f the piecewise-linear interpolant
    of t^2 on the dyadic grid of 2^s cells, written as t minus a sum of
    scaled sawtooth compositions. Exact at 0.
    """
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must lie in (0, 1)")
    if M < 1.0:
        raise ValueError("M must be >= 1")
    return _square_core(M, _sawtooth_steps(M, delta))


def _square_core(bound: float, s: int) -> ReluNetwork:
    r = float(bound)
    layers = [Layer(_normalize(np.array([[1.0], [-1.0]])), np.zeros(2), True)]
    if s == 0:
        # f_0(t) = t: output r^2 * (p + q) / r = r |x|
        layers.append(Layer(_normalize(np.array([[r, r]])), np.zeros(1), False))
        return ReluNetwork(layers)
    # channels: a = relu(h), b = relu(h - 1/2), c = relu(h - 1), acc, t
    w2 = np.array(
        [
            [1.0 / r, 1.0 / r],
            [1.0 / r, 1.0 / r],
            [1.0 / r, 1.0 / r],
            [0.0, 0.0],
            [1.0 / r, 1.0 / r],
        ]
    )
    b2 = np.array([0.0, -0.5, -1.0, 0.0, 0.0])
    layers.append(Layer(_normalize(w2), b2, True))
    # tent(h) = 2 relu(h) - 4 relu(h - 1/2) + 2 relu(h - 1)
    for m in range(1, s):
        scale = 0.25**m
        w = np.array(
            [
                [2.0, -4.0, 2.0, 0.0, 0.0],
                [2.0, -4.0, 2.0, 0.0, 0.0],
                [2.0, -4.0, 2.0, 0.0, 0.0],
                [2.0 * scale, -4.0 * scale, 2.0 * scale, 1.0, 0.0],
                [0.0, 0.0, 0.0, 0.0, 1.0],
            ]
        )
        b = np.array([0.0, -0.5, -1.0, 0.0, 0.0])
        layers.append(Layer(_normalize(w), b, True))
    scale = 0.25**s
    r2 = r * r
    w_out = np.array(
        [[-2.0 * scale * r2, 4.0 * scale * r2, -2.0 * scale * r2, -r2, r2]]
    )
    layers.append(Layer(_normalize(w_out), np.zeros(1), False))
    return ReluNetwork(layers)


def build_binary_product(delta: float, M1: float, M2: float) -> ReluNetwork:
    """ReLU net approximating x*y on [-M1,M1] x [-M2,M2] to sup error <= delta.

    Polarization: xy = ((x+y)^2 - (x-y)^2) / 4, two squarers on range
    M1 + M2, each allowed 2*delta so the /4 leaves delta total.
    """
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must lie in (0, 1)")
    if M1 < 1.0 or M2 < 1.0:
        raise ValueError("bounds must be >= 1")
    r = M1 + M2
    s = _sawtooth_steps(r, 2.0 * delta)
    square = _square_core(r, s)
    pair = parallel(
        [
            chain(affine_net(np.array([[1.0, 1.0]])), square),
            chain(affine_net(np.array([[1.0, -1.0]])), square),
        ],
        share_input=True,
    )
    return chain(pair, affine_net(np.array([[0.25, -0.25]])))


def _product_node_steps(delta_node: float, b1: float, b2: float) -> int:
    return _sawtooth_steps(b1 + b2, 2.0 * delta_node)


def _tree_plan(bounds, delta_node):
    """(bound, error, depth) of a balanced product tree with a uniform
    per-node tolerance, tracking range inflation from accumulated slack."""
    if len(bounds) == 1:
        return bounds[0], 0.0, 0
    half = (len(bounds) + 1) // 2
    bl, el, dl = _tree_plan(bounds[:half], delta_node)
    br, er, dr = _tree_plan(bounds[half:], delta_node)
    err = bl * er + br * el + el * er + delta_node
    bound = bl * br + err
    depth = max(dl, dr) + _product_node_steps(delta_node, bl, br) + 1
    return bound, err, depth


def _plan_node_tolerance(bounds, delta: float) -> float:
    delta_node = delta / max(1, len(bounds) - 1)
    for _ in range(200):
        _, err, _ = _tree_plan(bounds, delta_node)
        if err <= delta:
            return delta_node
        delta_node *= 0.5 * max(delta / err, 0.1)
    raise CertificationError("could not allocate product-tree tolerances")


def _build_tree(indices, bounds, delta_node, input_dim):
    """Balanced product tree over the given input coordinates.

    Returns (net, bound): net reads the full input vector and emits the
    approximate product of the selected coordinates.
    """
    if len(indices) == 1:
        w = np.zeros((1, input_dim))
        w[0, indices[0]] = 1.0
        return affine_net(w), bounds[0]
    half = (len(indices) + 1) // 2
    left, bl = _build_tree(indices[:half], bounds[:half], delta_node, input_dim)
    right, br = _build_tree(indices[half:], bounds[half:], delta_node, input_dim)
    depth = max(left.depth, right.depth)
    pair = parallel(
        [pad_to_depth(left, depth), pad_to_depth(right, depth)],
        share_input=True,
    )
    node = build_binary_product(min(delta_node, 0.999), max(bl, 1.0), max(br, 1.0))
    bound = bl * br + delta_node
    return chain(pair, node), bound


def build_lary_product(l: int, delta: float, bounds) -> ReluNetwork:
    """ReLU net approximating the product of l inputs over the box
    prod_i [-M_i, M_i] to sup error <= delta, as a balanced tree of binary
    products with a uniform certified per-node tolerance."""
    bounds = [float(b) for b in bounds]
    if len(bounds) != l:
        raise DimensionError("need one bound per factor")
    if l < 1:
        raise ValueError("l must be >= 1")
    if any(b < 1.0 for b in bounds):
        raise ValueError("bounds must be >= 1")
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must lie in (0, 1)")
    if l == 1:
        return identity_net(1)
    delta_node = _plan_node_tolerance(bounds, delta)
    net, _ = _build_tree(list(range(l)), bounds, delta_node, l)
    return net


# ----------------------------------------------------------------------
# matrix powers and the exponential assembly


def _path_template(k: int, delta_path: float, M: float) -> ReluNetwork:
    return build_lary_product(k, delta_path, [M] * k)


def _power_paths(n: int, k: int):
    """Flattened coordinate paths of A^k: entry (i,j) sums over all interior
    index choices; factor q reads flat coordinate l_{q-1} * n + l_q."""
    for i in range(n):
        for j in range(n):
            for interior in itertools.product(range(n), repeat=k - 1):
                walk = (i, *interior, j)
                yield i * n + j, [
                    walk[q] * n + walk[q + 1] for q in range(k)
                ]


def build_matrix_power_net(
    n: int,
    k: int,
    delta: float,
    M: float,
    budget: int = DEFAULT_BUDGET,
) -> ReluNetwork:
    """ReLU net mapping flattened A to flattened A^k, entrywise error <=
    delta on [-M, M]^{n x n}. Each of the n^(k-1) coordinate-path products
    per entry gets tolerance delta / n^(k-1)."""
    if k < 0:
        raise ValueError("k must be >= 0")
    d = n * n
    if k == 0:
        return affine_net(np.zeros((d, d)), np.eye(n).ravel())
    if k == 1:
        return identity_net(d)
    n_paths = n ** (k - 1)
    delta_path = delta / n_paths
    template = _path_template(k, min(delta_path, 0.999), M)
    est = template.weight_count * n_paths * d + n_paths * d
    if est > budget:
        raise BudgetError(
            f"power net n={n} k={k} needs ~{est:,} weights (> budget {budget:,})"
        )
    branches = []
    rows = []
    for entry, coords in _power_paths(n, k):
        route = np.zeros((k, d))
        for q, c in enumerate(coords):
            route[q, c] = 1.0
        branches.append(chain(affine_net(route), template))
        rows.append(entry)
    grouped = parallel(branches, share_input=True)
    w_sum = np.zeros((d, len(rows)))
    for col, entry in enumerate(rows):
        w_sum[entry, col] = 1.0
    return chain(grouped, affine_net(w_sum))


def build_exp_net(params: ExpNetParams, budget: int = DEFAULT_BUDGET) -> ReluNetwork:
    """Assemble the truncated-Taylor exponential network
    sum_{k=0}^{K} P_k(A)/k! from per-power approximation nets."""
    n, M, K, delta = params.n, params.M, params.K, params.delta
    d = n * n
    powers = []
    total = 0
    for k in range(1, K + 1):
        net_k = build_matrix_power_net(n, k, delta, M, budget=budget)
        total += net_k.weight_count
        if total > budget:
            raise BudgetError(
                f"exp net n={n} K={K} exceeds weight budget {budget:,} "
                f"at power {k}"
            )
        powers.append(net_k)
    depth = max(net.depth for net in powers)
    powers = [pad_to_depth(net, depth) for net in powers]
    stacked = parallel(powers, share_input=True)
    coeffs = [1.0 / math.factorial(k) for k in range(1, K + 1)]
    w_out = np.hstack([c * np.eye(d) for c in coeffs])
    b_out = np.eye(n).ravel()  # the k = 0 term
    net = chain(stacked, affine_net(w_out, b_out))
    if net.weight_count > budget:
        raise BudgetError(
            f"exp net n={n} K={K} has {net.weight_count:,} weights "
            f"(> budget {budget:,})"
        )
    net.meta.update(
        {
            "kind": "exp_net",
            "n": n,
            "M": M,
            "epsilon": params.epsilon,
            "K": K,
            "delta": delta,
        }
    )
    return net


# ----------------------------------------------------------------------
# certification


@dataclass
class CertReport:
    oracle: str
    n_points: int
    max_error: float
    mean_error: float
    worst_point: list
    width: int
    depth: int
    weight_count: int
    box_low: float
    box_high: float
    input_dim: int
    width_bound_ref: float | None = None
    depth_bound_ref: float | None = None
    width_ratio: float | None = None
    depth_ratio: float | None = None
    target_error: float | None = None
    passed: bool | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _certification_points(dim: int, low: float, high: float, samples: int):
    """Deterministic low-discrepancy points plus the corners of the box."""
    if dim == 1:
        pts = np.linspace(low, high, samples).reshape(-1, 1)
    else:
        from scipy.stats import qmc

        m = max(4, math.ceil(math.log2(max(2, samples))))
        sob = qmc.Sobol(d=dim, scramble=False)
        pts = low + (high - low) * sob.random_base2(m=m)[:samples]
    if dim <= 12:
        corners = np.array(
            list(itertools.product((low, high), repeat=dim))
        )
        pts = np.vstack([pts, corners])
    return pts


def certify(
    net: ReluNetwork,
    oracle: str,
    box=(-1.0, 1.0),
    samples: int = 10_000,
    target_error: float | None = None,
) -> CertReport:
    """Measure max/mean output error of `net` against a matrix-function
    oracle over deterministic samples of the box (plus corners)."""
    low, high = float(box[0]), float(box[1])
    dim = net.input_dim
    n = int(round(math.sqrt(dim)))
    if n * n != dim:
        raise DimensionError("certification needs a flattened square matrix input")
    if oracle == "identity":
        ref = lambda m: m  # noqa: E731
    else:
        ref = oracle_fn(oracle)
    pts = _certification_points(dim, low, high, samples)
    outs = net.forward_batch(pts)
    errors = np.empty(len(pts))
    for i, (x, y) in enumerate(zip(pts, outs)):
        expected = ref(x.reshape(n, n))
        errors[i] = frob(y.reshape(n, n) - expected)
    worst = int(np.argmax(errors))
    report = CertReport(
        oracle=oracle,
        n_points=len(pts),
        max_error=float(errors[worst]),
        mean_error=float(errors.mean()),
        worst_point=pts[worst].tolist(),
        width=net.width,
        depth=net.depth,
        weight_count=net.weight_count,
        box_low=low,
        box_high=high,
        input_dim=dim,
        target_error=target_error,
    )
    meta = net.meta
    if meta.get("kind") == "exp_net":
        K, nn, M, eps = meta["K"], meta["n"], meta["M"], meta["epsilon"]
        report.width_bound_ref = K * nn**K
        report.depth_bound_ref = 1.0 + math.log(K) * (
            math.log(K) + math.log(2.0 * math.e / eps) + K * (math.log(nn) + math.log(max(M, 1.0)))
        ) if K > 1 else 1.0
        report.width_ratio = report.width / report.width_bound_ref
        report.depth_ratio = report.depth / report.depth_bound_ref
        if target_error is None:
            report.target_error = eps
    if report.target_error is not None:
        report.passed = report.max_error <= report.target_error
    return report
