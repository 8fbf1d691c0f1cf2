"""Feedforward ReLU networks as explicit affine-layer stacks.

A network is an ordered list of layers (W, b, relu flag) where every layer
except the last applies ReLU and the last is a plain affine map. Widths can
reach tens of thousands for the larger constructions, where the weight
matrices are block-structured; those layers are held in CSR form and the
weight count is the number of stored (structural) weights.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from . import kernels
from .errors import DimensionError

# dense storage for anything smaller; CSR above
DENSE_LIMIT = 1 << 16

FORMAT_NAME = "matfun-relunet-v1"


def _is_sparse(w) -> bool:
    return sparse.issparse(w)


def _normalize(w):
    """Pick dense or CSR storage by size and density."""
    if _is_sparse(w):
        w = w.tocsr()
        size = w.shape[0] * w.shape[1]
        if size <= DENSE_LIMIT:
            return np.ascontiguousarray(w.toarray())
        return w
    w = np.ascontiguousarray(np.asarray(w, dtype=np.float64))
    if w.size > DENSE_LIMIT:
        return sparse.csr_matrix(w)
    return w


@dataclass
class Layer:
    W: object  # (out_dim, in_dim) ndarray or csr_matrix
    b: np.ndarray
    relu: bool

    @property
    def out_dim(self) -> int:
        return self.W.shape[0]

    @property
    def in_dim(self) -> int:
        return self.W.shape[1]

    @property
    def weight_count(self) -> int:
        if _is_sparse(self.W):
            return int(self.W.nnz) + self.b.size
        return int(self.W.size) + self.b.size


@dataclass
class ReluNetwork:
    layers: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.layers:
            raise DimensionError("a network needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise DimensionError(
                    f"layer dims do not compose: {prev.out_dim} -> {nxt.in_dim}"
                )
        if self.layers[-1].relu:
            raise DimensionError("final layer must have identity activation")

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def width(self) -> int:
        return max(layer.out_dim for layer in self.layers)

    @property
    def depth(self) -> int:
        return sum(1 for layer in self.layers if layer.relu)

    @property
    def weight_count(self) -> int:
        return sum(layer.weight_count for layer in self.layers)

    def forward_batch(self, x: np.ndarray) -> np.ndarray:
        """Evaluate on a batch of row vectors, shape (N, input_dim)."""
        x = np.ascontiguousarray(np.atleast_2d(np.asarray(x, dtype=np.float64)))
        if x.shape[1] != self.input_dim:
            raise DimensionError(
                f"input width {x.shape[1]} != network input {self.input_dim}"
            )
        for layer in self.layers:
            if _is_sparse(layer.W):
                x = (layer.W @ x.T).T + layer.b
                if layer.relu:
                    np.maximum(x, 0.0, out=x)
            else:
                x = kernels.affine_relu(
                    x, np.ascontiguousarray(layer.W.T), layer.b, layer.relu
                )
        return x

    def __call__(self, x):
        return self.forward_batch(x)


def forward_eval(net: ReluNetwork, x) -> np.ndarray:
    """Exact single-vector evaluation: affine maps and elementwise max(0, .)."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size != net.input_dim:
        raise DimensionError(
            f"input length {x.size} != network input {net.input_dim}"
        )
    v = x
    for layer in net.layers:
        v = layer.W @ v + layer.b
        if layer.relu:
            v = np.maximum(v, 0.0)
    return v


# ----------------------------------------------------------------------
# composition helpers


def affine_net(w, b=None, meta=None) -> ReluNetwork:
    w = _normalize(w)
    if b is None:
        b = np.zeros(w.shape[0])
    return ReluNetwork([Layer(w, np.asarray(b, dtype=np.float64), False)], meta or {})


def identity_net(dim: int) -> ReluNetwork:
    return affine_net(np.eye(dim))


def _mm(a, b):
    if _is_sparse(a) or _is_sparse(b):
        return (sparse.csr_matrix(a) @ sparse.csr_matrix(b)).tocsr()
    return a @ b


def chain(first: ReluNetwork, second: ReluNetwork) -> ReluNetwork:
    """Feed `first`'s output into `second`, merging the affine boundary."""
    if first.output_dim != second.input_dim:
        raise DimensionError(
            f"chain mismatch: {first.output_dim} -> {second.input_dim}"
        )
    tail = first.layers[-1]
    head = second.layers[0]
    merged = Layer(
        _normalize(_mm(head.W, tail.W)),
        head.W @ tail.b + head.b,
        head.relu,
    )
    return ReluNetwork(first.layers[:-1] + [merged] + list(second.layers[1:]))


def _block_diag(mats):
    if len(mats) == 1:
        return mats[0]
    if any(_is_sparse(m) for m in mats) or sum(
        m.shape[0] * m.shape[1] for m in mats
    ) > DENSE_LIMIT:
        return sparse.block_diag([sparse.csr_matrix(m) for m in mats]).tocsr()
    out = np.zeros((sum(m.shape[0] for m in mats), sum(m.shape[1] for m in mats)))
    r = c = 0
    for m in mats:
        out[r : r + m.shape[0], c : c + m.shape[1]] = m
        r += m.shape[0]
        c += m.shape[1]
    return out


def _vstack(mats):
    if len(mats) == 1:
        return mats[0]
    if any(_is_sparse(m) for m in mats) or sum(
        m.shape[0] * m.shape[1] for m in mats
    ) > DENSE_LIMIT:
        return sparse.vstack([sparse.csr_matrix(m) for m in mats]).tocsr()
    return np.vstack(mats)


def parallel(nets, share_input: bool = False) -> ReluNetwork:
    """Run networks side by side; outputs concatenate.

    All networks must have equal depth (pad with `carry_net` first). With
    share_input=True every branch reads the same input vector instead of a
    partitioned one.
    """
    if len(nets) == 1:
        return nets[0]
    counts = {len(n.layers) for n in nets}
    if len(counts) != 1:
        raise DimensionError("parallel branches must have equal layer counts")
    if share_input and len({n.input_dim for n in nets}) != 1:
        raise DimensionError("shared-input branches must agree on input dim")
    layers = []
    for idx in range(counts.pop()):
        parts = [n.layers[idx] for n in nets]
        if idx == 0 and share_input:
            w = _vstack([p.W for p in parts])
        else:
            w = _block_diag([p.W for p in parts])
        b = np.concatenate([p.b for p in parts])
        flags = {p.relu for p in parts}
        if len(flags) != 1:
            raise DimensionError("parallel branches disagree on activations")
        layers.append(Layer(_normalize(w), b, flags.pop()))
    return ReluNetwork(layers)


def carry_net(dim: int, n_relu: int) -> ReluNetwork:
    """Pass a vector through `n_relu` ReLU layers unchanged (split as x+ / x-)."""
    if n_relu == 0:
        return identity_net(dim)
    eye = np.eye(dim)
    split = np.vstack([eye, -eye])
    layers = [Layer(_normalize(split), np.zeros(2 * dim), True)]
    for _ in range(n_relu - 1):
        layers.append(Layer(_normalize(np.eye(2 * dim)), np.zeros(2 * dim), True))
    layers.append(Layer(_normalize(np.hstack([eye, -eye])), np.zeros(dim), False))
    return ReluNetwork(layers)


def pad_to_depth(net: ReluNetwork, depth: int) -> ReluNetwork:
    extra = depth - net.depth
    if extra < 0:
        raise DimensionError("cannot reduce depth")
    if extra == 0:
        return net
    return chain(net, carry_net(net.output_dim, extra))


# ----------------------------------------------------------------------
# weight-file container (npz: self-describing header + per-layer arrays)


def save_network(net: ReluNetwork, path, header_extra: dict | None = None):
    layer_specs = []
    arrays = {}
    for i, layer in enumerate(net.layers):
        if _is_sparse(layer.W):
            storage = "csr"
            arrays[f"W{i}_data"] = layer.W.data
            arrays[f"W{i}_indices"] = layer.W.indices
            arrays[f"W{i}_indptr"] = layer.W.indptr
        else:
            storage = "dense"
            arrays[f"W{i}"] = layer.W
        arrays[f"b{i}"] = layer.b
        layer_specs.append(
            {
                "out_dim": layer.out_dim,
                "in_dim": layer.in_dim,
                "relu": layer.relu,
                "storage": storage,
            }
        )
    header = {
        "format": FORMAT_NAME,
        "input_dim": net.input_dim,
        "output_dim": net.output_dim,
        "width": net.width,
        "depth": net.depth,
        "weight_count": net.weight_count,
        "n_layers": len(net.layers),
        "layers": layer_specs,
        "meta": net.meta,
    }
    if header_extra:
        header.update(header_extra)
    arrays["header"] = np.frombuffer(
        json.dumps(header, sort_keys=True).encode(), dtype=np.uint8
    )
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_network(path) -> ReluNetwork:
    with np.load(path) as data:
        header = json.loads(bytes(data["header"]).decode())
        if header.get("format") != FORMAT_NAME:
            raise DimensionError(f"not a {FORMAT_NAME} file")
        layers = []
        for i, spec_ in enumerate(header["layers"]):
            shape = (spec_["out_dim"], spec_["in_dim"])
            if spec_["storage"] == "csr":
                w = sparse.csr_matrix(
                    (
                        data[f"W{i}_data"],
                        data[f"W{i}_indices"],
                        data[f"W{i}_indptr"],
                    ),
                    shape=shape,
                )
            else:
                w = data[f"W{i}"]
            layers.append(Layer(_normalize(w), data[f"b{i}"], spec_["relu"]))
    return ReluNetwork(layers, meta=header.get("meta", {}))


def load_header(path) -> dict:
    with np.load(path) as data:
        return json.loads(bytes(data["header"]).decode())

