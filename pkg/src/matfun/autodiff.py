"""Minimal reverse-mode autodiff over numpy arrays.

Tensors wrap float64 ndarrays and record a closure per op that accumulates
exact gradients of a scalar loss. The op set is just what the model zoo
needs: broadcast arithmetic, (batched) matmul, relu/exp/sin/cos/power,
reductions, shape ops, embedding lookup, softmax, dropout, and a fused
cross-entropy. Everything passes central finite-difference checks at
float64 precision.
"""

import contextlib

import numpy as np

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, parents=(), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad and _grad_enabled
        self.grad = None
        self._parents = parents if self.requires_grad else ()
        self._backward = backward if self.requires_grad else None

    # -- graph plumbing ------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"

    def _ensure_grad(self):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)

    def backward(self, seed=None):
        if seed is None:
            seed = np.ones_like(self.data)
        topo, visited = [], set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))
        self._ensure_grad()
        self.grad += np.asarray(seed, dtype=np.float64)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward()

    def zero_grad(self):
        self.grad = None

    # -- arithmetic ----------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        out = Tensor(
            self.data + other.data,
            self.requires_grad or other.requires_grad,
            (self, other),
        )

        def backward():
            if self.requires_grad:
                self._ensure_grad()
                self.grad += _unbroadcast(out.grad, self.data.shape)
            if other.requires_grad:
                other._ensure_grad()
                other.grad += _unbroadcast(out.grad, other.data.shape)

        out._backward = backward if out.requires_grad else None
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Tensor(-self.data, self.requires_grad, (self,))

        def backward():
            self._ensure_grad()
            self.grad -= out.grad

        out._backward = backward if out.requires_grad else None
        return out

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)
        out = Tensor(
            self.data * other.data,
            self.requires_grad or other.requires_grad,
            (self, other),
        )

        def backward():
            if self.requires_grad:
                self._ensure_grad()
                self.grad += _unbroadcast(out.grad * other.data, self.data.shape)
            if other.requires_grad:
                other._ensure_grad()
                other.grad += _unbroadcast(out.grad * self.data, other.data.shape)

        out._backward = backward if out.requires_grad else None
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self * as_tensor(other).power(-1.0)

    def __matmul__(self, other):
        other = as_tensor(other)
        out = Tensor(
            self.data @ other.data,
            self.requires_grad or other.requires_grad,
            (self, other),
        )

        def backward():
            if self.requires_grad:
                self._ensure_grad()
                g = out.grad @ np.swapaxes(other.data, -1, -2)
                self.grad += _unbroadcast(g, self.data.shape)
            if other.requires_grad:
                other._ensure_grad()
                g = np.swapaxes(self.data, -1, -2) @ out.grad
                other.grad += _unbroadcast(g, other.data.shape)

        out._backward = backward if out.requires_grad else None
        return out

    # -- elementwise ---------------------------------------------------

    def relu(self):
        out = Tensor(np.maximum(self.data, 0.0), self.requires_grad, (self,))

        def backward():
            self._ensure_grad()
            self.grad += out.grad * (self.data > 0.0)

        out._backward = backward if out.requires_grad else None
        return out

    def exp(self):
        out = Tensor(np.exp(self.data), self.requires_grad, (self,))

        def backward():
            self._ensure_grad()
            self.grad += out.grad * out.data

        out._backward = backward if out.requires_grad else None
        return out

    def sin(self):
        out = Tensor(np.sin(self.data), self.requires_grad, (self,))

        def backward():
            self._ensure_grad()
            self.grad += out.grad * np.cos(self.data)

        out._backward = backward if out.requires_grad else None
        return out

    def cos(self):
        out = Tensor(np.cos(self.data), self.requires_grad, (self,))

        def backward():
            self._ensure_grad()
            self.grad -= out.grad * np.sin(self.data)

        out._backward = backward if out.requires_grad else None
        return out

    def power(self, alpha: float):
        out = Tensor(self.data**alpha, self.requires_grad, (self,))

        def backward():
            self._ensure_grad()
            self.grad += out.grad * alpha * self.data ** (alpha - 1.0)

        out._backward = backward if out.requires_grad else None
        return out

    def abs(self):
        out = Tensor(np.abs(self.data), self.requires_grad, (self,))

        def backward():
            self._ensure_grad()
            self.grad += out.grad * np.sign(self.data)

        out._backward = backward if out.requires_grad else None
        return out

    # -- reductions and shape ops ---------------------------------------

    def sum(self, axis=None, keepdims=False):
        out = Tensor(
            self.data.sum(axis=axis, keepdims=keepdims), self.requires_grad, (self,)
        )

        def backward():
            self._ensure_grad()
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self.grad += np.broadcast_to(g, self.data.shape)

        out._backward = backward if out.requires_grad else None
        return out

    def mean(self, axis=None, keepdims=False):
        count = self.data.size if axis is None else np.prod(
            [self.data.shape[a] for a in (axis if isinstance(axis, tuple) else (axis,))]
        )
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = Tensor(self.data.reshape(shape), self.requires_grad, (self,))

        def backward():
            self._ensure_grad()
            self.grad += out.grad.reshape(self.data.shape)

        out._backward = backward if out.requires_grad else None
        return out

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inverse = tuple(np.argsort(axes))
        out = Tensor(self.data.transpose(axes), self.requires_grad, (self,))

        def backward():
            self._ensure_grad()
            self.grad += out.grad.transpose(inverse)

        out._backward = backward if out.requires_grad else None
        return out

    # -- structured ops --------------------------------------------------

    def take_rows(self, ids: np.ndarray):
        """Row lookup (embedding): self (V, D), ids int array -> (*ids, D)."""
        ids = np.asarray(ids)
        out = Tensor(self.data[ids], self.requires_grad, (self,))

        def backward():
            self._ensure_grad()
            np.add.at(self.grad, ids.reshape(-1), out.grad.reshape(-1, self.data.shape[-1]))

        out._backward = backward if out.requires_grad else None
        return out

    def softmax(self, axis=-1):
        shifted = self.data - self.data.max(axis=axis, keepdims=True)
        with np.errstate(over="ignore"):
            e = np.exp(shifted)
        s = e / e.sum(axis=axis, keepdims=True)
        out = Tensor(s, self.requires_grad, (self,))

        def backward():
            self._ensure_grad()
            inner = (out.grad * s).sum(axis=axis, keepdims=True)
            self.grad += s * (out.grad - inner)

        out._backward = backward if out.requires_grad else None
        return out

    def dropout(self, p: float, rng, training: bool):
        """Inverted dropout; identity when not training or p == 0."""
        if not training or p <= 0.0:
            return self
        mask = (rng.random(self.data.shape) >= p) / (1.0 - p)
        out = Tensor(self.data * mask, self.requires_grad, (self,))

        def backward():
            self._ensure_grad()
            self.grad += out.grad * mask

        out._backward = backward if out.requires_grad else None
        return out


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def concat(tensors, axis=-1) -> Tensor:
    datas = [t.data for t in tensors]
    out = Tensor(
        np.concatenate(datas, axis=axis),
        any(t.requires_grad for t in tensors),
        tuple(tensors),
    )

    def backward():
        offset = 0
        for t in tensors:
            size = t.data.shape[axis]
            sl = [slice(None)] * out.grad.ndim
            sl[axis] = slice(offset, offset + size)
            if t.requires_grad:
                t._ensure_grad()
                t.grad += out.grad[tuple(sl)]
            offset += size

    out._backward = backward if out.requires_grad else None
    return out


def cross_entropy(logits: Tensor, targets: np.ndarray, ignore_id: int | None = None) -> Tensor:
    """Mean token-level negative log likelihood over non-ignored positions.

    logits: (N, V); targets: int array (N,).
    """
    targets = np.asarray(targets).reshape(-1)
    n, v = logits.data.shape
    keep = np.ones(n, dtype=bool) if ignore_id is None else targets != ignore_id
    count = max(int(keep.sum()), 1)
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    picked = shifted[np.arange(n), np.clip(targets, 0, v - 1)]
    nll = (lse - picked) * keep
    out = Tensor(nll.sum() / count, logits.requires_grad, (logits,))

    def backward():
        logits._ensure_grad()
        soft = np.exp(shifted)
        soft /= soft.sum(axis=1, keepdims=True)
        soft[np.arange(n), np.clip(targets, 0, v - 1)] -= 1.0
        soft *= (keep / count)[:, None]
        logits.grad += out.grad * soft

    out._backward = backward if out.requires_grad else None
    return out


def finite_difference_check(fn, tensors, rel_tol=1e-4, h=1e-6, rng=None, max_entries=25):
    """Compare analytic gradients of scalar fn(*tensors) against central
    differences on a sample of coordinates. Returns the worst relative error."""
    rng = rng or np.random.default_rng(0)
    for t in tensors:
        t.zero_grad()
    out = fn()
    out.backward()
    worst = 0.0
    for t in tensors:
        flat = t.data.reshape(-1)
        gflat = (t.grad if t.grad is not None else np.zeros_like(t.data)).reshape(-1)
        idx = np.arange(flat.size)
        if flat.size > max_entries:
            idx = rng.choice(flat.size, size=max_entries, replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            up = fn().item()
            flat[i] = orig - h
            down = fn().item()
            flat[i] = orig
            numeric = (up - down) / (2 * h)
            denom = max(abs(numeric), abs(gflat[i]), 1e-8)
            worst = max(worst, abs(numeric - gflat[i]) / denom)
    return worst
