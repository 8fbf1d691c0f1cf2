"""Model zoo: MLP baselines, a Fourier-feature transformer encoder, and the
token-level transformer encoder-decoder, all built on `matfun.autodiff`.

Transformer blocks use pre-norm residuals, feed-forward width 4x the
embedding dimension, and learned positional embeddings; these defaults sit
in the config so a run can override them.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, concat, parameter
from .codec import PAD
from .errors import DimensionError

NEG_INF = -1e30  # additive mask; large enough that exp underflows to exactly 0


# ----------------------------------------------------------------------
# parameter initialization


def _uniform_fanin(rng, fan_in, shape):
    bound = 1.0 / math.sqrt(max(fan_in, 1))
    return parameter(rng.uniform(-bound, bound, size=shape))


class Linear:
    def __init__(self, rng, d_in, d_out):
        self.w = _uniform_fanin(rng, d_in, (d_in, d_out))
        self.b = parameter(np.zeros(d_out))

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.w + self.b

    def params(self, prefix):
        return {f"{prefix}.w": self.w, f"{prefix}.b": self.b}


class Embedding:
    def __init__(self, rng, vocab, dim):
        self.w = parameter(rng.normal(size=(vocab, dim)) * 0.02)

    def __call__(self, ids) -> Tensor:
        return self.w.take_rows(ids)

    def params(self, prefix):
        return {f"{prefix}.w": self.w}


class LayerNorm:
    def __init__(self, dim, eps=1e-5):
        self.gamma = parameter(np.ones(dim))
        self.beta = parameter(np.zeros(dim))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        mu = x.mean(axis=-1, keepdims=True)
        centered = x - mu
        var = (centered * centered).mean(axis=-1, keepdims=True)
        return centered * (var + self.eps).power(-0.5) * self.gamma + self.beta

    def params(self, prefix):
        return {f"{prefix}.gamma": self.gamma, f"{prefix}.beta": self.beta}


# ----------------------------------------------------------------------
# attention


def attention(q: Tensor, k: Tensor, v: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """softmax(q k^T / sqrt(d_k)) v with optional additive masking.

    mask is a boolean array broadcastable to the score shape; True marks
    positions that may be attended to. Masked logits act as -inf, so their
    weights are exactly zero.
    """
    d_k = q.shape[-1]
    if k.shape[-1] != d_k:
        raise DimensionError("query/key depth mismatch")
    scores = (q @ k.transpose(*range(k.ndim - 2), k.ndim - 1, k.ndim - 2)) * (
        1.0 / math.sqrt(d_k)
    )
    if mask is not None:
        scores = scores + np.where(mask, 0.0, NEG_INF)
    return scores.softmax(-1) @ v


class MultiHead:
    """h parallel attentions over learned projections, concatenated, then W_O."""

    def __init__(self, rng, dim, heads):
        if dim % heads != 0:
            raise DimensionError(f"embedding dim {dim} not divisible by {heads} heads")
        self.dim, self.heads, self.d_head = dim, heads, dim // heads
        self.wq = Linear(rng, dim, dim)
        self.wk = Linear(rng, dim, dim)
        self.wv = Linear(rng, dim, dim)
        self.wo = Linear(rng, dim, dim)

    def _split(self, x: Tensor) -> Tensor:
        b, t, _ = x.shape
        return x.reshape(b, t, self.heads, self.d_head).transpose(0, 2, 1, 3)

    def __call__(self, x_q: Tensor, x_kv: Tensor, mask=None) -> Tensor:
        b, t, _ = x_q.shape
        q, k, v = self._split(self.wq(x_q)), self._split(self.wk(x_kv)), self._split(self.wv(x_kv))
        ctx = attention(q, k, v, mask)  # (b, h, t, d_head)
        merged = ctx.transpose(0, 2, 1, 3).reshape(b, t, self.dim)
        return self.wo(merged)

    def params(self, prefix):
        out = {}
        for name, lin in (("wq", self.wq), ("wk", self.wk), ("wv", self.wv), ("wo", self.wo)):
            out.update(lin.params(f"{prefix}.{name}"))
        return out


def multi_head(module: MultiHead, x: Tensor, mask=None) -> Tensor:
    """Self-attention convenience wrapper around a MultiHead module."""
    return module(x, x, mask)


class FeedForward:
    def __init__(self, rng, dim, mult=4):
        self.lin1 = Linear(rng, dim, mult * dim)
        self.lin2 = Linear(rng, mult * dim, dim)

    def __call__(self, x: Tensor) -> Tensor:
        return self.lin2(self.lin1(x).relu())

    def params(self, prefix):
        return {**self.lin1.params(f"{prefix}.lin1"), **self.lin2.params(f"{prefix}.lin2")}


class EncoderBlock:
    def __init__(self, rng, dim, heads, ff_mult=4):
        self.ln1, self.ln2 = LayerNorm(dim), LayerNorm(dim)
        self.attn = MultiHead(rng, dim, heads)
        self.ff = FeedForward(rng, dim, ff_mult)

    def __call__(self, x: Tensor, mask=None) -> Tensor:
        x = x + self.attn(self.ln1(x), self.ln1(x), mask)
        return x + self.ff(self.ln2(x))

    def params(self, prefix):
        return {
            **self.ln1.params(f"{prefix}.ln1"),
            **self.ln2.params(f"{prefix}.ln2"),
            **self.attn.params(f"{prefix}.attn"),
            **self.ff.params(f"{prefix}.ff"),
        }


class DecoderBlock:
    def __init__(self, rng, dim, heads, ff_mult=4):
        self.ln1, self.ln2, self.ln3 = LayerNorm(dim), LayerNorm(dim), LayerNorm(dim)
        self.self_attn = MultiHead(rng, dim, heads)
        self.cross_attn = MultiHead(rng, dim, heads)
        self.ff = FeedForward(rng, dim, ff_mult)

    def __call__(self, x: Tensor, memory: Tensor, self_mask, cross_mask) -> Tensor:
        h = self.ln1(x)
        x = x + self.self_attn(h, h, self_mask)
        x = x + self.cross_attn(self.ln2(x), memory, cross_mask)
        return x + self.ff(self.ln3(x))

    def params(self, prefix):
        out = {}
        for name, mod in (
            ("ln1", self.ln1),
            ("ln2", self.ln2),
            ("ln3", self.ln3),
            ("self_attn", self.self_attn),
            ("cross_attn", self.cross_attn),
            ("ff", self.ff),
        ):
            out.update(mod.params(f"{prefix}.{name}"))
        return out


# ----------------------------------------------------------------------
# configs


@dataclass
class TransformerConfig:
    vocab_size: int
    enc_layers: int = 8
    dec_layers: int = 1
    heads: int = 8
    dim: int = 512
    max_len: int = 512
    ff_mult: int = 4

    def __post_init__(self):
        if self.dim % self.heads != 0:
            raise DimensionError(
                f"embedding dim {self.dim} must be divisible by {self.heads} heads"
            )


@dataclass
class MlpConfig:
    in_dim: int
    out_dim: int
    hidden: tuple = (128, 256, 128)
    dropout: float = 0.0


@dataclass
class FourierEncoderConfig:
    matrix_dim: int
    layers: int = 2
    dim: int = 64
    n_frequencies: int = 32
    sigma: float = 1.0
    ff_mult: int = 4
    heads: int = field(init=False, default=0)

    def __post_init__(self):
        # target head count is matrix_dim^2, rounded to the nearest divisor
        # of the embedding dimension
        want = max(1, self.matrix_dim**2)
        divisors = [h for h in range(1, self.dim + 1) if self.dim % h == 0]
        self.heads = min(divisors, key=lambda h: (abs(h - want), h))


# ----------------------------------------------------------------------
# models


class Mlp:
    """ReLU MLP over flattened matrices; dropout only in training mode."""

    def __init__(self, cfg: MlpConfig, rng):
        self.cfg = cfg
        dims = [cfg.in_dim, *cfg.hidden, cfg.out_dim]
        self.linears = [Linear(rng, a, b) for a, b in zip(dims, dims[1:])]

    def __call__(self, x: Tensor, training=False, rng=None) -> Tensor:
        for i, lin in enumerate(self.linears):
            x = lin(x)
            if i < len(self.linears) - 1:
                x = x.relu()
                if self.cfg.dropout > 0.0:
                    x = x.dropout(self.cfg.dropout, rng, training)
        return x

    def params(self):
        out = {}
        for i, lin in enumerate(self.linears):
            out.update(lin.params(f"mlp.{i}"))
        return out


def mlp_forward(model: Mlp, x, training=False, rng=None) -> Tensor:
    return model(x if isinstance(x, Tensor) else Tensor(x), training=training, rng=rng)


def fourier_features(x: Tensor, b_matrix: np.ndarray) -> Tensor:
    """gamma(x) = [cos(2 pi B x), sin(2 pi B x)]; B stays fixed."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    proj = x @ (2.0 * math.pi * np.asarray(b_matrix).T)
    return concat([proj.cos(), proj.sin()], axis=-1)


class FourierEncoder:
    """Per-entry Fourier lift, transformer encoder stack, per-entry head.

    Each matrix entry becomes one sequence position: the scalar is lifted
    through gamma(x) with a fixed Gaussian frequency vector, embedded, and
    the encoder output is projected back to one scalar per entry.
    """

    def __init__(self, cfg: FourierEncoderConfig, rng):
        self.cfg = cfg
        d2 = cfg.matrix_dim**2
        self.b_matrix = rng.normal(size=(cfg.n_frequencies, 1)) * cfg.sigma
        self.lift = Linear(rng, 2 * cfg.n_frequencies, cfg.dim)
        self.pos = parameter(rng.normal(size=(d2, cfg.dim)) * 0.02)
        self.blocks = [
            EncoderBlock(rng, cfg.dim, cfg.heads, cfg.ff_mult) for _ in range(cfg.layers)
        ]
        self.ln = LayerNorm(cfg.dim)
        self.head = Linear(rng, cfg.dim, 1)

    def __call__(self, x: Tensor, training=False, rng=None) -> Tensor:
        x = x if isinstance(x, Tensor) else Tensor(x)
        b, d2 = x.shape
        lifted = fourier_features(x.reshape(b, d2, 1), self.b_matrix)
        h = self.lift(lifted) + self.pos
        for block in self.blocks:
            h = block(h)
        out = self.head(self.ln(h))  # (b, d2, 1)
        return out.reshape(b, d2)

    def params(self):
        out = {"fourier.pos": self.pos}
        out.update(self.lift.params("fourier.lift"))
        for i, blk in enumerate(self.blocks):
            out.update(blk.params(f"fourier.block{i}"))
        out.update(self.ln.params("fourier.ln"))
        out.update(self.head.params("fourier.head"))
        return out


class EncoderDecoder:
    """Token-level transformer with causal decoding and cross-attention."""

    def __init__(self, cfg: TransformerConfig, rng):
        self.cfg = cfg
        self.src_embed = Embedding(rng, cfg.vocab_size, cfg.dim)
        self.tgt_embed = Embedding(rng, cfg.vocab_size, cfg.dim)
        self.src_pos = parameter(rng.normal(size=(cfg.max_len, cfg.dim)) * 0.02)
        self.tgt_pos = parameter(rng.normal(size=(cfg.max_len, cfg.dim)) * 0.02)
        self.enc_blocks = [
            EncoderBlock(rng, cfg.dim, cfg.heads, cfg.ff_mult)
            for _ in range(cfg.enc_layers)
        ]
        self.dec_blocks = [
            DecoderBlock(rng, cfg.dim, cfg.heads, cfg.ff_mult)
            for _ in range(cfg.dec_layers)
        ]
        self.enc_ln = LayerNorm(cfg.dim)
        self.dec_ln = LayerNorm(cfg.dim)
        self.out_proj = Linear(rng, cfg.dim, cfg.vocab_size)

    def _check_tokens(self, ids, what):
        ids = np.asarray(ids)
        if ids.ndim != 2:
            raise DimensionError(f"{what} tokens must be (batch, length)")
        if ids.shape[1] > self.cfg.max_len:
            raise DimensionError(
                f"{what} length {ids.shape[1]} exceeds max {self.cfg.max_len}"
            )
        if ids.min() < 0 or ids.max() >= self.cfg.vocab_size:
            raise DimensionError(f"{what} token id outside the vocabulary")
        return ids

    def encode(self, src_ids) -> tuple:
        src_ids = self._check_tokens(src_ids, "source")
        b, s = src_ids.shape
        src_keep = src_ids != PAD  # (b, s)
        enc_mask = src_keep[:, None, None, :]  # broadcast over heads/queries
        h = self.src_embed(src_ids) + _pos_slice(self.src_pos, s)
        for block in self.enc_blocks:
            h = block(h, enc_mask)
        return self.enc_ln(h), src_keep

    def decode(self, memory: Tensor, src_keep: np.ndarray, tgt_ids) -> Tensor:
        tgt_ids = self._check_tokens(tgt_ids, "target")
        b, t = tgt_ids.shape
        causal = np.tril(np.ones((t, t), dtype=bool))
        self_mask = causal[None, None, :, :]
        cross_mask = src_keep[:, None, None, :]
        h = self.tgt_embed(tgt_ids) + _pos_slice(self.tgt_pos, t)
        for block in self.dec_blocks:
            h = block(h, memory, self_mask, cross_mask)
        return self.out_proj(self.dec_ln(h))

    def __call__(self, src_ids, tgt_ids) -> Tensor:
        memory, src_keep = self.encode(src_ids)
        return self.decode(memory, src_keep, tgt_ids)

    def params(self):
        out = {
            "encdec.src_pos": self.src_pos,
            "encdec.tgt_pos": self.tgt_pos,
        }
        out.update(self.src_embed.params("encdec.src_embed"))
        out.update(self.tgt_embed.params("encdec.tgt_embed"))
        for i, blk in enumerate(self.enc_blocks):
            out.update(blk.params(f"encdec.enc{i}"))
        for i, blk in enumerate(self.dec_blocks):
            out.update(blk.params(f"encdec.dec{i}"))
        out.update(self.enc_ln.params("encdec.enc_ln"))
        out.update(self.dec_ln.params("encdec.dec_ln"))
        out.update(self.out_proj.params("encdec.out_proj"))
        return out


def _pos_slice(pos: Tensor, length: int) -> Tensor:
    """First `length` rows of a positional table, with gradient routing."""
    ids = np.arange(length)
    return pos.take_rows(ids)


def encoder_decoder_forward(model: EncoderDecoder, src_ids, tgt_ids) -> Tensor:
    """Next-token logits for every target position."""
    return model(src_ids, tgt_ids)
