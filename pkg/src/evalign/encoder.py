"""Dual encoders: a frozen attention backbone with low-rank adapters on the
query/value projections for images, and a trainable bag-of-tokens encoder for
text.  Both sides end in a projection head and unit-sphere normalization, so
`encode_image` / `encode_text` always return unit-norm vectors of the
configured embedding width.

The image backbone stands in for a large pretrained transformer: a frozen
linear token embedding over slices of the input vector, one adapted
attention layer, mean pooling.  Small enough that finite-difference checks
stay fast, while keeping the attention-score math load-bearing.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError, ShapeError, VocabularyError


@dataclass(frozen=True)
class EncoderConfig:
    image_dim: int = 16
    n_tokens: int = 4
    backbone_dim: int = 16
    lora_rank: int = 2
    embed_dim: int = 32
    vocab_size: int = 16
    positional_encoding: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.image_dim % self.n_tokens:
            raise ContractError(
                f"image_dim {self.image_dim} not divisible into {self.n_tokens} tokens"
            )
        if not 1 <= self.lora_rank < self.backbone_dim:
            raise ContractError("lora_rank must satisfy 1 <= r < backbone_dim")

    @property
    def token_width(self):
        return self.image_dim // self.n_tokens

    def to_dict(self):
        return asdict(self)

    def hash(self):
        return config_hash(self.to_dict())


def config_hash(cfg_dict):
    payload = json.dumps(cfg_dict, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()


class Linear:
    """Plain projection F @ W^T; trainable only when asked."""

    def __init__(self, weight, trainable):
        self.W = Tensor(weight, requires_grad=trainable)

    def __call__(self, F):
        return ad.matmul_nt(F, self.W)

    def vec(self, v):
        return ad.matvec(self.W, v)


class LoraLinear:
    """Frozen weight W plus a trainable rank-r bypass B @ A.

    B starts at zero, so freshly built layers reproduce the frozen path
    exactly; the effective weight is always W + B @ A.
    """

    def __init__(self, weight, rank, rng):
        c_out, c_in = np.asarray(weight).shape
        if not 1 <= rank < min(c_in, c_out):
            raise ContractError(f"rank {rank} must satisfy 1 <= r < min({c_in}, {c_out})")
        bound = 1.0 / np.sqrt(c_in)
        self.W = Tensor(weight, requires_grad=False)
        self.A = Tensor(rng.uniform(-bound, bound, size=(rank, c_in)), requires_grad=True)
        self.B = Tensor(np.zeros((c_out, rank)), requires_grad=True)

    def __call__(self, F):
        frozen = ad.matmul_nt(F, self.W)
        bypass = ad.matmul_nt(ad.matmul_nt(F, self.A), self.B)
        return ad.add(frozen, bypass)

    def effective_weight(self):
        return self.W.data + self.B.data @ self.A.data


class LoraAttention:
    """Single-head scaled dot-product attention with adapters on Q and V.

    The key path stays fully frozen; the additive in-softmax term is zero
    (no bias or mask is defined for it).
    """

    def __init__(self, dim, rank, rng):
        scale = 1.0 / np.sqrt(dim)
        self.wq = LoraLinear(rng.normal(0.0, scale, size=(dim, dim)), rank, rng)
        self.wk = Linear(rng.normal(0.0, scale, size=(dim, dim)), trainable=False)
        self.wv = LoraLinear(rng.normal(0.0, scale, size=(dim, dim)), rank, rng)
        self.dim = dim

    def __call__(self, F):
        if F.shape[0] < 1:
            raise ContractError("attention needs at least one token")
        q = self.wq(F)
        k = self.wk(F)
        v = self.wv(F)
        scores = ad.mul(ad.matmul_nt(q, k), 1.0 / np.sqrt(self.dim))
        weights = ad.softmax_row(scores)
        return ad.matmul(weights, v)


class DualEncoder:
    """Image and text towers sharing an embedding width.

    Trainable parameters: the LoRA factors of the attention Q/V projections,
    both projection heads, and the text token-embedding table.  Everything
    else (token embed, attention base weights, key projection) is frozen.
    """

    def __init__(self, config: EncoderConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        c = config.backbone_dim
        self.image_embed = Linear(
            rng.normal(0.0, 1.0 / np.sqrt(config.token_width), size=(c, config.token_width)),
            trainable=False,
        )
        self.attn = LoraAttention(c, config.lora_rank, rng)
        self.image_proj = Linear(
            rng.normal(0.0, 1.0 / np.sqrt(c), size=(config.embed_dim, c)), trainable=True
        )
        self.text_embed = Tensor(
            rng.normal(0.0, 1.0, size=(config.vocab_size, c)), requires_grad=True
        )
        self.text_proj = Linear(
            rng.normal(0.0, 1.0 / np.sqrt(c), size=(config.embed_dim, c)), trainable=True
        )
        # fixed multiplicative position pattern, only consulted when enabled
        pos = np.arange(64)[:, None] + 1.0
        freq = np.arange(c)[None, :] + 1.0
        self._positions = 1.0 + 0.3 * np.sin(pos * freq / np.sqrt(c))

    # -- parameter bookkeeping ------------------------------------------
    def parameters(self):
        """Trainable tensors, keyed by stable names."""
        return {
            "attn.wq.A": self.attn.wq.A,
            "attn.wq.B": self.attn.wq.B,
            "attn.wv.A": self.attn.wv.A,
            "attn.wv.B": self.attn.wv.B,
            "image_proj.W": self.image_proj.W,
            "text_embed.E": self.text_embed,
            "text_proj.W": self.text_proj.W,
        }

    def frozen_tensors(self):
        return {
            "image_embed.W": self.image_embed.W,
            "attn.wq.W": self.attn.wq.W,
            "attn.wk.W": self.attn.wk.W,
            "attn.wv.W": self.attn.wv.W,
        }

    def all_tensors(self):
        out = dict(self.frozen_tensors())
        out.update(self.parameters())
        return out

    def frozen_checksum(self):
        h = hashlib.sha256()
        for name in sorted(self.frozen_tensors()):
            h.update(name.encode())
            h.update(self.frozen_tensors()[name].data.tobytes())
        return h.hexdigest()

    # -- differentiable paths -------------------------------------------
    def encode_image_t(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.config.image_dim,):
            raise ShapeError(
                f"image sample has shape {x.shape}, expected ({self.config.image_dim},)"
            )
        tokens = Tensor(x.reshape(self.config.n_tokens, self.config.token_width))
        f = self.image_embed(tokens)
        f = self.attn(f)
        pooled = ad.mean_rows(f)
        return ad.l2_normalize(self.image_proj.vec(pooled))

    def encode_text_t(self, token_ids):
        ids = list(token_ids)
        if not ids:
            raise ContractError("text sample must contain at least one token")
        v = self.config.vocab_size
        for t in ids:
            if not 0 <= int(t) < v:
                raise VocabularyError(f"token id {t} outside vocabulary of size {v}")
        if self.config.positional_encoding:
            rows = []
            for j, t in enumerate(ids):
                onehot = np.zeros(v)
                onehot[int(t)] = 1.0
                row = ad.vecmat(Tensor(onehot), self.text_embed)
                rows.append(ad.mul(row, Tensor(self._positions[j % len(self._positions)])))
            pooled = ad.mean_rows(ad.stack_rows(rows))
        else:
            counts = np.zeros(v)
            for t in ids:
                counts[int(t)] += 1.0 / len(ids)
            pooled = ad.vecmat(Tensor(counts), self.text_embed)
        return ad.l2_normalize(self.text_proj.vec(pooled))

    # -- batched differentiable paths -------------------------------------
    def encode_image_batch_t(self, xs):
        """Unit-norm embeddings for a batch of image vectors, as one graph.

        Token embedding and the Q/K/V projections run on the stacked token
        block (they are per-token linear maps); attention mixes tokens only
        within each sample's row slice.  Identical math to the per-sample
        path, far fewer tape nodes.
        """
        xs = [np.asarray(x, dtype=np.float64) for x in xs]
        if not xs:
            raise ContractError("need at least one image")
        for x in xs:
            if x.shape != (self.config.image_dim,):
                raise ShapeError(
                    f"image sample has shape {x.shape}, expected ({self.config.image_dim},)"
                )
        n_tok = self.config.n_tokens
        stacked = Tensor(
            np.concatenate([x.reshape(n_tok, self.config.token_width) for x in xs])
        )
        f = self.image_embed(stacked)
        q_all = self.attn.wq(f)
        k_all = self.attn.wk(f)
        v_all = self.attn.wv(f)
        scale = 1.0 / np.sqrt(self.attn.dim)
        pooled = []
        for i in range(len(xs)):
            lo, hi = i * n_tok, (i + 1) * n_tok
            q = ad.slice_rows(q_all, lo, hi)
            k = ad.slice_rows(k_all, lo, hi)
            v = ad.slice_rows(v_all, lo, hi)
            weights = ad.softmax_row(ad.mul(ad.matmul_nt(q, k), scale))
            pooled.append(ad.mean_rows(ad.matmul(weights, v)))
        h = ad.matmul_nt(ad.stack_rows(pooled), self.image_proj.W)
        return ad.l2_normalize_rows(h)

    def encode_text_batch_t(self, token_id_lists):
        """Unit-norm embeddings for a batch of token sequences, one graph.

        Only the default bag-of-tokens pooling is batched; positional mode
        falls back to the per-sample path.
        """
        token_id_lists = [list(ids) for ids in token_id_lists]
        if not token_id_lists:
            raise ContractError("need at least one text")
        if self.config.positional_encoding:
            rows = [self.encode_text_t(ids) for ids in token_id_lists]
            return ad.stack_rows(rows)
        v = self.config.vocab_size
        counts = np.zeros((len(token_id_lists), v))
        for i, ids in enumerate(token_id_lists):
            if not ids:
                raise ContractError("text sample must contain at least one token")
            for t in ids:
                if not 0 <= int(t) < v:
                    raise VocabularyError(f"token id {t} outside vocabulary of size {v}")
                counts[i, int(t)] += 1.0 / len(ids)
        pooled = ad.matmul(Tensor(counts), self.text_embed)
        h = ad.matmul_nt(pooled, self.text_proj.W)
        return ad.l2_normalize_rows(h)

    # -- public inference -------------------------------------------------
    def encode_image(self, x):
        with ad.no_grad():
            return self.encode_image_t(x).data.copy()

    def encode_text(self, token_ids):
        with ad.no_grad():
            return self.encode_text_t(token_ids).data.copy()


def encode_image(enc: DualEncoder, x):
    """Unit-norm image embedding of width `embed_dim`."""
    return enc.encode_image(x)


def encode_text(enc: DualEncoder, token_ids):
    """Unit-norm text embedding of width `embed_dim`."""
    return enc.encode_text(token_ids)


def lora_forward(layer: LoraLinear, f_in):
    """Apply a LoRA-adapted projection to a (tokens x C_in) tensor."""
    f_in = f_in if isinstance(f_in, Tensor) else Tensor(f_in)
    if f_in.data.ndim != 2 or f_in.shape[1] != layer.W.shape[1]:
        raise ShapeError(
            f"lora_forward: input {f_in.shape} incompatible with weight {layer.W.shape}"
        )
    return layer(f_in)


def lora_attention(att: LoraAttention, f):
    """Apply adapted single-head attention to a (tokens x C) tensor."""
    f = f if isinstance(f, Tensor) else Tensor(f)
    return att(f)
