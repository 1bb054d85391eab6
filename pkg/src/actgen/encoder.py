"""History encoder: stacked self-attention blocks with first-token pooling.

The dialog history is concatenated into one token sequence with speaker
markers, a pooling token is prepended, and three standard transformer
blocks (multi-head attention, residual, layer norm, feed-forward,
residual, layer norm) produce per-token vectors. The pooled summary is
the first row's output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from . import vocab as V
from .numerics import Parameter, Tensor


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    layers: int = 3
    model_dim: int = 64
    heads: int = 4
    head_dim: int = 16
    ffn_dim: int = 256
    max_len: int = 512

    def __post_init__(self):
        if self.heads * self.head_dim != self.model_dim:
            raise ValueError(
                f"heads*head_dim must equal model_dim "
                f"({self.heads}*{self.head_dim} != {self.model_dim})"
            )


@dataclass
class EncodedHistory:
    """Pooled summary (1, D) and per-token matrix (m, D); pooled is row 0."""

    pooled: Tensor
    tokens: Tensor


class HistoryEncoder:
    """Owns the encoder parameters and runs the forward pass."""

    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator, prefix: str = "enc"):
        self.cfg = cfg
        self.prefix = prefix
        self.params: dict[str, Parameter] = {}
        d, f = cfg.model_dim, cfg.ffn_dim
        self._add("emb", nm.init_embedding(rng, (cfg.vocab_size, d)))
        for l in range(cfg.layers):
            for w in ("wq", "wk", "wv", "wo"):
                self._add(f"l{l}.{w}", nm.init_linear(rng, d, (d, d)))
            self._add(f"l{l}.ln1.g", np.ones(d))
            self._add(f"l{l}.ln1.b", np.zeros(d))
            self._add(f"l{l}.ffn.w1", nm.init_linear(rng, d, (d, f)))
            self._add(f"l{l}.ffn.b1", np.zeros(f))
            self._add(f"l{l}.ffn.w2", nm.init_linear(rng, f, (f, d)))
            self._add(f"l{l}.ffn.b2", np.zeros(d))
            self._add(f"l{l}.ln2.g", np.ones(d))
            self._add(f"l{l}.ln2.b", np.zeros(d))
        self._positions = nm.sinusoidal_positions(cfg.max_len, d)

    def _add(self, name: str, data: np.ndarray) -> None:
        full = f"{self.prefix}.{name}"
        self.params[full] = Parameter(full, Tensor(data, requires_grad=True))

    def _p(self, name: str) -> Tensor:
        return self.params[f"{self.prefix}.{name}"].tensor

    def parameters(self) -> list[Parameter]:
        return list(self.params.values())

    def encode_ids(self, token_ids) -> EncodedHistory:
        """Encode a raw id sequence. Prepends [POOL]; truncates oldest tokens."""
        cfg = self.cfg
        ids = [int(t) for t in token_ids]
        # Left-truncate so the pool token plus the newest tokens fit.
        keep = cfg.max_len - 1
        if len(ids) > keep:
            ids = ids[len(ids) - keep:]
        ids = [V.POOL] + ids
        m = len(ids)

        x = nm.embedding_lookup(self._p("emb"), np.asarray(ids, dtype=np.int64))
        x = nm.add(x, Tensor(self._positions[:m]))
        for l in range(cfg.layers):
            x = self._block(l, x)
        return EncodedHistory(pooled=nm.rows(x, 0, 1), tokens=x)

    def _block(self, l: int, x: Tensor) -> Tensor:
        cfg = self.cfg
        q = nm.matmul(x, self._p(f"l{l}.wq"))
        k = nm.matmul(x, self._p(f"l{l}.wk"))
        v = nm.matmul(x, self._p(f"l{l}.wv"))
        head_outs = []
        for h in range(cfg.heads):
            lo, hi = h * cfg.head_dim, (h + 1) * cfg.head_dim
            head_outs.append(
                scaled_attention(nm.cols(q, lo, hi), nm.cols(k, lo, hi), nm.cols(v, lo, hi))
            )
        attn = nm.matmul(nm.concat(head_outs, axis=1), self._p(f"l{l}.wo"))
        x = nm.layer_norm(nm.add(x, attn), self._p(f"l{l}.ln1.g"), self._p(f"l{l}.ln1.b"))
        h1 = nm.relu(nm.add(nm.matmul(x, self._p(f"l{l}.ffn.w1")), self._p(f"l{l}.ffn.b1")))
        h2 = nm.add(nm.matmul(h1, self._p(f"l{l}.ffn.w2")), self._p(f"l{l}.ffn.b2"))
        return nm.layer_norm(nm.add(x, h2), self._p(f"l{l}.ln2.g"), self._p(f"l{l}.ln2.b"))


def scaled_attention(q: Tensor, k: Tensor, v: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """softmax(q kᵀ / sqrt(d)) v with an optional boolean blocking mask.

    The scale is the query/key width. Masked entries are set to -inf
    before the softmax so they contribute exact zeros; a fully blocked
    row is rejected.
    """
    if q.shape[1] != k.shape[1]:
        raise nm.ShapeError(f"attention: q/k widths differ {q.shape} vs {k.shape}")
    if k.shape[0] != v.shape[0]:
        raise nm.ShapeError(f"attention: k/v row counts differ {k.shape} vs {v.shape}")
    scores = nm.scale(nm.matmul(q, nm.transpose(k)), 1.0 / np.sqrt(q.shape[1]))
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.all(axis=1).any():
            raise nm.NumericsError("attention: a row has every key masked")
        scores = nm.masked_fill(scores, mask, float("-inf"))
    return nm.matmul(nm.softmax(scores), v)


def join_history(turns, max_tokens: int | None = None) -> list[str]:
    """Concatenate (speaker, text) turns with [USR]/[SYS] markers.

    Speakers are "user"/"system"; text is tokenized lowercase. When a
    budget is given, the oldest tokens are dropped.
    """
    toks: list[str] = []
    for speaker, text in turns:
        marker = "[USR]" if speaker == "user" else "[SYS]"
        toks.append(marker)
        toks.extend(V.tokenize(text))
    if max_tokens is not None and len(toks) > max_tokens:
        toks = toks[len(toks) - max_tokens:]
    return toks
