"""Disentangled self-attention: switch-gated heads over a shared stack.

Each head runs self-attention over the response prefix with its own
query/key/value projections. A head's output then passes through a stack
shared by all heads of the layer: cross-attention that reads the encoded
history, a linear map back to the model width, layer norm, and a
position-wise feed-forward, in exactly that order and with no residual
connections (an optional residual mode exists as a trainability
fallback). The layer output is the plain sum of the gated heads'
results, so a head whose switch bit is off contributes nothing at all:
its parameters are never touched, an all-off layer yields the exact zero
matrix, and summation runs in head-index order.

Stacking layers gives the hierarchical form: layer l consumes layer
l-1's output and the l-th segment of the act switch vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .act_graph import SwitchVector
from .encoder import scaled_attention
from .numerics import Parameter, Tensor


@dataclass(frozen=True)
class DsaLayerConfig:
    heads: int
    model_dim: int = 64
    qk_dim: int | None = None  # defaults to model_dim // heads
    value_dim: int = 16
    ffn_dim: int = 256

    def __post_init__(self):
        if self.heads < 1:
            raise ValueError("heads must be >= 1")
        if self.qk_dim is None:
            object.__setattr__(self, "qk_dim", max(1, self.model_dim // self.heads))
        if min(self.qk_dim, self.value_dim, self.model_dim, self.ffn_dim) < 1:
            raise ValueError("layer dimensions must be positive")


@dataclass(frozen=True)
class HdsaConfig:
    """Per-layer configs; head counts must sum to the switch length."""

    layers: tuple[DsaLayerConfig, ...]
    residual: bool = False

    @property
    def head_counts(self) -> tuple[int, ...]:
        return tuple(layer.heads for layer in self.layers)

    @property
    def switch_length(self) -> int:
        return sum(self.head_counts)

    @property
    def model_dim(self) -> int:
        return self.layers[0].model_dim

    @classmethod
    def canonical(cls, model_dim: int = 64, value_dim: int = 16, ffn_dim: int = 256,
                  residual: bool = False) -> "HdsaConfig":
        """Three layers of 10/7/27 heads (q/k widths 6/9/2 at width 64)."""
        return cls(
            layers=tuple(
                DsaLayerConfig(heads=h, model_dim=model_dim,
                               qk_dim=max(1, model_dim // h),
                               value_dim=value_dim, ffn_dim=ffn_dim)
                for h in (10, 7, 27)
            ),
            residual=residual,
        )


class LayerSwitch:
    """Binary on/off vector for one layer's heads."""

    __slots__ = ("alphas",)

    def __init__(self, alphas):
        alphas = np.array(alphas, dtype=np.int8)
        if alphas.ndim != 1 or not np.all((alphas == 0) | (alphas == 1)):
            raise ValueError("switch must be a flat vector of 0/1 bits")
        alphas.setflags(write=False)
        self.alphas = alphas

    def active(self) -> np.ndarray:
        return np.flatnonzero(self.alphas)

    def __len__(self):
        return self.alphas.size

    def __repr__(self):
        return f"LayerSwitch({''.join(str(b) for b in self.alphas)})"


def causal_mask(n: int) -> np.ndarray:
    """Boolean (n, n) mask blocking positions above the diagonal."""
    return np.triu(np.ones((n, n), dtype=bool), k=1)


class DsaLayer:
    """One disentangled layer: private heads, shared post-head stack."""

    def __init__(self, cfg: DsaLayerConfig, rng: np.random.Generator, prefix: str,
                 residual: bool = False):
        self.cfg = cfg
        self.prefix = prefix
        self.residual = residual
        self.params: dict[str, Parameter] = {}
        d, qk, dv, f = cfg.model_dim, cfg.qk_dim, cfg.value_dim, cfg.ffn_dim
        for h in range(cfg.heads):
            self._add(f"h{h}.wq", nm.init_linear(rng, d, (d, qk)))
            self._add(f"h{h}.wk", nm.init_linear(rng, d, (d, qk)))
            self._add(f"h{h}.wv", nm.init_linear(rng, d, (d, dv)))
        # shared stack: cross-attention projections, linear to D, LN, FFN
        self._add("cross.wq", nm.init_linear(rng, dv, (dv, dv)))
        self._add("cross.wk", nm.init_linear(rng, d, (d, dv)))
        self._add("cross.wv", nm.init_linear(rng, d, (d, dv)))
        self._add("mlp.w", nm.init_linear(rng, dv, (dv, d)))
        self._add("mlp.b", np.zeros(d))
        self._add("ln.g", np.ones(d))
        self._add("ln.b", np.zeros(d))
        self._add("pff.w1", nm.init_linear(rng, d, (d, f)))
        self._add("pff.b1", np.zeros(f))
        self._add("pff.w2", nm.init_linear(rng, f, (f, d)))
        self._add("pff.b2", np.zeros(d))

    def _add(self, name: str, data: np.ndarray) -> None:
        full = f"{self.prefix}.{name}"
        self.params[full] = Parameter(full, Tensor(data, requires_grad=True))

    def _p(self, name: str) -> Tensor:
        return self.params[f"{self.prefix}.{name}"].tensor

    def parameters(self) -> list[Parameter]:
        return list(self.params.values())

    def forward(self, x: Tensor, history: Tensor, switch: LayerSwitch,
                causal: bool = True) -> Tensor:
        """Gated sum over active heads; inactive heads are skipped entirely."""
        if len(switch) != self.cfg.heads:
            raise ValueError(
                f"switch length {len(switch)} does not match {self.cfg.heads} heads"
            )
        n = x.shape[0]
        mask = causal_mask(n) if causal else None
        hist_k = nm.matmul(history, self._p("cross.wk"))
        hist_v = nm.matmul(history, self._p("cross.wv"))

        out: Tensor | None = None
        for h in switch.active():
            g = scaled_attention(
                nm.matmul(x, self._p(f"h{h}.wq")),
                nm.matmul(x, self._p(f"h{h}.wk")),
                nm.matmul(x, self._p(f"h{h}.wv")),
                mask=mask,
            )
            gi = self._shared_stack(g, hist_k, hist_v)
            out = gi if out is None else nm.add(out, gi)
        if out is None:
            return Tensor(np.zeros((n, self.cfg.model_dim)))
        return out

    def _shared_stack(self, g: Tensor, hist_k: Tensor, hist_v: Tensor) -> Tensor:
        att = scaled_attention(nm.matmul(g, self._p("cross.wq")), hist_k, hist_v)
        if self.residual:
            att = nm.add(att, g)
        x = nm.add(nm.matmul(att, self._p("mlp.w")), self._p("mlp.b"))
        x = nm.layer_norm(x, self._p("ln.g"), self._p("ln.b"))
        h1 = nm.relu(nm.add(nm.matmul(x, self._p("pff.w1")), self._p("pff.b1")))
        h2 = nm.add(nm.matmul(h1, self._p("pff.w2")), self._p("pff.b2"))
        return nm.add(x, h2) if self.residual else h2


class Hdsa:
    """Stack of DSA layers switched by the segments of an act switch vector."""

    def __init__(self, cfg: HdsaConfig, rng: np.random.Generator, prefix: str = "gen"):
        self.cfg = cfg
        self.layers = [
            DsaLayer(layer_cfg, rng, prefix=f"{prefix}.l{l}", residual=cfg.residual)
            for l, layer_cfg in enumerate(cfg.layers)
        ]

    def parameters(self) -> list[Parameter]:
        return [p for layer in self.layers for p in layer.parameters()]

    def split_switches(self, switch: SwitchVector) -> list[LayerSwitch]:
        if switch.segment_sizes != self.cfg.head_counts:
            raise ValueError(
                f"switch segments {switch.segment_sizes} do not match "
                f"head counts {self.cfg.head_counts}"
            )
        return [LayerSwitch(seg) for seg in switch.segments()]

    def forward(self, x: Tensor, history: Tensor, switch: SwitchVector,
                causal: bool = True) -> Tensor:
        for layer, layer_switch in zip(self.layers, self.split_switches(switch)):
            x = layer.forward(x, history, layer_switch, causal=causal)
        return x
