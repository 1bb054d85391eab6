"""Multi-label act prediction from the pooled history encoding.

The scorer projects the pooled vector and the concatenated side one-hots
(DB match buckets and belief bits) into the model space, squashes with
tanh, scores every graph node against a learned matrix, and applies a
sigmoid per node. Decoding thresholds each node probability with a
strict ``>``.

The predictor is trained separately and frozen before the generator is
trained.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .act_graph import Ontology, SwitchVector
from .encoder import HistoryEncoder
from .numerics import Parameter, Tensor

KB_BUCKETS = 4  # per-domain match count buckets: 0, 1, 2-3, >=4


def kb_bucket(count: int) -> int:
    if count <= 0:
        return 0
    if count == 1:
        return 1
    if count <= 3:
        return 2
    return 3


@dataclass(frozen=True)
class SideConditions:
    """DB match-count one-hots (one block of 4 per domain) and belief bits."""

    v_kb: np.ndarray
    v_bf: np.ndarray

    def concat(self) -> np.ndarray:
        return np.concatenate([np.asarray(self.v_kb, float), np.asarray(self.v_bf, float)])


def side_dims(ont: Ontology) -> tuple[int, int]:
    """(kb length, belief length) for an ontology: 4 buckets per domain and
    one bit per (domain, slot) pair."""
    n_domains = len(ont.layers[0])
    n_slots = len(ont.layers[-1])
    return KB_BUCKETS * n_domains, n_domains * n_slots


def make_side_conditions(ont: Ontology, match_counts, constrained) -> SideConditions:
    """Build side vectors from per-domain DB match counts and a set of
    (domain, slot) pairs the user has constrained."""
    kb_len, bf_len = side_dims(ont)
    n_slots = len(ont.layers[-1])
    v_kb = np.zeros(kb_len, dtype=np.int8)
    for di in range(len(ont.layers[0])):
        v_kb[di * KB_BUCKETS + kb_bucket(int(match_counts[di]))] = 1
    v_bf = np.zeros(bf_len, dtype=np.int8)
    for domain, slot in constrained:
        di = ont.label_index(0, domain)
        si = ont.label_index(ont.num_layers - 1, slot)
        v_bf[di * n_slots + si] = 1
    return SideConditions(v_kb=v_kb, v_bf=v_bf)


@dataclass
class ActDistribution:
    """Per-node activation probabilities, each strictly inside (0, 1)."""

    probs: Tensor

    def values(self) -> np.ndarray:
        return self.probs.data.reshape(-1)


class ActPredictor:
    """tanh projection of pooled history + side bits, scored per graph node."""

    def __init__(self, model_dim: int, side_dim: int, num_nodes: int,
                 rng: np.random.Generator, prefix: str = "pred"):
        self.model_dim = model_dim
        self.side_dim = side_dim
        self.num_nodes = num_nodes
        self.prefix = prefix
        self.params: dict[str, Parameter] = {}
        self._add("wu", nm.init_linear(rng, model_dim, (model_dim, model_dim)))
        self._add("wb", nm.init_linear(rng, side_dim, (side_dim, model_dim)))
        self._add("b", np.zeros(model_dim))
        self._add("va", nm.init_linear(rng, model_dim, (model_dim, num_nodes)))

    def _add(self, name: str, data: np.ndarray) -> None:
        full = f"{self.prefix}.{name}"
        self.params[full] = Parameter(full, Tensor(data, requires_grad=True))

    def _p(self, name: str) -> Tensor:
        return self.params[f"{self.prefix}.{name}"].tensor

    def parameters(self) -> list[Parameter]:
        return list(self.params.values())

    def predict_probs(self, pooled: Tensor, side: SideConditions) -> ActDistribution:
        if pooled.shape != (1, self.model_dim):
            raise nm.ShapeError(
                f"predict_probs: pooled shape {pooled.shape} vs (1, {self.model_dim})"
            )
        side_vec = side.concat().reshape(1, -1)
        if side_vec.shape[1] != self.side_dim:
            raise nm.ShapeError(
                f"predict_probs: side length {side_vec.shape[1]} vs {self.side_dim}"
            )
        hidden = nm.tanh(
            nm.add(
                nm.add(nm.matmul(pooled, self._p("wu")),
                       nm.matmul(Tensor(side_vec), self._p("wb"))),
                self._p("b"),
            )
        )
        return ActDistribution(probs=nm.sigmoid(nm.matmul(hidden, self._p("va"))))


def bce_loss(dist: ActDistribution, gold: SwitchVector) -> Tensor:
    """Summed binary cross-entropy of node probabilities vs the gold switch."""
    target = np.asarray(gold.bits, dtype=np.float64).reshape(1, -1)
    if target.shape != dist.probs.shape:
        raise nm.ShapeError(
            f"bce_loss: gold length {target.shape[1]} vs probs {dist.probs.shape[1]}"
        )
    return nm.binary_cross_entropy(dist.probs, target)


def threshold_decode(dist: ActDistribution, threshold: float,
                     segment_sizes) -> SwitchVector:
    """Set bit i iff prob_i > threshold (strict)."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    bits = (dist.values() > threshold).astype(np.int8)
    return SwitchVector(bits, segment_sizes)


def multi_label_f1(predicted: list[np.ndarray], gold: list[np.ndarray]) -> float:
    """Micro-averaged F1 over bit vectors, in [0, 1]."""
    tp = fp = fn = 0
    for p, g in zip(predicted, gold):
        p = np.asarray(p).astype(bool)
        g = np.asarray(g).astype(bool)
        tp += int((p & g).sum())
        fp += int((p & ~g).sum())
        fn += int((~p & g).sum())
    denom = 2 * tp + fp + fn
    return 1.0 if denom == 0 else 2.0 * tp / denom


def prepare_predictor_examples(corpus, vocabulary, ont: Ontology):
    """(token_ids, SideConditions, gold SwitchVector) per turn."""
    from .act_graph import aggregate, encode_act
    from .encoder import join_history

    examples = []
    for turn in corpus.turns:
        ids = vocabulary.encode(join_history(turn.history))
        gold = aggregate([encode_act(a, ont) for a in turn.gold_acts], ont)
        examples.append((ids, turn.side(), gold))
    return examples


def train_predictor(encoder: HistoryEncoder, predictor: ActPredictor, examples,
                    steps: int, batch_size: int = 8, lr: float = 1e-3,
                    seed: int = 0, log_every: int | None = None) -> list[float]:
    """Minibatch Adam over (token_ids, SideConditions, gold SwitchVector) triples.

    Returns the per-step mean losses. The encoder trains jointly with the
    scorer; freeze both afterwards before generator training.
    """
    rng = np.random.default_rng(seed)
    params = encoder.parameters() + predictor.parameters()
    losses = []
    for step in range(steps):
        idx = rng.integers(0, len(examples), size=batch_size)
        total = 0.0
        for i in idx:
            token_ids, side, gold = examples[i]
            enc = encoder.encode_ids(token_ids)
            dist = predictor.predict_probs(enc.pooled, side)
            loss = nm.scale(bce_loss(dist, gold), 1.0 / batch_size)
            nm.backward(loss)
            total += loss.item() * batch_size
        nm.adam_step(params, lr=lr)
        losses.append(total / batch_size)
        if log_every and (step + 1) % log_every == 0:
            print(f"  predictor step {step + 1}/{steps} loss {losses[-1]:.4f}")
    return losses
