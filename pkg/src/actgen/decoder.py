"""Autoregressive response generation over the gated-attention stack.

Training scores gold responses by teacher forcing under a causal mask;
decoding is greedy or beam search with deterministic tie-breaking
(higher summed log-prob first, then lexicographically smaller token
sequence, which also prefers the shorter of two equal-scoring prefixes).
Scores are raw summed log-probs with no length normalization.

Two conditioning modes exist: "graph" gates the attention heads with the
act switch vector; "flat" runs a fixed small head set (a plain few-head
decoder body of comparable capacity) and injects the act information
only as a learned projection of the flat triplet one-hot added to each
input embedding (the baseline the graph representation is compared
against).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from . import vocab as V
from .act_graph import ActTriplet, Ontology, SwitchVector, aggregate, decode_switch, encode_act
from .act_predictor import ActPredictor, SideConditions, threshold_decode
from .dsa import Hdsa, HdsaConfig
from .encoder import HistoryEncoder
from .numerics import Parameter, Tensor


@dataclass(frozen=True)
class GenerationConfig:
    beam_size: int = 2
    max_len: int = 60

    def __post_init__(self):
        if self.beam_size < 1:
            raise ValueError("beam_size must be >= 1")
        if self.max_len < 1:
            raise ValueError("max_len must be >= 1")


@dataclass(frozen=True)
class Hypothesis:
    """A (possibly finished) candidate: content token ids and summed log-prob."""

    tokens: tuple[int, ...]
    logp: float
    finished: bool = False

    def sort_key(self):
        return (-self.logp, self.tokens)


class ResponseGenerator:
    """Token embedding + gated attention stack + vocabulary projection."""

    def __init__(self, cfg: HdsaConfig, vocab_size: int, rng: np.random.Generator,
                 max_len: int = 60, conditioning: str = "graph",
                 flat_dim: int | None = None, prefix: str = "gen",
                 bos_id: int = V.BOS, eos_id: int = V.EOS):
        if conditioning not in ("graph", "flat"):
            raise ValueError(f"unknown conditioning mode {conditioning!r}")
        if conditioning == "flat" and not flat_dim:
            raise ValueError("flat conditioning needs flat_dim")
        if not (0 <= bos_id < vocab_size and 0 <= eos_id < vocab_size):
            raise ValueError("bos/eos ids must be inside the vocabulary")
        self.cfg = cfg
        self.vocab_size = vocab_size
        self.max_len = max_len
        self.conditioning = conditioning
        self.flat_dim = flat_dim
        self.prefix = prefix
        self.bos_id = bos_id
        self.eos_id = eos_id
        d = cfg.model_dim
        self.hdsa = Hdsa(cfg, rng, prefix=prefix)
        self.params: dict[str, Parameter] = {p.name: p for p in self.hdsa.parameters()}
        self._add("emb", nm.init_embedding(rng, (vocab_size, d)))
        self._add("wv", nm.init_linear(rng, d, (d, vocab_size)))
        self._add("bv", np.zeros(vocab_size))
        if conditioning == "flat":
            self._add("flat.w", nm.init_linear(rng, flat_dim, (flat_dim, d)))
        self._positions = nm.sinusoidal_positions(max_len + 2, d)
        # flat mode runs a fixed plain decoder body: the first few heads
        # of every layer, act information entering only via the bias
        bits = np.zeros(cfg.switch_length, dtype=np.int8)
        start = 0
        for count in cfg.head_counts:
            bits[start: start + min(2, count)] = 1
            start += count
        self._flat_switch = SwitchVector(bits, cfg.head_counts)

    def _add(self, name: str, data: np.ndarray) -> None:
        full = f"{self.prefix}.{name}"
        self.params[full] = Parameter(full, Tensor(data, requires_grad=True))

    def _p(self, name: str) -> Tensor:
        return self.params[f"{self.prefix}.{name}"].tensor

    def parameters(self) -> list[Parameter]:
        return list(self.params.values())

    def _condition(self, cond):
        """Returns (switch, input bias or None) for either conditioning mode."""
        if self.conditioning == "graph":
            if not isinstance(cond, SwitchVector):
                raise TypeError("graph conditioning expects a SwitchVector")
            return cond, None
        vec = np.asarray(cond, dtype=np.float64).reshape(1, -1)
        if vec.shape[1] != self.flat_dim:
            raise nm.ShapeError(f"flat vector length {vec.shape[1]} vs {self.flat_dim}")
        return self._flat_switch, nm.matmul(Tensor(vec), self._p("flat.w"))

    def hidden_states(self, input_ids, history: Tensor, cond, causal: bool = True) -> Tensor:
        switch, bias = self._condition(cond)
        ids = np.asarray(input_ids, dtype=np.int64)
        x = nm.embedding_lookup(self._p("emb"), ids)
        x = nm.add(x, Tensor(self._positions[: ids.size]))
        if bias is not None:
            x = nm.add(x, bias)
        return self.hdsa.forward(x, history, switch, causal=causal)

    def token_logits(self, hidden: Tensor) -> Tensor:
        if hidden.shape[1] != self.cfg.model_dim:
            raise nm.ShapeError(
                f"token_logits: hidden width {hidden.shape[1]} vs {self.cfg.model_dim}"
            )
        return nm.add(nm.matmul(hidden, self._p("wv")), self._p("bv"))

    def sequence_nll(self, response_ids, history: Tensor, cond) -> Tensor:
        """Per-token mean NLL of the response under teacher forcing.

        ``response_ids`` are content tokens; BOS is prepended to the input
        and EOS appended to the targets (shift-by-one alignment).
        """
        response_ids = [int(t) for t in response_ids]
        if not response_ids:
            raise ValueError("sequence_nll: empty response")
        inputs = [self.bos_id] + response_ids
        targets = np.asarray(response_ids + [self.eos_id], dtype=np.int64)
        hidden = self.hidden_states(inputs, history, cond, causal=True)
        nll = nm.cross_entropy_from_logits(self.token_logits(hidden), targets)
        return nm.tmean(nll)

    def token_accuracy(self, response_ids, history: Tensor, cond) -> tuple[int, int]:
        """(correct, total) teacher-forced argmax counts for one response."""
        response_ids = [int(t) for t in response_ids]
        inputs = [self.bos_id] + response_ids
        targets = np.asarray(response_ids + [self.eos_id], dtype=np.int64)
        with nm.no_grad():
            hidden = self.hidden_states(inputs, history, cond, causal=True)
            logits = self.token_logits(hidden).data
        pred = logits.argmax(axis=1)
        return int((pred == targets).sum()), targets.size

    # ------------------------------------------------------------------
    # decoding
    # ------------------------------------------------------------------

    def _step_logprobs(self, prefix: tuple[int, ...], history: Tensor, cond) -> np.ndarray:
        inputs = [self.bos_id] + list(prefix)
        hidden = self.hidden_states(inputs, history, cond, causal=True)
        logits = self.token_logits(hidden).data[-1]
        m = logits.max()
        return logits - m - np.log(np.exp(logits - m).sum())

    def greedy_decode(self, history: Tensor, cond, max_len: int | None = None) -> Hypothesis:
        """Argmax decoding; ties pick the lowest token id (np.argmax does)."""
        max_len = self.max_len if max_len is None else max_len
        tokens: list[int] = []
        logp = 0.0
        with nm.no_grad():
            for _ in range(max_len):
                lp = self._step_logprobs(tuple(tokens), history, cond)
                tok = int(lp.argmax())
                logp += float(lp[tok])
                if tok == self.eos_id:
                    return Hypothesis(tuple(tokens), logp, finished=True)
                tokens.append(tok)
        return Hypothesis(tuple(tokens), logp, finished=False)

    def beam_decode(self, history: Tensor, cond, beam_size: int | None = None,
                    max_len: int | None = None) -> Hypothesis:
        """Beam search over summed log-probs.

        Each live hypothesis expands by its top ``beam_size`` tokens; the
        global top ``beam_size`` candidates survive, finished ones (EOS)
        are retained, and the best finished hypothesis is returned (best
        partial if nothing finished by ``max_len``). Ties break toward
        the lexicographically smaller token sequence.
        """
        beam_size = beam_size if beam_size is not None else 2
        max_len = self.max_len if max_len is None else max_len
        if beam_size < 1:
            raise ValueError("beam_size must be >= 1")
        live = [Hypothesis(tokens=(), logp=0.0)]
        finished: list[Hypothesis] = []
        with nm.no_grad():
            for _ in range(max_len):
                if not live:
                    break
                candidates: list[Hypothesis] = []
                for hyp in live:
                    lp = self._step_logprobs(hyp.tokens, history, cond)
                    k = min(beam_size, lp.size)
                    # stable sort keeps the lowest token id among tied scores
                    top = np.argsort(-lp, kind="stable")[:k]
                    for tok in (int(t) for t in top):
                        if tok == self.eos_id:
                            candidates.append(
                                Hypothesis(hyp.tokens, hyp.logp + float(lp[tok]), True)
                            )
                        else:
                            candidates.append(
                                Hypothesis(hyp.tokens + (tok,), hyp.logp + float(lp[tok]))
                            )
                candidates.sort(key=Hypothesis.sort_key)
                kept = candidates[:beam_size]
                finished.extend(h for h in kept if h.finished)
                live = [h for h in kept if not h.finished]
        pool = finished if finished else live
        return min(pool, key=Hypothesis.sort_key)


def beam_decode(generator: ResponseGenerator, history: Tensor, cond,
                cfg: GenerationConfig) -> Hypothesis:
    return generator.beam_decode(history, cond, beam_size=cfg.beam_size,
                                 max_len=cfg.max_len)


@dataclass
class PipelineResult:
    """Output of the full generate pipeline for one turn."""

    tokens: list[str]
    switch: SwitchVector
    acts: list[ActTriplet]
    forced: bool


def generate_response(history_turns, side: SideConditions, encoder: HistoryEncoder,
                      predictor: ActPredictor, generator: ResponseGenerator,
                      ont: Ontology, vocabulary, gen_cfg: GenerationConfig,
                      threshold: float = 0.4,
                      force_acts: list[ActTriplet] | None = None) -> PipelineResult:
    """Encode history, predict (or force) acts, decode the response.

    ``history_turns`` is a list of (speaker, text) pairs. With
    ``force_acts`` the predictor is bypassed and the given acts form the
    switch (the ground-truth-act condition).
    """
    from .encoder import join_history

    toks = join_history(history_turns)
    with nm.no_grad():
        enc = encoder.encode_ids(vocabulary.encode(toks))
        history = Tensor(enc.tokens.data)
        if force_acts is not None:
            switch = aggregate([encode_act(a, ont) for a in force_acts], ont)
            forced = True
        else:
            dist = predictor.predict_probs(enc.pooled, side)
            switch = threshold_decode(dist, threshold, ont.layer_sizes)
            forced = False
    hyp = generator.beam_decode(history, switch, beam_size=gen_cfg.beam_size,
                                max_len=gen_cfg.max_len)
    return PipelineResult(
        tokens=vocabulary.decode(hyp.tokens),
        switch=switch,
        acts=decode_switch(switch, ont),
        forced=forced,
    )


def prepare_generator_examples(corpus, vocabulary, ont: Ontology,
                               encoder: HistoryEncoder, conditioning: str = "graph",
                               inventory=None):
    """(frozen history Tensor, condition, response ids) per turn.

    Histories are encoded once here under no_grad; the encoder stays
    frozen during generator training. Conditions per mode: "graph" is
    the aggregated gold switch (gates heads), "graph-bias" is the same
    switch fed as a plain bit vector into the input-bias path, and
    "flat" is the triplet one-hot over ``inventory``.
    """
    from .act_graph import flatten_tree_encoding
    from .encoder import join_history

    if conditioning not in ("graph", "graph-bias", "flat"):
        raise ValueError(f"unknown conditioning mode {conditioning!r}")
    if conditioning == "flat" and inventory is None:
        raise ValueError("flat conditioning needs an act inventory")
    examples = []
    with nm.no_grad():
        for turn in corpus.turns:
            ids = vocabulary.encode(join_history(turn.history))
            history = Tensor(encoder.encode_ids(ids).tokens.data)
            switch = aggregate([encode_act(a, ont) for a in turn.gold_acts], ont)
            if conditioning == "graph":
                cond = switch
            elif conditioning == "graph-bias":
                cond = switch.bits.astype(np.float64)
            else:
                cond = flatten_tree_encoding(turn.gold_acts, inventory)
            examples.append((history, cond, vocabulary.encode(turn.delex_response)))
    return examples


def train_generator(generator: ResponseGenerator, examples, steps: int,
                    batch_size: int = 8, lr: float = 1e-3, seed: int = 0,
                    log_every: int | None = None) -> list[float]:
    """Minibatch Adam over (frozen history Tensor, condition, response ids).

    The history tensors must already be detached (the encoder is frozen
    before generator training); only generator parameters update.
    """
    rng = np.random.default_rng(seed)
    params = generator.parameters()
    losses = []
    for step in range(steps):
        idx = rng.integers(0, len(examples), size=batch_size)
        total = 0.0
        for i in idx:
            history, cond, response_ids = examples[i]
            loss = nm.scale(generator.sequence_nll(response_ids, history, cond),
                            1.0 / batch_size)
            nm.backward(loss)
            total += loss.item() * batch_size
        nm.adam_step(params, lr=lr)
        losses.append(total / batch_size)
        if log_every and (step + 1) % log_every == 0:
            print(f"  generator step {step + 1}/{steps} loss {losses[-1]:.4f}")
    return losses
