"""Dialog data model, delexicalization, corpus files, and synthetic data.

A corpus is a list of turns grouped into dialogs. Responses are stored
both delexicalized (placeholders like ``<hotel.name>`` standing in for
entity values) and raw, together with the placeholder-to-surface map
that converts between the two.

The synthetic generator produces desk-scale corpora whose responses are
deterministic template realizations of sampled act sets, with a
configurable power-law over act frequencies and an optional holdout set
of triplets that never appears in the training split. The templates are
compositional in the act's domain/action/slot labels, which is what
makes held-out label combinations realizable from their parts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .act_graph import ActGraphError, ActTriplet, Ontology, NO_SLOT
from .act_predictor import SideConditions, make_side_conditions
from .vocab import tokenize


class CorpusError(ValueError):
    """Raised for malformed corpus records or inconsistent synthesis specs."""


def placeholder(domain: str, slot: str) -> str:
    return f"<{domain}.{slot}>"


# ---------------------------------------------------------------------------
# delexicalization
# ---------------------------------------------------------------------------

def delexicalize(text: str, slot_values: dict[str, str]) -> list[str]:
    """Replace entity surface strings with their placeholders, then tokenize.

    Longer surface strings are replaced first, so a value nested inside
    another never fires; replacement is plain left-to-right within each
    surface string.
    """
    ordered = sorted(slot_values.items(), key=lambda kv: (-len(kv[1]), kv[1], kv[0]))
    for ph, surface in ordered:
        if surface:
            text = text.replace(surface, f" {ph} ")
    return tokenize(text)


def restore(delex_tokens, slot_values: dict[str, str]) -> str:
    """Replace placeholder tokens with their surface strings.

    An unmapped placeholder survives verbatim: that is a signal worth
    seeing in output, not an error.
    """
    return " ".join(slot_values.get(tok, tok) for tok in delex_tokens)


# ---------------------------------------------------------------------------
# data model
# ---------------------------------------------------------------------------

@dataclass
class DialogTurn:
    """One system turn: its history, side bits, gold acts, and responses."""

    history: list[tuple[str, str]]
    belief: np.ndarray
    kb: np.ndarray
    gold_acts: list[ActTriplet]
    delex_response: list[str]
    lex_response: str
    slot_values: dict[str, str]

    def side(self) -> SideConditions:
        return SideConditions(v_kb=self.kb, v_bf=self.belief)

    def validate(self, ont: Ontology) -> None:
        for act in self.gold_acts:
            for layer, label in enumerate((act.domain, act.action, act.slot)):
                ont.label_index(layer, label)
        for tok in self.delex_response:
            if tok.startswith("<") and tok.endswith(">") and tok not in self.slot_values:
                raise CorpusError(f"placeholder {tok} has no entry in slot_values")


@dataclass
class Corpus:
    """Turns plus the dialog grouping (lists of turn indices)."""

    turns: list[DialogTurn]
    dialogs: list[list[int]] = field(default_factory=list)

    def __post_init__(self):
        if not self.dialogs:
            self.dialogs = [[i] for i in range(len(self.turns))]

    def __len__(self):
        return len(self.turns)

    def validate(self, ont: Ontology) -> None:
        for turn in self.turns:
            turn.validate(ont)


def save_corpus(corpus: Corpus, path) -> None:
    """One JSON record per line with the fields history, belief, kb, acts,
    delex, lex, values (plus the dialog index)."""
    with open(path, "w", encoding="utf-8") as fh:
        for did, turn_ids in enumerate(corpus.dialogs):
            for ti in turn_ids:
                t = corpus.turns[ti]
                rec = {
                    "history": [[s, x] for s, x in t.history],
                    "belief": [int(b) for b in t.belief],
                    "kb": [int(b) for b in t.kb],
                    "acts": [str(a) for a in t.gold_acts],
                    "delex": list(t.delex_response),
                    "lex": t.lex_response,
                    "values": dict(t.slot_values),
                    "dialog": did,
                }
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


def load_corpus(path, ont: Ontology | None = None) -> Corpus:
    """Load a corpus file; rejects any turn whose act is outside ``ont``."""
    turns: list[DialogTurn] = []
    dialog_of: list[int] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                turn = DialogTurn(
                    history=[(s, x) for s, x in rec["history"]],
                    belief=np.asarray(rec["belief"], dtype=np.int8),
                    kb=np.asarray(rec["kb"], dtype=np.int8),
                    gold_acts=[ActTriplet.parse(a) for a in rec["acts"]],
                    delex_response=list(rec["delex"]),
                    lex_response=rec["lex"],
                    slot_values=dict(rec["values"]),
                )
            except (KeyError, ValueError, TypeError) as exc:
                raise CorpusError(f"{path}:{line_no}: bad record ({exc})")
            if ont is not None:
                try:
                    turn.validate(ont)
                except ActGraphError as exc:
                    raise CorpusError(f"{path}:{line_no}: {exc}")
            turns.append(turn)
            dialog_of.append(int(rec.get("dialog", len(dialog_of))))
    dialogs: dict[int, list[int]] = {}
    for idx, did in enumerate(dialog_of):
        dialogs.setdefault(did, []).append(idx)
    return Corpus(turns=turns, dialogs=[dialogs[d] for d in sorted(dialogs)])


def act_frequency_table(corpus: Corpus) -> dict[ActTriplet, int]:
    """Occurrences of each act triplet across turns (once per turn)."""
    freq: dict[ActTriplet, int] = {}
    for turn in corpus.turns:
        for act in turn.gold_acts:
            freq[act] = freq.get(act, 0) + 1
    return freq


# ---------------------------------------------------------------------------
# synthetic corpus
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticSpec:
    """Knobs for the synthetic corpus generator.

    ``pool_size`` bounds the distinct act triplets in circulation;
    ``holdout`` names triplets excluded from the training split (their
    turns appear in the test split instead); frequencies follow
    rank^(-zipf_alpha) over the shuffled pool.
    """

    ontology: Ontology
    num_dialogs: int = 400
    pool_size: int = 80
    holdout: tuple[ActTriplet, ...] = ()
    seed: int = 0
    zipf_alpha: float = 1.1
    support_share: float = 0.0
    dev_fraction: float = 0.1
    test_fraction: float = 0.1
    two_turn_fraction: float = 0.35
    max_acts_per_turn: int = 3
    values_per_slot: int = 3
    # "informative" user turns name the acts; "constant" makes every
    # history identical so the act condition is the only signal
    history_mode: str = "informative"

    def __post_init__(self):
        if self.ontology.num_layers != 3:
            raise CorpusError("synthetic generation needs a 3-layer ontology")
        if self.num_dialogs < 1 or self.pool_size < 2:
            raise CorpusError("num_dialogs and pool_size must be positive")
        if not 0.0 <= self.dev_fraction + self.test_fraction < 1.0:
            raise CorpusError("dev+test fractions must leave room for a train split")
        if self.history_mode not in ("informative", "constant"):
            raise CorpusError(f"unknown history_mode {self.history_mode!r}")


@dataclass
class SyntheticCorpora:
    train: Corpus
    dev: Corpus
    test: Corpus
    ontology: Ontology
    pool: list[ActTriplet]
    weights: np.ndarray


def synthetic_ontology(sizes: tuple[int, int, int]) -> Ontology:
    """Label-generated 3-layer ontology; layer lists end with "none"."""
    d, a, s = sizes
    return Ontology([
        [f"dom{i}" for i in range(d)],
        [f"act{i}" for i in range(a - 1)] + [NO_SLOT],
        [f"slot{i}" for i in range(s - 1)] + [NO_SLOT],
    ])


# Response patterns per action, compositional in the label words. Index
# is the action's position in the ontology layer, wrapped around.
_PATTERNS_WITH_SLOT = [
    lambda d, s, ph: ["the", s, "of", "the", d, "is", ph, "."],
    lambda d, s, ph: ["what", s, "do", "you", "want", "for", "the", d, "?"],
    lambda d, s, ph: ["i", "recommend", "the", d, "with", s, ph, "."],
    lambda d, s, ph: ["i", "booked", "the", d, "with", s, ph, "."],
    lambda d, s, ph: ["please", "select", "a", s, "for", "the", d, "from", ph, "."],
    lambda d, s, ph: ["sorry", "no", d, "matches", "that", s, "."],
    lambda d, s, ph: ["noted", "the", s, "for", "the", d, "."],
]
_PATTERNS_NO_SLOT = [
    lambda d: ["here", "is", "the", d, "information", "."],
    lambda d: ["what", "do", "you", "need", "for", "the", d, "?"],
    lambda d: ["i", "recommend", "this", d, "."],
    lambda d: ["your", d, "booking", "is", "done", "."],
    lambda d: ["please", "choose", "a", d, "."],
    lambda d: ["sorry", "no", d, "is", "available", "."],
    lambda d: ["okay", "anything", "else", "for", "the", d, "?"],
]
# Actions whose slotted pattern emits a placeholder (by pattern index).
_PLACEHOLDER_PATTERNS = {0, 2, 3, 4}


def realize_act(act: ActTriplet, ont: Ontology) -> tuple[list[str], list[str]]:
    """Deterministic (tokens, placeholders) clause for one act."""
    ai = ont.label_index(1, act.action) % len(_PATTERNS_WITH_SLOT)
    if act.slot == NO_SLOT:
        return _PATTERNS_NO_SLOT[ai](act.domain), []
    ph = placeholder(act.domain, act.slot)
    tokens = _PATTERNS_WITH_SLOT[ai](act.domain, act.slot, ph)
    return tokens, ([ph] if ai in _PLACEHOLDER_PATTERNS else [])


def realize_acts(acts, ont: Ontology) -> tuple[list[str], list[str]]:
    """Clauses concatenated in canonical (layer-index) act order."""
    def order(a: ActTriplet):
        return (ont.label_index(0, a.domain), ont.label_index(1, a.action),
                ont.label_index(2, a.slot))

    tokens: list[str] = []
    placeholders: list[str] = []
    for act in sorted(acts, key=order):
        t, p = realize_act(act, ont)
        tokens.extend(t)
        placeholders.extend(p)
    return tokens, placeholders


def user_utterance(acts, ont: Ontology) -> str:
    """Deterministic user request naming each act's labels."""
    def order(a: ActTriplet):
        return (ont.label_index(0, a.domain), ont.label_index(1, a.action),
                ont.label_index(2, a.slot))

    parts = [f"please {a.action} the {a.slot} for the {a.domain}"
             for a in sorted(acts, key=order)]
    return " and ".join(parts)


def _value_bank(ont: Ontology, per_slot: int) -> dict[tuple[str, str], list[str]]:
    bank = {}
    for di, d in enumerate(ont.layers[0]):
        for si, s in enumerate(ont.layers[2]):
            bank[(d, s)] = [f"val{di}x{si}n{k}" for k in range(per_slot)]
    return bank


def _holdout_supports(h: ActTriplet, ont: Ontology, holdout: set) -> list[ActTriplet]:
    """Three frequent triplets covering a holdout act's pairwise components.

    (d, a, s_alt) exercises domain+action, (d_alt, a, s) action+slot, and
    (d, a_ph, s) domain+slot with a placeholder-emitting action so the
    held-out placeholder token itself is trained.
    """
    domains, actions, slots = ont.layers
    n_pat = len(_PATTERNS_WITH_SLOT)
    s_alt = next((s for s in slots if s not in (h.slot, NO_SLOT)
                  and ActTriplet(h.domain, h.action, s) not in holdout), None)
    d_alt = next((d for d in domains if d != h.domain
                  and ActTriplet(d, h.action, h.slot) not in holdout), None)
    ph_actions = [a for a in actions
                  if ont.label_index(1, a) % n_pat in _PLACEHOLDER_PATTERNS]
    a_ph = next((a for a in ph_actions if a != h.action
                 and ActTriplet(h.domain, a, h.slot) not in holdout), None)
    if s_alt is None or d_alt is None or a_ph is None:
        raise CorpusError(f"ontology too small to support holdout act {h}")
    return [ActTriplet(h.domain, h.action, s_alt),
            ActTriplet(d_alt, h.action, h.slot),
            ActTriplet(h.domain, a_ph, h.slot)]


def generate_synthetic(spec: SyntheticSpec) -> SyntheticCorpora:
    """Build train/dev/test corpora of deterministic template dialogs.

    Holdout triplets never occur in train; the test split carries one
    dedicated single-act dialog per holdout triplet alongside its
    ordinary sampled dialogs.
    """
    ont = spec.ontology
    rng = np.random.default_rng(spec.seed)
    domains, actions, slots = ont.layers

    # Candidate triplet pool with zipf weights by pool position. Holdout
    # triplets are forced in, and each holdout component (domain, action,
    # slot, and its placeholder) gets high-frequency support triplets at
    # the head of the pool so held-out combinations stay compositional.
    all_triplets = [
        ActTriplet(d, a, s) for d in domains for a in actions for s in slots
    ]
    for h in spec.holdout:
        if h not in all_triplets:
            raise CorpusError(f"holdout act {h} is not expressible in the ontology")
    holdout = set(spec.holdout)
    pool: list[ActTriplet] = []

    def push(t: ActTriplet) -> None:
        if t not in pool:
            pool.append(t)

    for h in spec.holdout:
        for support in _holdout_supports(h, ont, holdout):
            push(support)
    n_support = len(pool)
    for h in spec.holdout:
        push(h)
    pool_size = max(spec.pool_size, len(pool))
    for idx in rng.permutation(len(all_triplets)):
        if len(pool) >= pool_size:
            break
        t = all_triplets[idx]
        if t not in holdout:
            push(t)
    weights = np.array([(r + 1.0) ** (-spec.zipf_alpha) for r in range(len(pool))])
    if n_support and spec.support_share > 0.0:
        # give the holdout-support block a fixed share of the sampling
        # mass so every held-out component stays many-shot
        weights[:n_support] = 0.0
        weights /= weights.sum()
        weights *= 1.0 - spec.support_share
        weights[:n_support] = spec.support_share / n_support
    weights /= weights.sum()

    train_ids = [i for i, t in enumerate(pool) if t not in holdout]
    train_w = weights[train_ids] / weights[train_ids].sum()
    value_bank = _value_bank(ont, spec.values_per_slot)

    def weighted_pick(ids) -> ActTriplet:
        ids = np.asarray(ids)
        w = weights[ids] / weights[ids].sum()
        return pool[int(rng.choice(ids, p=w))]

    def sample_acts(ids, w) -> list[ActTriplet]:
        first = pool[int(rng.choice(ids, p=w))]
        acts = [first]
        extra = int(rng.choice([0, 1, 2], p=[0.6, 0.3, 0.1]))
        extra = min(extra, spec.max_acts_per_turn - 1)
        same_domain = [i for i in ids if pool[i].domain == first.domain
                       and pool[i] != first]
        for _ in range(extra):
            if not same_domain:
                break
            pick = weighted_pick(same_domain)
            if pick not in acts:
                acts.append(pick)
        return acts

    def build_turn(acts: list[ActTriplet], history: list[tuple[str, str]]
                   ) -> DialogTurn:
        delex, phs = realize_acts(acts, ont)
        values = {}
        for ph in phs:
            d, s = ph[1:-1].split(".")
            values[ph] = str(rng.choice(value_bank[(d, s)]))
        lex = restore(delex, values)
        constrained = {(a.domain, a.slot) for a in acts if a.slot != NO_SLOT}
        counts = np.zeros(len(domains), dtype=int)
        for a in acts:
            counts[ont.label_index(0, a.domain)] = int(rng.integers(0, 6))
        side = make_side_conditions(ont, counts, constrained)
        return DialogTurn(
            history=list(history),
            belief=side.v_bf,
            kb=side.v_kb,
            gold_acts=list(acts),
            delex_response=delex,
            lex_response=lex,
            slot_values=values,
        )

    def utt(acts: list[ActTriplet]) -> str:
        if spec.history_mode == "constant":
            return "hello"
        return user_utterance(acts, ont)

    def build_dialog(ids, w, forced_acts: list[ActTriplet] | None = None
                     ) -> list[DialogTurn]:
        two_turns = forced_acts is None and rng.random() < spec.two_turn_fraction
        turns = []
        if two_turns:
            # request -> inform linkage so request success is non-vacuous
            n_pat = len(_PATTERNS_WITH_SLOT)
            request_idx = [i for i in ids
                           if ont.label_index(1, pool[i].action) % n_pat == 1
                           and pool[i].slot != NO_SLOT
                           and ActTriplet(pool[i].domain, actions[0],
                                          pool[i].slot) not in holdout]
            if request_idx:
                req = weighted_pick(request_idx)
                inform = ActTriplet(req.domain, actions[0], req.slot)
                hist1 = [("user", utt([req]))]
                t1 = build_turn([req], hist1)
                if spec.history_mode == "constant":
                    hist2 = [("user", utt([inform]))]
                else:
                    hist2 = hist1 + [("system", " ".join(t1.delex_response)),
                                     ("user", utt([inform]))]
                t2 = build_turn([inform], hist2)
                return [t1, t2]
        acts = forced_acts if forced_acts is not None else sample_acts(ids, w)
        hist = [("user", utt(acts))]
        turns.append(build_turn(acts, hist))
        return turns

    n_dev = int(round(spec.num_dialogs * spec.dev_fraction))
    n_test = int(round(spec.num_dialogs * spec.test_fraction))
    n_train = spec.num_dialogs - n_dev - n_test
    if n_train < 1:
        raise CorpusError("no dialogs left for the train split")

    def build_split(n_dialogs: int, ids, w, with_holdout: bool) -> Corpus:
        turns: list[DialogTurn] = []
        dialogs: list[list[int]] = []
        for _ in range(n_dialogs):
            dturns = build_dialog(ids, w)
            dialogs.append(list(range(len(turns), len(turns) + len(dturns))))
            turns.extend(dturns)
        if with_holdout:
            for h in spec.holdout:
                dturns = build_dialog(ids, w, forced_acts=[h])
                dialogs.append(list(range(len(turns), len(turns) + len(dturns))))
                turns.extend(dturns)
        return Corpus(turns=turns, dialogs=dialogs)

    all_ids = np.arange(len(pool))
    train = build_split(n_train, np.array(train_ids), train_w, with_holdout=False)
    dev = build_split(n_dev, np.array(train_ids), train_w, with_holdout=False)
    test = build_split(n_test, all_ids, weights, with_holdout=bool(spec.holdout))

    for turn in train.turns:
        for act in turn.gold_acts:
            if act in holdout:
                raise CorpusError(f"holdout act {act} leaked into the train split")
    return SyntheticCorpora(train=train, dev=dev, test=test, ontology=ont,
                            pool=pool, weights=weights)
