"""Evaluation: corpus BLEU, entity F1, inform/request rates, bucket analysis.

BLEU is corpus-level 4-gram with brevity penalty. Smoothing: a zero
higher-order clipped count is replaced by epsilon (0.1); zero unigram
overlap scores 0 outright; orders with no candidate n-grams at all are
dropped from the geometric mean. The smoothing method is stated in every
report header.

Inform rate and request success are stand-ins with documented matching
rules: a dialog is informed when its generated turns mention every goal
entity, and a request succeeds when every requested (domain, slot) pair
is answered by its placeholder somewhere in the dialog's generations.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

from .act_graph import NO_SLOT
from .corpus import Corpus, restore
from .vocab import tokenize

SMOOTHING_NOTE = ("corpus BLEU-4, brevity penalty, add-epsilon (0.1) smoothing on "
                  "zero higher-order n-gram counts; zero unigram overlap scores 0")

BUCKETS = (
    ("very_few(1-100)", 0, 100),
    ("few(100-500)", 100, 500),
    ("medium(500-2K)", 500, 2000),
    ("many(2K-5K)", 2000, 5000),
    ("very_many(5K+)", 5000, None),
)


class MetricsError(ValueError):
    pass


def _ngrams(tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidates, references, max_order: int = 4, smooth_eps: float = 0.1) -> float:
    """Corpus BLEU x 100 of token-list candidates against single references."""
    candidates = list(candidates)
    references = list(references)
    if not candidates:
        raise MetricsError("bleu: empty corpus")
    if len(candidates) != len(references):
        raise MetricsError(
            f"bleu: {len(candidates)} candidates vs {len(references)} references"
        )
    cand_len = sum(len(c) for c in candidates)
    ref_len = sum(len(r) for r in references)
    if cand_len == 0:
        return 0.0

    log_precisions = []
    for n in range(1, max_order + 1):
        clipped = 0
        total = 0
        for cand, ref in zip(candidates, references):
            cgrams = _ngrams(cand, n)
            rgrams = _ngrams(ref, n)
            total += sum(cgrams.values())
            clipped += sum(min(count, rgrams[g]) for g, count in cgrams.items())
        if total == 0:
            continue  # no candidate n-grams of this order anywhere
        if clipped == 0:
            if n == 1:
                return 0.0
            log_precisions.append(math.log(smooth_eps / total))
        else:
            log_precisions.append(math.log(clipped / total))
    if not log_precisions:
        return 0.0
    bp = 1.0 if cand_len > ref_len else math.exp(1.0 - ref_len / cand_len)
    return 100.0 * bp * math.exp(sum(log_precisions) / len(log_precisions))


# ---------------------------------------------------------------------------
# entities
# ---------------------------------------------------------------------------

def placeholder_entities(tokens) -> list[str]:
    """Entities of a delexicalized turn: its placeholder tokens."""
    return [t for t in tokens if t.startswith("<") and t.endswith(">")]


def lexicon_entities(tokens, lexicon: set) -> list[str]:
    """Entities of a restored turn: tokens found in the value lexicon."""
    return [t for t in tokens if t in lexicon]


def entity_f1(candidates, references, extractor=placeholder_entities) -> float:
    """Micro-averaged F1 (x 100) over per-turn entity multisets.

    If the references contain no entities at all the score is vacuously
    100 (documented degenerate rule).
    """
    if len(candidates) != len(references):
        raise MetricsError(
            f"entity_f1: {len(candidates)} candidates vs {len(references)} references"
        )
    tp = fp = fn = 0
    ref_total = 0
    for cand, ref in zip(candidates, references):
        cents = Counter(extractor(cand))
        rents = Counter(extractor(ref))
        ref_total += sum(rents.values())
        overlap = sum((cents & rents).values())
        tp += overlap
        fp += sum(cents.values()) - overlap
        fn += sum(rents.values()) - overlap
    if ref_total == 0:
        return 100.0
    denom = 2 * tp + fp + fn
    return 0.0 if denom == 0 else 200.0 * tp / denom


# ---------------------------------------------------------------------------
# dialog-level goals
# ---------------------------------------------------------------------------

@dataclass
class DialogGoal:
    """What a dialog's system side is supposed to deliver."""

    required_entities: list[str] = field(default_factory=list)
    requested_slots: list[tuple[str, str]] = field(default_factory=list)


def derive_goals(corpus: Corpus, request_action: str = "request") -> list[DialogGoal]:
    """Stand-in goals read off the references: every placeholder the
    references mention is required, and a (domain, slot) is a requested
    slot when a request act for it appears and the references answer it."""
    goals = []
    for turn_ids in corpus.dialogs:
        required: list[str] = []
        requested: list[tuple[str, str]] = []
        mentioned = set()
        for ti in turn_ids:
            for ph in placeholder_entities(corpus.turns[ti].delex_response):
                if ph not in mentioned:
                    mentioned.add(ph)
                    required.append(ph)
        for ti in turn_ids:
            for act in corpus.turns[ti].gold_acts:
                if act.action == request_action and act.slot != NO_SLOT:
                    ph = f"<{act.domain}.{act.slot}>"
                    if ph in mentioned and (act.domain, act.slot) not in requested:
                        requested.append((act.domain, act.slot))
        goals.append(DialogGoal(required_entities=required, requested_slots=requested))
    return goals


def inform_request(dialog_generations, goals) -> tuple[float, float]:
    """(inform %, request %) over dialogs.

    ``dialog_generations`` is a list per dialog of generated token lists.
    A dialog informs when all goal entities appear somewhere in its
    generations; a request succeeds when every requested slot's
    placeholder appears. Dialogs with empty goals count as satisfied.
    """
    if goals is None:
        raise MetricsError("inform_request: goals are required (skip the metric instead)")
    if len(dialog_generations) != len(goals):
        raise MetricsError(
            f"inform_request: {len(dialog_generations)} dialogs vs {len(goals)} goals"
        )
    if not goals:
        raise MetricsError("inform_request: empty corpus")
    informed = requested_ok = 0
    for gens, goal in zip(dialog_generations, goals):
        produced = set()
        for tokens in gens:
            produced.update(tokens)
        if all(e in produced for e in goal.required_entities):
            informed += 1
        if all(f"<{d}.{s}>" in produced for d, s in goal.requested_slots):
            requested_ok += 1
    n = len(goals)
    return 100.0 * informed / n, 100.0 * requested_ok / n


# ---------------------------------------------------------------------------
# frequency buckets
# ---------------------------------------------------------------------------

def bucket_of(count: int) -> str:
    for name, lo, hi in BUCKETS:
        if count >= lo and (hi is None or count < hi):
            return name
    return BUCKETS[0][0]


def bucket_bleu(candidates, references, turn_acts, freq_table) -> dict[str, float]:
    """BLEU per training-frequency bucket.

    A turn lands in the bucket of its rarest constituent act (an act
    absent from the table counts 0). Buckets with no turns are omitted.
    """
    if not (len(candidates) == len(references) == len(turn_acts)):
        raise MetricsError("bucket_bleu: per-turn inputs must align")
    grouped: dict[str, tuple[list, list]] = {}
    for cand, ref, acts in zip(candidates, references, turn_acts):
        counts = [freq_table.get(a, 0) for a in acts] or [0]
        name = bucket_of(min(counts))
        grouped.setdefault(name, ([], []))
        grouped[name][0].append(cand)
        grouped[name][1].append(ref)
    return {
        name: bleu(cands, refs)
        for name, (cands, refs) in grouped.items()
    }


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    bleu_delex: float
    bleu_restored: float | None = None
    inform: float | None = None
    request: float | None = None
    entity_f1: float | None = None
    buckets: dict[str, float] = field(default_factory=dict)
    notices: list[str] = field(default_factory=list)

    def render_text(self) -> str:
        lines = [f"# evaluation report ({SMOOTHING_NOTE})"]
        lines.append(f"bleu_delex            {self.bleu_delex:.4f}")
        for name, value in (("bleu_restored", self.bleu_restored),
                            ("inform", self.inform),
                            ("request", self.request),
                            ("entity_f1", self.entity_f1)):
            if value is not None:
                lines.append(f"{name:<21s} {value:.4f}")
        for bucket, _, _ in BUCKETS:
            if bucket in self.buckets:
                lines.append(f"bucket {bucket:<24s} {self.buckets[bucket]:.4f}")
        for notice in self.notices:
            lines.append(f"notice: {notice}")
        return "\n".join(lines) + "\n"

    def render_table(self) -> str:
        rows = [("metric", "value"), ("bleu_delex", f"{self.bleu_delex:.4f}")]
        for name, value in (("bleu_restored", self.bleu_restored),
                            ("inform", self.inform),
                            ("request", self.request),
                            ("entity_f1", self.entity_f1)):
            if value is not None:
                rows.append((name, f"{value:.4f}"))
        for bucket, _, _ in BUCKETS:
            if bucket in self.buckets:
                rows.append((f"bucket:{bucket}", f"{self.buckets[bucket]:.4f}"))
        return "\n".join("\t".join(r) for r in rows) + "\n"


def evaluate(candidates, corpus: Corpus, freq_table=None, goals=None,
             skip_inform: bool = False) -> EvalReport:
    """Score per-turn candidate token lists against a corpus's references."""
    if len(candidates) != len(corpus.turns):
        raise MetricsError(
            f"evaluate: {len(candidates)} candidates vs {len(corpus.turns)} turns"
        )
    refs_delex = [t.delex_response for t in corpus.turns]
    report = EvalReport(bleu_delex=bleu(candidates, refs_delex))
    report.entity_f1 = entity_f1(candidates, refs_delex)

    restored_cands = [tokenize(restore(c, t.slot_values))
                      for c, t in zip(candidates, corpus.turns)]
    refs_lex = [tokenize(t.lex_response) for t in corpus.turns]
    report.bleu_restored = bleu(restored_cands, refs_lex)

    if skip_inform:
        report.notices.append("inform/request skipped: no goals available")
    else:
        if goals is None:
            goals = derive_goals(corpus)
        gens = [[candidates[ti] for ti in turn_ids] for turn_ids in corpus.dialogs]
        report.inform, report.request = inform_request(gens, goals)

    if freq_table is not None:
        acts = [t.gold_acts for t in corpus.turns]
        report.buckets = bucket_bleu(candidates, refs_delex, acts, freq_table)
    return report
