"""Command-line surface for the whole pipeline.

Subcommands: synth-data, train-predictor, train-generator, predict-acts,
generate, evaluate, bucket-analysis, demo-control, check-grads. Every
command is deterministic under a fixed seed. Exit codes: 0 success,
1 usage, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import numerics as nm
from .act_graph import (ActGraphError, ActInventory, ActTriplet, Ontology,
                        aggregate, canonical_ontology, decode_switch, encode_act)
from .act_predictor import (ActPredictor, multi_label_f1, prepare_predictor_examples,
                            side_dims, threshold_decode, train_predictor)
from .checkpoint import (CheckpointError, load_checkpoint, load_into_params,
                         params_to_arrays, save_checkpoint)
from .corpus import (CorpusError, SyntheticSpec, act_frequency_table,
                     generate_synthetic, load_corpus, save_corpus, synthetic_ontology)
from .decoder import (ResponseGenerator, prepare_generator_examples,
                      train_generator)
from .dsa import DsaLayerConfig, HdsaConfig
from .encoder import EncoderConfig, HistoryEncoder, join_history
from .metrics import MetricsError, evaluate
from .vocab import Vocabulary

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_DATA):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(EXIT_USAGE)


# ---------------------------------------------------------------------------
# model (re)construction
# ---------------------------------------------------------------------------

def _encoder_manifest(cfg: EncoderConfig) -> dict:
    return {"vocab_size": cfg.vocab_size, "layers": cfg.layers,
            "model_dim": cfg.model_dim, "heads": cfg.heads,
            "head_dim": cfg.head_dim, "ffn_dim": cfg.ffn_dim, "max_len": cfg.max_len}


def _encoder_from_manifest(m: dict, rng: np.random.Generator) -> HistoryEncoder:
    return HistoryEncoder(EncoderConfig(**m), rng)


def _hdsa_manifest(cfg: HdsaConfig) -> dict:
    return {"heads": list(cfg.head_counts),
            "qk_dims": [l.qk_dim for l in cfg.layers],
            "model_dim": cfg.model_dim,
            "value_dim": cfg.layers[0].value_dim,
            "ffn_dim": cfg.layers[0].ffn_dim,
            "residual": cfg.residual}


def _hdsa_from_manifest(m: dict) -> HdsaConfig:
    return HdsaConfig(
        layers=tuple(
            DsaLayerConfig(heads=h, model_dim=m["model_dim"], qk_dim=qk,
                           value_dim=m["value_dim"], ffn_dim=m["ffn_dim"])
            for h, qk in zip(m["heads"], m["qk_dims"])
        ),
        residual=m["residual"],
    )


def _load_data_dir(data_dir: str, splits=("train",)):
    d = Path(data_dir)
    try:
        ont = Ontology.load(d / "ontology.txt")
        vocabulary = Vocabulary.load(d / "vocab.txt")
        corpora = {s: load_corpus(d / f"{s}.jsonl", ont) for s in splits}
    except FileNotFoundError as exc:
        raise CliError(f"missing data file: {exc}")
    return ont, vocabulary, corpora


def _load_predictor_bundle(path: str):
    arrays, manifest = load_checkpoint(path)
    if manifest.get("kind") != "predictor":
        raise CliError(f"{path} is not a predictor checkpoint")
    rng = np.random.default_rng(0)
    encoder = _encoder_from_manifest(manifest["encoder"], rng)
    predictor = ActPredictor(
        model_dim=manifest["encoder"]["model_dim"],
        side_dim=sum(manifest["side_dims"]),
        num_nodes=manifest["num_nodes"],
        rng=rng,
    )
    load_into_params(encoder.parameters() + predictor.parameters(), arrays)
    return encoder, predictor, manifest


def _load_generator_bundle(path: str):
    arrays, manifest = load_checkpoint(path)
    if manifest.get("kind") != "generator":
        raise CliError(f"{path} is not a generator checkpoint")
    rng = np.random.default_rng(0)
    encoder = _encoder_from_manifest(manifest["encoder"], rng)
    generator = ResponseGenerator(
        _hdsa_from_manifest(manifest["hdsa"]),
        vocab_size=manifest["vocab_size"],
        rng=rng,
        max_len=manifest["max_len"],
        conditioning="graph" if manifest["conditioning"] == "graph" else "flat",
        flat_dim=manifest.get("flat_dim"),
    )
    load_into_params(encoder.parameters() + generator.parameters(), arrays)
    return encoder, generator, manifest


def _gold_switch(turn, ont):
    return aggregate([encode_act(a, ont) for a in turn.gold_acts], ont)


def _turn_condition(turn, ont, manifest, inventory):
    if manifest["conditioning"] == "graph":
        return _gold_switch(turn, ont)
    if manifest["conditioning"] == "graph-bias":
        return _gold_switch(turn, ont).bits.astype(float)
    from .act_graph import flatten_tree_encoding
    return flatten_tree_encoding(turn.gold_acts, inventory)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_synth_data(args) -> int:
    if args.ontology == "canonical":
        ont = canonical_ontology()
    else:
        try:
            sizes = tuple(int(x) for x in args.ontology.split(","))
        except ValueError:
            raise CliError(f"bad ontology spec {args.ontology!r}", EXIT_USAGE)
        if len(sizes) != 3:
            raise CliError("ontology sizes must be three comma-separated ints", EXIT_USAGE)
        ont = synthetic_ontology(sizes)
    holdout = tuple(ActTriplet.parse(a) for a in args.holdout.split(",")) \
        if args.holdout else ()
    spec = SyntheticSpec(ontology=ont, num_dialogs=args.dialogs,
                         pool_size=args.pool, holdout=holdout, seed=args.seed,
                         zipf_alpha=args.zipf_alpha)
    data = generate_synthetic(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ont.save(out / "ontology.txt")
    for split in ("train", "dev", "test"):
        save_corpus(getattr(data, split), out / f"{split}.jsonl")
    vocabulary = Vocabulary.build(
        [t.delex_response for t in data.train.turns]
        + [join_history(t.history) for t in data.train.turns],
        max_size=args.vocab_size,
    )
    vocabulary.save(out / "vocab.txt")
    inventory = ActInventory(
        [a for t in data.train.turns for a in t.gold_acts])
    inventory.save(out / "inventory.txt")
    print(f"wrote {len(data.train)} train / {len(data.dev)} dev / "
          f"{len(data.test)} test turns to {out}")
    return EXIT_OK


def cmd_train_predictor(args) -> int:
    ont, vocabulary, corpora = _load_data_dir(args.data, splits=("train", "dev"))
    rng = np.random.default_rng(args.seed)
    enc_cfg = EncoderConfig(vocab_size=len(vocabulary), layers=args.enc_layers,
                            model_dim=args.dim, heads=4, head_dim=args.dim // 4,
                            ffn_dim=args.ffn, max_len=args.max_history)
    encoder = HistoryEncoder(enc_cfg, rng)
    kb_len, bf_len = side_dims(ont)
    predictor = ActPredictor(model_dim=args.dim, side_dim=kb_len + bf_len,
                             num_nodes=ont.total_nodes, rng=rng)
    params = encoder.parameters() + predictor.parameters()
    if args.init:
        arrays, _ = load_checkpoint(args.init)
        load_into_params(params, arrays)
    examples = prepare_predictor_examples(corpora["train"], vocabulary, ont)
    losses = train_predictor(encoder, predictor, examples, steps=args.steps,
                             batch_size=args.batch, lr=args.lr, seed=args.seed,
                             log_every=args.log_every)
    if losses and not np.isfinite(losses[-1]):
        raise CliError("training diverged (non-finite loss)", EXIT_NUMERIC)

    f1 = _predictor_f1(encoder, predictor, corpora["dev"], vocabulary, ont,
                       args.threshold)
    manifest = {"kind": "predictor", "encoder": _encoder_manifest(enc_cfg),
                "side_dims": [kb_len, bf_len], "num_nodes": ont.total_nodes,
                "ontology_sizes": list(ont.layer_sizes),
                "threshold": args.threshold, "lr": args.lr, "steps": args.steps}
    save_checkpoint(args.out, params_to_arrays(params), manifest)
    print(f"dev multi-label F1 @ T={args.threshold}: {f1:.4f}")
    print(f"saved predictor checkpoint to {args.out}")
    return EXIT_OK


def _predictor_f1(encoder, predictor, corpus, vocabulary, ont, threshold) -> float:
    examples = prepare_predictor_examples(corpus, vocabulary, ont)
    preds, golds = [], []
    with nm.no_grad():
        for ids, side, gold in examples:
            dist = predictor.predict_probs(encoder.encode_ids(ids).pooled, side)
            preds.append(threshold_decode(dist, threshold, ont.layer_sizes).bits)
            golds.append(gold.bits)
    return multi_label_f1(preds, golds)


def cmd_train_generator(args) -> int:
    ont, vocabulary, corpora = _load_data_dir(args.data, splits=("train",))
    rng = np.random.default_rng(args.seed)
    if args.predictor:
        encoder, _, _ = _load_predictor_bundle(args.predictor)
    else:
        enc_cfg = EncoderConfig(vocab_size=len(vocabulary), layers=args.enc_layers,
                                model_dim=args.dim, heads=4, head_dim=args.dim // 4,
                                ffn_dim=args.ffn, max_len=args.max_history)
        encoder = HistoryEncoder(enc_cfg, rng)

    if list(ont.layer_sizes) == [10, 7, 27] and args.dim == 64:
        hdsa_cfg = HdsaConfig.canonical(residual=args.residual)
    else:
        hdsa_cfg = HdsaConfig(
            layers=tuple(DsaLayerConfig(heads=h, model_dim=args.dim,
                                        value_dim=16, ffn_dim=args.ffn)
                         for h in ont.layer_sizes),
            residual=args.residual,
        )

    inventory = None
    flat_dim = None
    body_mode = "graph"
    if args.conditioning == "flat":
        inventory = ActInventory.load(Path(args.data) / "inventory.txt")
        flat_dim = inventory.size
        body_mode = "flat"
    elif args.conditioning == "graph-bias":
        flat_dim = ont.total_nodes
        body_mode = "flat"
    generator = ResponseGenerator(hdsa_cfg, vocab_size=len(vocabulary), rng=rng,
                                  max_len=args.max_len,
                                  conditioning=body_mode, flat_dim=flat_dim)
    if args.init:
        arrays, _ = load_checkpoint(args.init)
        load_into_params(generator.parameters(), arrays)
    examples = prepare_generator_examples(corpora["train"], vocabulary, ont,
                                          encoder, conditioning=args.conditioning,
                                          inventory=inventory)
    losses = train_generator(generator, examples, steps=args.steps,
                             batch_size=args.batch, lr=args.lr, seed=args.seed,
                             log_every=args.log_every)
    if losses and not np.isfinite(losses[-1]):
        raise CliError("training diverged (non-finite loss)", EXIT_NUMERIC)
    manifest = {"kind": "generator", "hdsa": _hdsa_manifest(hdsa_cfg),
                "vocab_size": len(vocabulary), "max_len": args.max_len,
                "conditioning": args.conditioning, "flat_dim": flat_dim,
                "beam": args.beam, "threshold": args.threshold,
                "encoder": _encoder_manifest(encoder.cfg),
                "ontology_sizes": list(ont.layer_sizes), "lr": args.lr,
                "steps": args.steps}
    save_checkpoint(args.out,
                    params_to_arrays(encoder.parameters() + generator.parameters()),
                    manifest)
    print(f"final train loss {losses[-1]:.4f}")
    print(f"saved generator checkpoint to {args.out}")
    return EXIT_OK


def cmd_predict_acts(args) -> int:
    ont, vocabulary, corpora = _load_data_dir(args.data, splits=(args.split,))
    encoder, predictor, _ = _load_predictor_bundle(args.predictor)
    corpus = corpora[args.split]
    preds, golds = [], []
    lines = []
    with nm.no_grad():
        for turn in corpus.turns:
            ids = vocabulary.encode(join_history(turn.history))
            dist = predictor.predict_probs(encoder.encode_ids(ids).pooled, turn.side())
            switch = threshold_decode(dist, args.threshold, ont.layer_sizes)
            preds.append(switch.bits)
            golds.append(_gold_switch(turn, ont).bits)
            lines.append(" ".join(str(a) for a in decode_switch(switch, ont)))
    f1 = multi_label_f1(preds, golds)
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    print(f"multi-label F1 @ T={args.threshold}: {f1:.4f}")
    return EXIT_OK


def cmd_generate(args) -> int:
    ont, vocabulary, corpora = _load_data_dir(args.data, splits=(args.split,))
    encoder, generator, manifest = _load_generator_bundle(args.generator)
    corpus = corpora[args.split]
    inventory = None
    if manifest["conditioning"] == "flat":
        inventory = ActInventory.load(Path(args.data) / "inventory.txt")

    use_predictor = not args.gold_acts
    if use_predictor:
        if not args.predictor:
            raise CliError("generate needs --predictor unless --gold-acts is set",
                           EXIT_USAGE)
        p_encoder, predictor, _ = _load_predictor_bundle(args.predictor)

    records = []
    with nm.no_grad():
        for turn in corpus.turns:
            ids = vocabulary.encode(join_history(turn.history))
            history = nm.Tensor(encoder.encode_ids(ids).tokens.data)
            if use_predictor:
                dist = predictor.predict_probs(
                    p_encoder.encode_ids(ids).pooled, turn.side())
                switch = threshold_decode(dist, args.threshold, ont.layer_sizes)
                if manifest["conditioning"] == "graph":
                    cond = switch
                elif manifest["conditioning"] == "graph-bias":
                    cond = switch.bits.astype(float)
                else:
                    cond = _flat_from_switch(switch, ont, inventory)
                acts = decode_switch(switch, ont)
            else:
                cond = _turn_condition(turn, ont, manifest, inventory)
                acts = list(turn.gold_acts)
            hyp = generator.beam_decode(history, cond, beam_size=args.beam,
                                        max_len=args.max_len)
            records.append({"tokens": vocabulary.decode(hyp.tokens),
                            "acts": [str(a) for a in acts]})
    out = Path(args.out)
    with open(out, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    print(f"wrote {len(records)} generations to {out}")
    return EXIT_OK


def _flat_from_switch(switch, ont, inventory):
    from .act_graph import flatten_tree_encoding
    return flatten_tree_encoding(decode_switch(switch, ont), inventory)


def _read_generations(path):
    gens = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                gens.append(json.loads(line)["tokens"])
    return gens


def cmd_evaluate(args) -> int:
    splits = (args.split, "train") if args.buckets else (args.split,)
    ont, vocabulary, corpora = _load_data_dir(args.data, splits=splits)
    corpus = corpora[args.split]
    candidates = _read_generations(args.generations)
    freq = act_frequency_table(corpora["train"]) if args.buckets else None
    report = evaluate(candidates, corpus, freq_table=freq)
    text = report.render_text()
    sys.stdout.write(text)
    if args.report:
        Path(args.report).write_text(text, encoding="utf-8")
    if args.table:
        Path(args.table).write_text(report.render_table(), encoding="utf-8")
    return EXIT_OK


def cmd_bucket_analysis(args) -> int:
    ont, vocabulary, corpora = _load_data_dir(args.data, splits=(args.split, "train"))
    corpus = corpora[args.split]
    candidates = _read_generations(args.generations)
    freq = act_frequency_table(corpora["train"])
    report = evaluate(candidates, corpus, freq_table=freq, skip_inform=True)
    lines = ["bucket\tbleu"]
    for name, value in report.buckets.items():
        lines.append(f"{name}\t{value:.4f}")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    return EXIT_OK


def cmd_demo_control(args) -> int:
    ont, vocabulary, corpora = _load_data_dir(args.data, splits=())
    encoder, generator, manifest = _load_generator_bundle(args.generator)
    if manifest["conditioning"] != "graph":
        raise CliError("demo-control needs a graph-conditioned generator")
    try:
        acts = [ActTriplet.parse(a) for a in args.acts.split(",")]
        switch = aggregate([encode_act(a, ont) for a in acts], ont)
    except ActGraphError as exc:
        raise CliError(str(exc))
    history_turns = [("user", args.history)] if args.history else \
        [("user", "hello")]
    with nm.no_grad():
        ids = vocabulary.encode(join_history(history_turns))
        history = nm.Tensor(encoder.encode_ids(ids).tokens.data)
    hyp = generator.beam_decode(history, switch, beam_size=args.beam,
                                max_len=args.max_len)
    print("switch:", switch)
    print("acts decoded:", ", ".join(str(a) for a in decode_switch(switch, ont)) or "(none)")
    print("response:", " ".join(vocabulary.decode(hyp.tokens)))
    return EXIT_OK


def cmd_check_grads(args) -> int:
    report = _micro_model_gradcheck(seed=args.seed, h=args.h, tol=args.tol)
    print(report)
    if not report.passed:
        raise CliError("gradient check failed", EXIT_NUMERIC)
    return EXIT_OK


def _micro_model_gradcheck(seed: int = 0, h: float = 1e-5, tol: float = 1e-3,
                           max_coords: int = 12):
    """Gradient-check a 1-layer-encoder + 1-DSA-layer model end to end."""
    from .act_graph import SwitchVector
    from .act_predictor import bce_loss as predictor_bce
    from .numerics import check_gradients

    rng = np.random.default_rng(seed)
    enc_cfg = EncoderConfig(vocab_size=19, layers=1, model_dim=16, heads=2,
                            head_dim=8, ffn_dim=24, max_len=32)
    encoder = HistoryEncoder(enc_cfg, rng)
    from .act_predictor import ActPredictor as _Pred
    predictor = _Pred(model_dim=16, side_dim=6, num_nodes=4, rng=rng)
    hdsa_cfg = HdsaConfig(layers=(DsaLayerConfig(heads=4, model_dim=16, qk_dim=4,
                                                 value_dim=6, ffn_dim=24),))
    generator = ResponseGenerator(hdsa_cfg, vocab_size=19, rng=rng, max_len=16)

    history_ids = list(rng.integers(7, 19, size=9))
    response_ids = list(rng.integers(7, 19, size=6))
    side_vec = rng.integers(0, 2, size=6).astype(np.float64)
    gold_bits = SwitchVector(np.array([1, 0, 1, 0], dtype=np.int8), (4,))
    switch = SwitchVector(np.array([1, 0, 1, 1], dtype=np.int8), (4,))

    from .act_predictor import SideConditions
    side = SideConditions(v_kb=side_vec[:4], v_bf=side_vec[4:])

    def closure():
        enc = encoder.encode_ids(history_ids)
        dist = predictor.predict_probs(enc.pooled, side)
        loss_pred = predictor_bce(dist, gold_bits)
        history = enc.tokens
        loss_gen = generator.sequence_nll(response_ids, history, switch)
        return nm.add(loss_pred, loss_gen)

    params = encoder.parameters() + predictor.parameters() + generator.parameters()
    return check_gradients(closure, params, h=h, tol=tol,
                           max_coords_per_param=max_coords,
                           rng=np.random.default_rng(seed + 1))


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="actgen",
                     description="act-conditioned response generation pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="generate a synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--dialogs", type=int, default=400)
    p.add_argument("--pool", type=int, default=80)
    p.add_argument("--ontology", default="canonical",
                   help='"canonical" or three sizes like "4,3,6"')
    p.add_argument("--holdout", default="", help="comma-separated act triplets")
    p.add_argument("--vocab-size", type=int, default=3130)
    p.add_argument("--zipf-alpha", type=float, default=1.1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth_data)

    def common_train(p):
        p.add_argument("--data", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--init", help="resume from this checkpoint")
        p.add_argument("--steps", type=int, default=500)
        p.add_argument("--batch", type=int, default=8)
        p.add_argument("--lr", type=float, default=1e-3)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--dim", type=int, default=64)
        p.add_argument("--ffn", type=int, default=256)
        p.add_argument("--enc-layers", type=int, default=3)
        p.add_argument("--max-history", type=int, default=512)
        p.add_argument("--threshold", type=float, default=0.4)
        p.add_argument("--log-every", type=int, default=0)

    p = sub.add_parser("train-predictor", help="train the act predictor")
    common_train(p)
    p.set_defaults(func=cmd_train_predictor)

    p = sub.add_parser("train-generator", help="train the response generator")
    common_train(p)
    p.add_argument("--predictor", help="reuse this predictor's frozen encoder")
    p.add_argument("--conditioning", choices=("graph", "graph-bias", "flat"),
                   default="graph")
    p.add_argument("--residual", action="store_true",
                   help="enable the residual fallback mode")
    p.add_argument("--max-len", type=int, default=60)
    p.add_argument("--beam", type=int, default=2)
    p.set_defaults(func=cmd_train_generator)

    p = sub.add_parser("predict-acts", help="dump thresholded act predictions")
    p.add_argument("--data", required=True)
    p.add_argument("--predictor", required=True)
    p.add_argument("--split", default="dev")
    p.add_argument("--threshold", type=float, default=0.4)
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict_acts)

    p = sub.add_parser("generate", help="generate responses for a split")
    p.add_argument("--data", required=True)
    p.add_argument("--generator", required=True)
    p.add_argument("--predictor")
    p.add_argument("--split", default="test")
    p.add_argument("--gold-acts", action="store_true",
                   help="condition on gold acts instead of predictions")
    p.add_argument("--threshold", type=float, default=0.4)
    p.add_argument("--beam", type=int, default=2)
    p.add_argument("--max-len", type=int, default=60)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="score generations against references")
    p.add_argument("--data", required=True)
    p.add_argument("--generations", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--buckets", action="store_true",
                   help="include frequency-bucket BLEU (needs train split)")
    p.add_argument("--report", help="write the text report here")
    p.add_argument("--table", help="write the TSV table here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bucket-analysis", help="frequency-bucket BLEU only")
    p.add_argument("--data", required=True)
    p.add_argument("--generations", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--out")
    p.set_defaults(func=cmd_bucket_analysis)

    p = sub.add_parser("demo-control", help="generate from hand-picked acts")
    p.add_argument("--data", required=True)
    p.add_argument("--generator", required=True)
    p.add_argument("--acts", required=True,
                   help='comma-separated triplets like "hotel-inform-name"')
    p.add_argument("--history", default="")
    p.add_argument("--beam", type=int, default=2)
    p.add_argument("--max-len", type=int, default=60)
    p.set_defaults(func=cmd_demo_control)

    p = sub.add_parser("check-grads", help="finite-difference gradient oracle")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-3)
    p.set_defaults(func=cmd_check_grads)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (CorpusError, CheckpointError, ActGraphError, MetricsError,
            FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except nm.NumericsError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
