"""Command-line pipeline: corpus generation, tokenizer and codebook training,
forced alignment, dataset assembly, training, evaluation, analysis.

Every command is deterministic given its inputs and --seed (byte-identical
outputs on rerun) and embeds {tool_version, config_hash, seed} in each
artifact it writes. Errors exit nonzero with a single `error: ...` line on
stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .artifacts import derived_rng, make_header, read_jsonl, write_json, write_jsonl
from .corpus import CorpusConfig, ctc_reference, gen_corpus, make_posteriors
from .cot import build_training_example
from .ctc_align import WordAlignment, ctc_forced_align, tokens_to_word_spans
from .evaluation import evaluate_s2st, length_ratio_stats, segment_similarity
from .interleave import InterleaveConfig, interleave
from .model import ModelConfig
from .quantizer import Codebook, UnitSequence, kmeans_fit, quantize
from .training import (
    TrainConfig,
    load_checkpoint,
    train,
)
from .vocab import BpeModel, JointVocab, build_joint_vocab, train_bpe

SPLITS = ("train", "dev", "test")


def _read_split(data_dir: str, name: str):
    path = Path(data_dir) / f"{name}.jsonl"
    if not path.exists():
        raise FileNotFoundError(f"missing dataset file {path}")
    return read_jsonl(str(path))


# --- commands ---


def cmd_gen(args) -> int:
    cfg = CorpusConfig(
        min_len=args.min_len,
        max_len=args.max_len,
        expansion_r=args.expansion_r,
        jitter=args.jitter,
        n_units=args.n_units,
    )
    paths = gen_corpus(args.n, args.seed, args.out, cfg)
    print(f"wrote {', '.join(paths[s] for s in SPLITS)}")
    return 0


def cmd_train_bpe(args) -> int:
    _, records = read_jsonl(args.data)
    corpus = [r["src_text"] for r in records] + [r["tgt_text"] for r in records]
    bpe = train_bpe(corpus, args.size)
    bpe.save(args.out, seed=args.seed)
    print(f"wrote {args.out} ({bpe.vocab_size} tokens)")
    return 0


def _unit_features(units, anchors: np.ndarray, seed: int, rec_id: int, side: str) -> np.ndarray:
    noise = derived_rng(seed, "feat", rec_id, side).normal(
        0.0, 0.5, size=(len(units), anchors.shape[1])
    )
    return anchors[np.asarray(units, dtype=np.int64)] + noise


def cmd_fit_kmeans(args) -> int:
    """Fit a codebook on synthetic frame features and requantize the dataset.

    Each distinct raw unit gets a well-separated anchor vector; frames are
    anchor plus noise. Downstream stages then consume genuinely quantized
    units (a consistent relabeling of the raw ones).
    """
    header, train_records = _read_split(args.data, "train")
    n_raw = 1
    for name in SPLITS:
        _, recs = _read_split(args.data, name)
        for r in recs:
            for side in ("src", "tgt"):
                if r[f"{side}_units"]:
                    n_raw = max(n_raw, 1 + max(r[f"{side}_units"]))
    anchors = derived_rng(args.seed, "anchor").normal(0.0, 1.0, size=(n_raw, args.dim)) * 10.0

    feats = []
    total = 0
    for r in train_records:
        for side in ("src", "tgt"):
            f = _unit_features(r[f"{side}_units"], anchors, args.seed, r["id"], side)
            feats.append(f)
            total += len(f)
        if total >= args.max_fit_frames:
            break
    features = np.concatenate(feats, axis=0)[: args.max_fit_frames]
    codebook = kmeans_fit(features, args.k, seed=args.seed)
    codebook.save(str(Path(args.out) / "codebook.json"), seed=args.seed)

    bpe = BpeModel.load(args.bpe)
    vocab = build_joint_vocab(bpe.vocab_size, args.k)
    vocab.save(str(Path(args.out) / "vocab.json"), seed=args.seed)

    out_header = make_header(args.seed, {"stage": "fit-kmeans", "k": args.k, "dim": args.dim})
    out_header["upstream"] = header
    for name in SPLITS:
        _, records = _read_split(args.data, name)
        for r in records:
            for side in ("src", "tgt"):
                f = _unit_features(r[f"{side}_units"], anchors, args.seed, r["id"], side)
                r[f"{side}_units"] = quantize(codebook, f).units
        write_jsonl(str(Path(args.out) / f"{name}.jsonl"), out_header, records)
    print(f"wrote codebook.json, vocab.json and requantized splits to {args.out}")
    return 0


def _realign_record(rec: dict, side: str, sharpness: float, bpe: BpeModel) -> None:
    units = UnitSequence(units=list(rec[f"{side}_units"]))
    gold = WordAlignment.from_json(rec[f"{side}_align"])
    posteriors = make_posteriors(units, gold, sharpness, bpe)
    ref, counts = ctc_reference(gold.words, bpe)
    token_spans = ctc_forced_align(posteriors, ref)
    recovered = tokens_to_word_spans(token_spans, counts, gold.words)
    rec[f"{side}_align"] = recovered.to_json()


def cmd_align(args) -> int:
    bpe = BpeModel.load(args.bpe)
    out_header = make_header(args.seed, {"stage": "align", "sharpness": args.sharpness})
    for name in SPLITS:
        header, records = _read_split(args.data, name)
        for rec in records:
            _realign_record(rec, "src", args.sharpness, bpe)
            _realign_record(rec, "tgt", args.sharpness, bpe)
        hdr = dict(out_header)
        hdr["upstream"] = header
        write_jsonl(str(Path(args.out) / f"{name}.jsonl"), hdr, records)
    print(f"wrote realigned splits to {args.out}")
    return 0


def cmd_make_dataset(args) -> int:
    bpe = BpeModel.load(args.bpe)
    vocab = JointVocab.load(args.vocab)
    _, records = read_jsonl(args.data)
    p_src = args.p if args.side in ("both", "input") else 0.0
    p_tgt = args.p if args.side in ("both", "output") else 0.0
    out_records = []
    for rec in records:
        parts = {}
        for side, p_side, tag in (("src", p_src, 0), ("tgt", p_tgt, 1)):
            parts[side] = interleave(
                UnitSequence(units=list(rec[f"{side}_units"])),
                WordAlignment.from_json(rec[f"{side}_align"]),
                InterleaveConfig(p=p_side, lam=args.lam, mode=args.mode),
                vocab,
                bpe,
                derived_rng(args.seed, "mkds", rec["id"], tag),
            )
        ex = build_training_example(
            parts["src"].tokens,
            bpe.encode(rec["src_text"]),
            bpe.encode(rec["tgt_text"]),
            parts["tgt"].tokens,
            "cot",
            vocab,
        )
        out_records.append(
            {
                "id": rec["id"],
                "tokens": ex.tokens,
                "mask": ex.loss_mask,
                "segments": {k: list(v) for k, v in ex.segments.items()},
            }
        )
    header = make_header(
        args.seed,
        {"stage": "make-dataset", "p": args.p, "lam": args.lam, "mode": args.mode, "side": args.side},
    )
    write_jsonl(args.out, header, out_records)
    print(f"wrote {args.out} ({len(out_records)} examples)")
    return 0


def cmd_train(args) -> int:
    bpe = BpeModel.load(args.bpe)
    vocab = JointVocab.load(args.vocab)
    _, records = read_jsonl(args.data)
    model_cfg = ModelConfig(
        vocab_size=vocab.total,
        n_layers=args.n_layers,
        d_model=args.d_model,
        n_heads=args.n_heads,
        d_ff=args.d_ff,
        max_seq_len=args.max_seq_len,
        dropout_rate=args.dropout,
        seed=args.seed,
    )
    train_cfg = TrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch_size,
        total_steps=args.steps,
        schedule_kind=args.schedule,
        seed=args.seed,
        p0=args.p0,
        delta=args.delta,
        interval=args.interval,
        lam=args.lam,
        mode=args.mode,
        side=args.side,
        checkpoint_every=args.checkpoint_every,
    )
    result = train(records, model_cfg, train_cfg, vocab, bpe, out_dir=args.out)
    final_loss = result.metrics[-1]["loss"] if result.metrics else float("nan")
    print(
        f"trained {train_cfg.total_steps} steps, final loss {final_loss:.4f}, "
        f"skipped {result.n_skipped} overlength examples, wrote {args.out}"
    )
    return 0


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    bpe = BpeModel.load(args.bpe)
    vocab = JointVocab.load(args.vocab)
    _, records = read_jsonl(args.data)
    report = evaluate_s2st(ckpt, records, vocab, bpe, max_len=args.max_len)
    payload = {"header": make_header(args.seed, {"stage": "eval"}), **report.to_dict()}
    write_json(args.out, payload)
    print(f"unit_bleu {report.unit_bleu:.4f}, malformed {report.malformed_rate:.2f}, wrote {args.out}")
    return 0


def cmd_analyze(args) -> int:
    bpe = BpeModel.load(args.bpe)
    vocab = JointVocab.load(args.vocab)
    _, records = read_jsonl(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header_line = "# " + json.dumps(make_header(args.seed, {"stage": "analyze"}), sort_keys=True)

    p_values = [float(x) for x in args.p_values.split(",")]
    table = length_ratio_stats(
        records, p_values, InterleaveConfig(p=0.0, lam=args.lam, rng_seed=args.seed), bpe, vocab
    )
    lines = [header_line, "p,src,tgt"]
    for p in p_values:
        lines.append(f"{p!r},{table[p]['src']!r},{table[p]['tgt']!r}")
    (out / "length_table.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    lines = [header_line, "ckpt,step,src_s_t,src_tgt_t,tgt_t_s,n_examples,n_excluded"]
    subset = records[: args.max_examples]
    for ckpt_path in args.ckpt:
        ckpt = load_checkpoint(ckpt_path)
        examples = []
        for rec in subset:
            examples.append(
                build_training_example(
                    vocab.units_to_ids(rec["src_units"]),
                    bpe.encode(rec["src_text"]),
                    bpe.encode(rec["tgt_text"]),
                    vocab.units_to_ids(rec["tgt_units"]),
                    "cot",
                    vocab,
                )
            )
        examples = [ex for ex in examples if len(ex.tokens) <= ckpt.model_cfg.max_seq_len]
        if not examples:
            raise ValueError("all analysis examples exceed the model's max sequence length")
        sim = segment_similarity(ckpt, examples)
        lines.append(
            f"{Path(ckpt_path).name},{ckpt.step},{sim.src_s_t!r},{sim.src_tgt_t!r},"
            f"{sim.tgt_t_s!r},{sim.n_examples},{sim.n_excluded}"
        )
    (out / "similarity.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {out / 'length_table.csv'} and {out / 'similarity.csv'}")
    return 0


# --- argument parsing ---


def _add_interleave_flags(p, with_p: bool):
    if with_p:
        p.add_argument("--p", type=float, default=0.0, help="text ratio in [0, 1]")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0, help="Poisson span mean")
    p.add_argument(
        "--mode",
        choices=("text", "mask", "text_equal_interval"),
        default="text",
        help="span replacement mode",
    )
    p.add_argument(
        "--side",
        choices=("both", "input", "output"),
        default="both",
        help="which ends receive interleaving",
    )


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="silt",
        description="Scheduled interleaved speech-text training pipeline for toy speech-to-speech translation.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a toy parallel corpus")
    p.add_argument("--n", type=int, required=True, help="number of pairs")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--min-len", type=int, default=2)
    p.add_argument("--max-len", type=int, default=6)
    p.add_argument("--expansion-r", type=int, default=10)
    p.add_argument("--jitter", type=int, default=2)
    p.add_argument("--n-units", type=int, default=64)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train-bpe", help="learn a byte-level BPE tokenizer")
    p.add_argument("--data", required=True, help="train.jsonl")
    p.add_argument("--size", type=int, default=320, help="target vocab size")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="bpe.json")
    p.set_defaults(func=cmd_train_bpe)

    p = sub.add_parser("fit-kmeans", help="fit the unit codebook and requantize the corpus")
    p.add_argument("--data", required=True, help="directory with train/dev/test.jsonl")
    p.add_argument("--bpe", required=True)
    p.add_argument("--k", type=int, default=64)
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--max-fit-frames", type=int, default=20000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_fit_kmeans)

    p = sub.add_parser("align", help="CTC forced alignment of text to units")
    p.add_argument("--data", required=True, help="directory with train/dev/test.jsonl")
    p.add_argument("--bpe", required=True)
    p.add_argument("--sharpness", type=float, default=0.9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("make-dataset", help="assemble interleaved examples at a fixed p")
    p.add_argument("--data", required=True, help="aligned jsonl file")
    p.add_argument("--bpe", required=True)
    p.add_argument("--vocab", required=True)
    _add_interleave_flags(p, with_p=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output jsonl")
    p.set_defaults(func=cmd_make_dataset)

    p = sub.add_parser("train", help="train the model with scheduled interleaving")
    p.add_argument("--data", required=True, help="aligned train.jsonl")
    p.add_argument("--bpe", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--schedule", choices=("scheduled", "constant", "none"), default="scheduled")
    p.add_argument("--p0", type=float, default=0.9)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--interval", type=int, default=300)
    _add_interleave_flags(p, with_p=False)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--lr", type=float, default=3e-4)
    p.add_argument("--n-layers", type=int, default=2)
    p.add_argument("--d-model", type=int, default=64)
    p.add_argument("--n-heads", type=int, default=4)
    p.add_argument("--d-ff", type=int, default=256)
    p.add_argument("--max-seq-len", type=int, default=256)
    p.add_argument("--dropout", type=float, default=0.2)
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a test split")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True, help="test.jsonl")
    p.add_argument("--bpe", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--max-len", type=int, default=512)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="report.json")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("analyze", help="length-ratio and segment-similarity tables")
    p.add_argument("--ckpt", nargs="+", required=True, help="checkpoint file(s)")
    p.add_argument("--data", required=True, help="jsonl with units and alignments")
    p.add_argument("--bpe", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--p-values", default="0.0,0.3,0.5,0.7,0.9")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--max-examples", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_analyze)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
