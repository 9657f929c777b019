"""Translation metrics and representation-gap diagnostics.

Unit-level BLEU stands in for ASR-BLEU: hypotheses and references are unit id
sequences, scored with corpus BLEU (brevity penalty; add-one smoothing for
n >= 2 because toy sequences are short; unigram precision unsmoothed so an
empty or disjoint hypothesis still scores 0).
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .artifacts import derived_rng
from .cot import build_inference_prompt, split_generated
from .ctc_align import WordAlignment
from .interleave import InterleaveConfig, interleave
from .model import forward
from .quantizer import UnitSequence
from .training import Checkpoint, greedy_decode
from .vocab import BpeModel, JointVocab


def _ngrams(seq: list[int], n: int) -> Counter:
    return Counter(tuple(seq[i : i + n]) for i in range(len(seq) - n + 1))


def unit_bleu(hypotheses: list[list[int]], references: list[list[int]], max_n: int = 4) -> float:
    """Corpus BLEU over id sequences, in [0, 1]."""
    if len(hypotheses) != len(references):
        raise ValueError(
            f"{len(hypotheses)} hypotheses vs {len(references)} references"
        )
    if any(len(r) == 0 for r in references):
        raise ValueError("references must be non-empty")
    matches = [0] * max_n
    totals = [0] * max_n
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, max_n + 1):
            h = _ngrams(list(hyp), n)
            r = _ngrams(list(ref), n)
            matches[n - 1] += sum(min(c, r[g]) for g, c in h.items())
            totals[n - 1] += max(0, len(hyp) - n + 1)
    if hyp_len == 0:
        return 0.0

    log_prec = 0.0
    for n in range(1, max_n + 1):
        m, t = matches[n - 1], totals[n - 1]
        if n == 1:
            if m == 0:
                return 0.0
            pn = m / t
        else:
            pn = (m + 1) / (t + 1)
        log_prec += math.log(pn) / max_n
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return bp * math.exp(log_prec)


def length_ratio_stats(
    dataset: list[dict],
    p_values: list[float],
    cfg: InterleaveConfig,
    bpe: BpeModel,
    vocab: JointVocab,
) -> dict[float, dict[str, float]]:
    """Mean interleaved-length / BPE-text-length per p and side.

    At p=0 this is the raw speech/text length ratio; it decreases toward ~1
    as p grows and more of the unit sequence is text.
    """
    if not dataset:
        raise ValueError("dataset is empty")
    table: dict[float, dict[str, float]] = {}
    for pi, p in enumerate(p_values):
        side_means = {}
        for side, units_key, align_key, text_key in (
            ("src", "src_units", "src_align", "src_text"),
            ("tgt", "tgt_units", "tgt_align", "tgt_text"),
        ):
            ratios = []
            for rec in dataset:
                rng = derived_rng(cfg.rng_seed, "lenstat", rec["id"], side, pi)
                il = interleave(
                    UnitSequence(units=list(rec[units_key])),
                    WordAlignment.from_json(rec[align_key]),
                    InterleaveConfig(p=p, lam=cfg.lam, mode=cfg.mode, rng_seed=cfg.rng_seed),
                    vocab,
                    bpe,
                    rng,
                )
                n_text = len(bpe.encode(rec[text_key]))
                ratios.append(len(il.tokens) / n_text)
            side_means[side] = float(np.mean(ratios))
        table[p] = side_means
    return table


def _content_ranges(segments: dict[str, tuple[int, int]]) -> dict[str, tuple[int, int]]:
    # drop each segment's leading structural token (BOS or separator) and the
    # trailing EOS of i_tgt, leaving just the content tokens
    out = {}
    for name, (a, b) in segments.items():
        out[name] = (a + 1, b - 1 if name == "i_tgt" else b)
    return out


def _cosine(a: np.ndarray, b: np.ndarray) -> float | None:
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return None
    return float(np.dot(a, b) / (na * nb))


@dataclass
class SimilarityReport:
    src_s_t: float  # source speech vs source text
    src_tgt_t: float  # source text vs target text
    tgt_t_s: float  # target text vs target speech
    n_examples: int
    n_excluded: int

    def to_dict(self) -> dict:
        return {
            "src_s_t": self.src_s_t,
            "src_tgt_t": self.src_tgt_t,
            "tgt_t_s": self.tgt_t_s,
            "n_examples": self.n_examples,
            "n_excluded": self.n_excluded,
        }


def segment_similarity(ckpt: Checkpoint, examples, hidden_fn=None) -> SimilarityReport:
    """Cosine similarity between mean-pooled last-layer states of adjacent
    segments, averaged over examples.

    Examples must carry the four segment ranges. Pairs touching a zero-norm
    pooled vector are excluded from the mean and counted. hidden_fn is a test
    seam: tokens -> (T, d) states; defaults to the checkpoint's model.
    """
    if hidden_fn is None:
        def hidden_fn(tokens):
            _, hidden = forward(ckpt.params, tokens, ckpt.model_cfg)
            return hidden

    pair_defs = (
        ("src_s_t", "i_src", "t_src"),
        ("src_tgt_t", "t_src", "t_tgt"),
        ("tgt_t_s", "t_tgt", "i_tgt"),
    )
    sums = {name: [] for name, _, _ in pair_defs}
    n_excluded = 0
    n_examples = 0
    for ex in examples:
        if "t_src" not in ex.segments:
            raise ValueError("examples must contain the text segments (cot mode)")
        n_examples += 1
        h = hidden_fn(ex.tokens)
        ranges = _content_ranges(ex.segments)
        pooled = {name: np.asarray(h[a:b]).mean(axis=0) for name, (a, b) in ranges.items()}
        for name, left, right in pair_defs:
            c = _cosine(pooled[left], pooled[right])
            if c is None:
                n_excluded += 1
            else:
                sums[name].append(c)
    means = {
        name: (float(np.mean(vals)) if vals else float("nan"))
        for name, vals in sums.items()
    }
    return SimilarityReport(
        src_s_t=means["src_s_t"],
        src_tgt_t=means["src_tgt_t"],
        tgt_t_s=means["tgt_t_s"],
        n_examples=n_examples,
        n_excluded=n_excluded,
    )


@dataclass
class EvalReport:
    unit_bleu: float
    t_src_exact: float
    t_tgt_exact: float
    malformed_rate: float
    n_examples: int

    def __post_init__(self):
        for name in ("unit_bleu", "t_src_exact", "t_tgt_exact", "malformed_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")

    def to_dict(self) -> dict:
        return {
            "unit_bleu": self.unit_bleu,
            "t_src_exact": self.t_src_exact,
            "t_tgt_exact": self.t_tgt_exact,
            "malformed_rate": self.malformed_rate,
            "n_examples": self.n_examples,
        }


def _text_of(ids: list[int], vocab: JointVocab, bpe: BpeModel) -> str | None:
    # text segments must be pure text-modality ids to count as a match
    if any(vocab.modality_of(i) != "text" for i in ids):
        return None
    return bpe.decode(ids) if ids else ""


def evaluate_s2st(
    ckpt: Checkpoint,
    test_set: list[dict],
    vocab: JointVocab,
    bpe: BpeModel,
    max_len: int = 512,
    decode_fn=None,
) -> EvalReport:
    """Decode every test prompt, split the chain-of-thought stages, and score
    target units with BLEU plus exact match on the intermediate texts.

    decode_fn is a test seam: prompt token list -> full decoded token list;
    defaults to greedy decoding with the checkpoint's model.
    """
    if not test_set:
        raise ValueError("test set is empty")
    for key in ("src_units", "tgt_units", "src_text", "tgt_text"):
        if key not in test_set[0]:
            raise ValueError(f"test records missing field {key!r}")
    if decode_fn is None:
        def decode_fn(prompt):
            return greedy_decode(ckpt.params, prompt, max_len, vocab, ckpt.model_cfg)

    hyps, refs = [], []
    src_hits = 0
    tgt_hits = 0
    malformed = 0
    for rec in test_set:
        prompt = build_inference_prompt(vocab.units_to_ids(rec["src_units"]), "cot", vocab)
        parts = split_generated(decode_fn(prompt), vocab)
        if parts["malformed"]:
            malformed += 1
        hyp_units = [
            vocab.id_to_unit(t) for t in parts["s_tgt"] if vocab.modality_of(t) == "speech"
        ]
        hyps.append(hyp_units)
        refs.append(list(rec["tgt_units"]))
        if _text_of(parts["t_src"], vocab, bpe) == rec["src_text"]:
            src_hits += 1
        if _text_of(parts["t_tgt"], vocab, bpe) == rec["tgt_text"]:
            tgt_hits += 1

    n = len(test_set)
    return EvalReport(
        unit_bleu=unit_bleu(hyps, refs),
        t_src_exact=src_hits / n,
        t_tgt_exact=tgt_hits / n,
        malformed_rate=malformed / n,
        n_examples=n,
    )
