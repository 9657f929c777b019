"""Deterministic toy parallel corpus with gold word-to-frame alignments.

The "translation" is a per-word dictionary map (lowercase to uppercase by
default) plus word-order reversal, so it is nontrivial to copy yet exactly
invertible. Each word expands into a jittered number of units drawn from a
word-specific base pattern, giving a controllable speech/text length gap.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .artifacts import derived_rng, index_hash, make_header, write_jsonl
from .ctc_align import FramePosteriors, WordAlignment
from .quantizer import UnitSequence
from .vocab import BpeModel

DEFAULT_WORDS = (
    "time", "year", "way", "day", "man", "thing", "life", "hand",
    "part", "child", "eye", "woman", "place", "work", "week", "case",
    "point", "group", "number", "fact", "night", "home", "water", "room",
    "area", "money", "story", "month", "book", "word", "side", "house",
)


@dataclass
class ToyPair:
    src_text: str
    tgt_text: str
    src_units: UnitSequence | None = None
    tgt_units: UnitSequence | None = None
    src_align: WordAlignment | None = None
    tgt_align: WordAlignment | None = None
    src_posteriors: FramePosteriors | None = None


@dataclass(frozen=True)
class CorpusConfig:
    words: tuple[str, ...] = DEFAULT_WORDS
    min_len: int = 2
    max_len: int = 6
    expansion_r: int = 10
    jitter: int = 2
    n_units: int = 64


def default_word_map(words=DEFAULT_WORDS) -> dict[str, str]:
    return {w: w.upper() for w in words}


def translate_words(words: list[str], word_map: dict[str, str]) -> list[str]:
    """Toy translation: map each word through the dictionary, reverse order."""
    return [word_map[w] for w in reversed(words)]


def gen_toy_pair(
    rng: np.random.Generator, vocab_words, min_len: int, max_len: int
) -> ToyPair:
    if not vocab_words:
        raise ValueError("vocab_words must be non-empty")
    if not 1 <= min_len <= max_len:
        raise ValueError(f"need 1 <= min_len <= max_len, got {min_len}, {max_len}")
    n = int(rng.integers(min_len, max_len + 1))
    src = [vocab_words[int(rng.integers(0, len(vocab_words)))] for _ in range(n)]
    tgt = translate_words(src, default_word_map(vocab_words))
    return ToyPair(src_text=" ".join(src), tgt_text=" ".join(tgt))


def make_unit_map(words, n_units: int, pattern_len: int = 3) -> dict[str, list[int]]:
    """Fixed base unit pattern per word, derived from a hash of the word so it
    is stable across runs and processes."""
    if n_units < 1:
        raise ValueError("n_units must be >= 1")
    out = {}
    for w in words:
        digest = hashlib.sha256(w.encode("utf-8")).digest()
        out[w] = [
            int.from_bytes(digest[4 * i : 4 * i + 4], "big") % n_units
            for i in range(pattern_len)
        ]
    return out


def _stretch(pattern: list[int], length: int) -> list[int]:
    # nearest-neighbor upsampling of the base pattern to `length` units
    m = len(pattern)
    base, rem = divmod(length, m)
    out = []
    for i, u in enumerate(pattern):
        out.extend([u] * (base + (1 if i < rem else 0)))
    return out


def text_to_units(
    text: str,
    expansion_r: int,
    jitter: int,
    unit_map: dict[str, list[int]],
    rng: np.random.Generator,
) -> tuple[UnitSequence, WordAlignment]:
    """Expand each word into units from its base pattern; d_w per word is
    uniform on [expansion_r - jitter, expansion_r + jitter]."""
    if expansion_r < 1:
        raise ValueError(f"expansion_r must be >= 1, got {expansion_r}")
    if not 0 <= jitter < expansion_r:
        raise ValueError(f"need 0 <= jitter < expansion_r, got jitter={jitter}")
    units: list[int] = []
    spans = []
    for w in text.split():
        if w not in unit_map:
            raise ValueError(f"no unit pattern for word {w!r}")
        d = int(rng.integers(expansion_r - jitter, expansion_r + jitter + 1))
        start = len(units)
        units.extend(_stretch(unit_map[w], d))
        spans.append((start, len(units) - 1, w))
    return UnitSequence(units=units), WordAlignment(spans)


def ctc_reference(words: list[str], bpe: BpeModel) -> tuple[list[int], list[int]]:
    """CTC reference classes for a word sequence: BPE ids shifted by +1 so
    class 0 stays free for the blank. Also returns tokens per word."""
    ids, counts = bpe.encode_words(words)
    return [i + 1 for i in ids], counts


def make_posteriors(
    units: UnitSequence,
    align: WordAlignment,
    sharpness: float,
    bpe: BpeModel,
) -> FramePosteriors:
    """Synthetic frame posteriors over (blank + BPE vocab) that peak on the
    gold labeling.

    Each word's span is split evenly among its BPE pieces (the space-carrying
    encode_words tokenization), first token first, so the span's start frame
    carries the word's first token. Every frame puts
    `sharpness` on its gold class and spreads the rest uniformly. Where two
    equal tokens are frame-adjacent, the earlier one's last frame is relabeled
    blank so a valid CTC path through the reference exists.
    """
    if not 0.0 < sharpness <= 1.0:
        raise ValueError(f"sharpness must be in (0, 1], got {sharpness}")
    n_frames = len(units.units)
    n_classes = bpe.vocab_size + 1

    labels = np.zeros(n_frames, dtype=np.int64)  # 0 = blank
    segs = []  # (class, start, end) per token subsegment, in order
    # same tokenization as ctc_reference, or the reference's space-carrying
    # pieces would have no gold frames and Viterbi would shift word starts
    all_ids, counts = bpe.encode_words([w for _, _, w in align.spans])
    pos = 0
    for (a, b, w), count in zip(align.spans, counts):
        ids = all_ids[pos : pos + count]
        pos += count
        span_len = b - a + 1
        if span_len < len(ids):
            raise ValueError(f"word {w!r} has {span_len} frames for {len(ids)} tokens")
        base, rem = divmod(span_len, len(ids))
        start = a
        for i, tok in enumerate(ids):
            end = start + base + (1 if i < rem else 0) - 1
            segs.append((tok + 1, start, end))
            start = end + 1
    for i in range(1, len(segs)):
        c_prev, a_prev, b_prev = segs[i - 1]
        c_cur, a_cur, _ = segs[i]
        if c_prev == c_cur and b_prev + 1 == a_cur:
            if b_prev == a_prev:
                raise ValueError("cannot insert blank between repeated single-frame tokens")
            segs[i - 1] = (c_prev, a_prev, b_prev - 1)
    for c, a, b in segs:
        labels[a : b + 1] = c

    off = (1.0 - sharpness) / (n_classes - 1)
    probs = np.full((n_frames, n_classes), off, dtype=np.float64)
    probs[np.arange(n_frames), labels] = sharpness
    with np.errstate(divide="ignore"):
        return FramePosteriors(log_probs=np.log(probs))


def gen_corpus(n_pairs: int, seed: int, out_dir: str, cfg: CorpusConfig | None = None) -> dict[str, str]:
    """Write train/dev/test JSON-Lines splits (90/5/5 by index hash).

    Each pair is generated from its own index-derived RNG stream, so the
    output is independent of generation order.
    """
    if n_pairs < 1:
        raise ValueError(f"n_pairs must be >= 1, got {n_pairs}")
    cfg = cfg or CorpusConfig()
    all_words = list(cfg.words) + [w.upper() for w in cfg.words]
    unit_map = make_unit_map(all_words, cfg.n_units)

    splits: dict[str, list[dict]] = {"train": [], "dev": [], "test": []}
    for i in range(n_pairs):
        rng = derived_rng(seed, "pair", i)
        pair = gen_toy_pair(rng, list(cfg.words), cfg.min_len, cfg.max_len)
        src_units, src_align = text_to_units(
            pair.src_text, cfg.expansion_r, cfg.jitter, unit_map, rng
        )
        tgt_units, tgt_align = text_to_units(
            pair.tgt_text, cfg.expansion_r, cfg.jitter, unit_map, rng
        )
        record = {
            "id": i,
            "src_text": pair.src_text,
            "tgt_text": pair.tgt_text,
            "src_units": list(src_units.units),
            "tgt_units": list(tgt_units.units),
            "src_align": src_align.to_json(),
            "tgt_align": tgt_align.to_json(),
        }
        h = index_hash(i)
        name = "train" if h < 90 else "dev" if h < 95 else "test"
        splits[name].append(record)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    header = make_header(seed, {"n_pairs": n_pairs, **_cfg_dict(cfg)})
    paths = {}
    for name, records in splits.items():
        path = out / f"{name}.jsonl"
        write_jsonl(str(path), header, records)
        paths[name] = str(path)
    return paths


def _cfg_dict(cfg: CorpusConfig) -> dict:
    return {
        "words": list(cfg.words),
        "min_len": cfg.min_len,
        "max_len": cfg.max_len,
        "expansion_r": cfg.expansion_r,
        "jitter": cfg.jitter,
        "n_units": cfg.n_units,
    }
