"""Word-level interleaving of speech units with text tokens.

Randomly chosen word spans of the unit sequence are replaced by the words'
BPE tokens until the replaced-word fraction reaches the text ratio p. The
last replacement may overshoot p, so the realized fraction is >= p for
p > 0 and exactly 0 at p = 0.

Ablation modes: "text" (normal replacement), "mask" (a single MASK token per
replaced span), and "text_equal_interval" (alignment ignored, words assumed
to sit at equal intervals).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .ctc_align import WordAlignment
from .quantizer import UnitSequence
from .vocab import BpeModel, JointVocab

MODES = ("text", "mask", "text_equal_interval")


@dataclass(frozen=True)
class InterleaveConfig:
    p: float = 0.0
    lam: float = 1.0  # Poisson mean for span length
    mode: str = "text"
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"text ratio p must be in [0, 1], got {self.p}")
        if self.lam < 0.0:
            raise ValueError(f"Poisson mean must be >= 0, got {self.lam}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")


@dataclass
class InterleavedSequence:
    """Mixed unit/text token sequence in the joint id space."""

    tokens: list[int]
    n_words: int
    replaced_spans: list[tuple[int, int]]  # word-index spans, in replacement order

    @property
    def n_replaced_words(self) -> int:
        return sum(e - s + 1 for s, e in self.replaced_spans)

    @property
    def realized_text_fraction(self) -> float:
        if self.n_words == 0:
            return 0.0
        return self.n_replaced_words / self.n_words


def sample_poisson(lam: float, rng: np.random.Generator) -> int:
    """Poisson sample via Knuth's inversion by multiplication."""
    if lam < 0.0:
        raise ValueError(f"Poisson mean must be >= 0, got {lam}")
    threshold = math.exp(-lam)
    k = 0
    prod = 1.0
    while True:
        k += 1
        prod *= rng.random()
        if prod <= threshold:
            return k - 1


def _equal_interval_spans(n_frames: int, words: list[str]) -> WordAlignment:
    n = len(words)
    step = n_frames // n
    if step < 1:
        raise ValueError(f"{n_frames} frames cannot be split over {n} words at equal intervals")
    spans = []
    for i, w in enumerate(words):
        a = i * step
        b = (i + 1) * step - 1 if i < n - 1 else n_frames - 1  # tail attaches to last word
        spans.append((a, b, w))
    return WordAlignment(spans)


def interleave(
    units: UnitSequence,
    align: WordAlignment,
    cfg: InterleaveConfig,
    vocab: JointVocab,
    bpe: BpeModel,
    rng: np.random.Generator,
) -> InterleavedSequence:
    """Replace random word spans of the unit sequence with text (or MASK).

    Loop: while the replaced-word count is strictly below p*N, pick a start
    word j uniformly from the not-yet-replaced set, draw a span length from
    Poisson(lam), clamp the span to the sequence end and truncate it at the
    first already-replaced word, then replace frames a_j..b_end with the BPE
    ids of the span's words joined by single spaces (or one MASK token).
    """
    n_frames = len(units.units)
    n_words = len(align)
    if n_words > 0:
        last_end = align.spans[-1][1]
        if last_end >= n_frames:
            raise ValueError(
                f"alignment span ends at frame {last_end} but only {n_frames} frames exist"
            )
    if cfg.mode == "text_equal_interval" and n_words > 0:
        align = _equal_interval_spans(n_frames, align.words)

    spans = align.spans
    available = list(range(n_words))
    in_pool = [True] * n_words
    replaced: list[tuple[int, int]] = []
    n_replaced = 0

    while n_replaced < cfg.p * n_words:
        j = available[int(rng.integers(0, len(available)))]
        length = sample_poisson(cfg.lam, rng)
        end = min(j + length, n_words - 1)
        e = j
        while e + 1 <= end and in_pool[e + 1]:
            e += 1
        replaced.append((j, e))
        for i in range(j, e + 1):
            in_pool[i] = False
        available = [i for i in available if not (j <= i <= e)]
        n_replaced += e - j + 1

    tokens: list[int] = []
    frame = 0
    for ws, we in sorted(replaced):
        a, b = spans[ws][0], spans[we][1]
        while frame < a:
            tokens.append(vocab.unit_to_id(units.units[frame]))
            frame += 1
        if cfg.mode == "mask":
            tokens.append(vocab.mask)
        else:
            tokens.extend(bpe.encode(" ".join(align.words[ws : we + 1])))
        frame = b + 1
    while frame < n_frames:
        tokens.append(vocab.unit_to_id(units.units[frame]))
        frame += 1

    return InterleavedSequence(tokens=tokens, n_words=n_words, replaced_spans=replaced)


def realized_text_fraction(result: InterleavedSequence) -> float:
    return result.realized_text_fraction


def schedule_text_ratio(step: int, p0: float = 0.9, delta: float = 0.1, interval: int = 300) -> float:
    """Stepwise-decaying text ratio: p0 minus delta per full interval, floored
    at 0. Computed with exact rational arithmetic so the decimal grid values
    come out exactly (0.9, 0.8, ..., 0.0)."""
    if step < 0:
        raise ValueError("step must be >= 0")
    if not 0.0 <= p0 <= 1.0:
        raise ValueError(f"p0 must be in [0, 1], got {p0}")
    if delta <= 0.0:
        raise ValueError(f"delta must be > 0, got {delta}")
    if interval < 1:
        raise ValueError(f"interval must be >= 1, got {interval}")
    p = Fraction(str(p0)) - Fraction(str(delta)) * (step // interval)
    return float(max(p, Fraction(0)))


def constant_text_ratio(step: int) -> float:
    """Fixed text ratio used by the unscheduled interleaving baseline."""
    return 0.3
