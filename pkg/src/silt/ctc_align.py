"""CTC Viterbi forced alignment and aggregation of token spans to word spans.

Alignment runs over the blank-extended label graph of a known reference
(blank, t1, blank, t2, ..., blank). The best path assigns each reference
token a contiguous frame span; frames emitted as blank belong to no token.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class FramePosteriors:
    """Per-frame log probabilities, column 0 = CTC blank.

    Rows must normalize to 1 in probability space within 1e-6.
    """

    log_probs: np.ndarray  # (T, V + 1)

    def __post_init__(self):
        lp = np.asarray(self.log_probs, dtype=np.float64)
        if lp.ndim != 2 or lp.shape[1] < 2:
            raise ValueError(f"log_probs must be (T, V+1) with V >= 1, got {lp.shape}")
        if np.any(np.isnan(lp)) or np.any(lp > 1e-6):
            raise ValueError("log_probs must be log probabilities (<= 0, no NaN)")
        row_sums = np.exp(lp).sum(axis=1)
        if np.any(np.abs(row_sums - 1.0) > 1e-6):
            raise ValueError("posterior rows must sum to 1 within 1e-6")
        self.log_probs = lp

    @property
    def n_frames(self) -> int:
        return self.log_probs.shape[0]

    @property
    def n_classes(self) -> int:
        return self.log_probs.shape[1]


@dataclass
class WordAlignment:
    """Per-word frame spans (a_i, b_i, w_i), sorted and non-overlapping."""

    spans: list[tuple[int, int, str]]

    def __post_init__(self):
        prev_end = -1
        for a, b, w in self.spans:
            if a < 0 or b < a:
                raise ValueError(f"invalid span ({a}, {b}, {w!r})")
            if a <= prev_end:
                raise ValueError(f"span ({a}, {b}, {w!r}) overlaps or precedes an earlier span")
            prev_end = b
        self.spans = [(int(a), int(b), str(w)) for a, b, w in self.spans]

    @property
    def words(self) -> list[str]:
        return [w for _, _, w in self.spans]

    def __len__(self) -> int:
        return len(self.spans)

    def to_json(self) -> list[list]:
        return [[a, b, w] for a, b, w in self.spans]

    @classmethod
    def from_json(cls, data: list) -> "WordAlignment":
        return cls([(int(a), int(b), str(w)) for a, b, w in data])


def min_ctc_path_length(reference: list[int]) -> int:
    """Shortest frame count that can emit the reference: |ref| plus one blank
    between each pair of repeated adjacent labels."""
    repeats = sum(1 for a, b in zip(reference, reference[1:]) if a == b)
    return len(reference) + repeats


def ctc_forced_align(
    posteriors: FramePosteriors, reference: list[int], blank_id: int = 0
) -> list[tuple[int, int, int]]:
    """Viterbi forced alignment; returns (token, start_frame, end_frame) per
    reference token, in reference order.

    Backtrace ties prefer staying in the current state, which is
    deterministic and pushes label transitions as late as possible.
    """
    if not reference:
        raise ValueError("reference is empty")
    lp = posteriors.log_probs
    T, n_classes = lp.shape
    for tok in reference:
        if not 0 <= tok < n_classes:
            raise ValueError(f"reference token {tok} outside posterior classes [0, {n_classes})")
        if tok == blank_id:
            raise ValueError("reference must not contain the blank id")
    if T < min_ctc_path_length(reference):
        raise ValueError(
            f"{T} frames cannot emit a reference needing >= {min_ctc_path_length(reference)}"
        )

    L = len(reference)
    n_states = 2 * L + 1  # even states blank, odd state 2i+1 -> reference[i]
    labels = np.empty(n_states, dtype=np.int64)
    labels[0::2] = blank_id
    labels[1::2] = reference

    neg_inf = -np.inf
    delta = np.full(n_states, neg_inf)
    delta[0] = lp[0, blank_id]
    delta[1] = lp[0, labels[1]]
    backptr = np.zeros((T, n_states), dtype=np.int64)

    # Skip transitions (s-2 -> s) are legal only into a non-blank state whose
    # label differs from the state two back.
    allow_skip = np.zeros(n_states, dtype=bool)
    allow_skip[2:] = (labels[2:] != blank_id) & (labels[2:] != labels[:-2])
    state_ids = np.arange(n_states)

    for t in range(1, T):
        stay = delta
        step = np.concatenate(([neg_inf], delta[:-1]))
        skip = np.concatenate(([neg_inf, neg_inf], delta[:-2]))
        skip = np.where(allow_skip, skip, neg_inf)
        # Candidates in tie-preference order: stay, advance 1, advance 2
        # (strict > so earlier candidates win ties).
        best = stay.copy()
        arg = state_ids.copy()
        m = step > best
        best[m] = step[m]
        arg[m] = state_ids[m] - 1
        m = skip > best
        best[m] = skip[m]
        arg[m] = state_ids[m] - 2
        delta = best + lp[t, labels]
        backptr[t] = arg

    end_state = 2 * L if delta[2 * L] >= delta[2 * L - 1] else 2 * L - 1
    if delta[end_state] == neg_inf:
        raise ValueError("no feasible CTC path (posteriors assign zero mass everywhere)")

    states = np.empty(T, dtype=np.int64)
    states[T - 1] = end_state
    for t in range(T - 1, 0, -1):
        states[t - 1] = backptr[t, states[t]]

    spans: list[tuple[int, int, int]] = []
    for i in range(L):
        frames = np.nonzero(states == 2 * i + 1)[0]
        if frames.size == 0:
            raise ValueError("best path skipped a reference token (should be impossible)")
        spans.append((int(reference[i]), int(frames[0]), int(frames[-1])))
    return spans


def path_log_prob(
    posteriors: FramePosteriors, spans: list[tuple[int, int, int]], blank_id: int = 0
) -> float:
    """Log probability of the unique frame labeling implied by token spans
    (every frame outside a span is blank)."""
    lp = posteriors.log_probs
    labels = np.full(posteriors.n_frames, blank_id, dtype=np.int64)
    for tok, a, b in spans:
        labels[a : b + 1] = tok
    return float(lp[np.arange(posteriors.n_frames), labels].sum())


def tokens_to_word_spans(
    token_spans: list[tuple[int, int, int]],
    word_token_counts: list[int],
    words: list[str],
) -> WordAlignment:
    """Aggregate per-token spans to word level: word i covers from its first
    token's start to its last token's end."""
    if len(word_token_counts) != len(words):
        raise ValueError("word_token_counts and words must have equal length")
    if any(c < 1 for c in word_token_counts):
        raise ValueError("every word must own at least one token")
    if sum(word_token_counts) != len(token_spans):
        raise ValueError(
            f"token span count {len(token_spans)} does not match "
            f"sum of word token counts {sum(word_token_counts)}"
        )
    spans = []
    pos = 0
    for count, word in zip(word_token_counts, words):
        group = token_spans[pos : pos + count]
        spans.append((group[0][1], group[-1][2], word))
        pos += count
    return WordAlignment(spans)
