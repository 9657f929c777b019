import numpy as np
import pytest

from silt.ctc_align import (
    FramePosteriors,
    WordAlignment,
    ctc_forced_align,
    min_ctc_path_length,
    path_log_prob,
    tokens_to_word_spans,
)

from oracles import brute_force_ctc


def uniform_posteriors(t: int, n_classes: int) -> FramePosteriors:
    return FramePosteriors(log_probs=np.full((t, n_classes), np.log(1.0 / n_classes)))


def sharp_posteriors(labels: list[int], n_classes: int, sharpness: float = 0.9) -> FramePosteriors:
    probs = np.full((len(labels), n_classes), (1 - sharpness) / (n_classes - 1))
    probs[np.arange(len(labels)), labels] = sharpness
    return FramePosteriors(log_probs=np.log(probs))


# --- validation ---


def test_posteriors_must_be_normalized():
    with pytest.raises(ValueError):
        FramePosteriors(log_probs=np.zeros((3, 2)))  # rows sum to 2


def test_posteriors_reject_positive_log_probs():
    lp = np.log(np.array([[0.5, 0.5], [1.5, 0.5]]))
    with pytest.raises(ValueError):
        FramePosteriors(log_probs=lp)


def test_word_alignment_rejects_overlap_and_disorder():
    WordAlignment([(0, 2, "a"), (3, 5, "b")])
    with pytest.raises(ValueError):
        WordAlignment([(0, 3, "a"), (3, 5, "b")])
    with pytest.raises(ValueError):
        WordAlignment([(3, 5, "b"), (0, 2, "a")])
    with pytest.raises(ValueError):
        WordAlignment([(2, 1, "a")])


def test_min_path_length_counts_repeats():
    assert min_ctc_path_length([1]) == 1
    assert min_ctc_path_length([1, 2, 3]) == 3
    assert min_ctc_path_length([1, 1]) == 3
    assert min_ctc_path_length([1, 1, 2, 2, 2]) == 8


def test_reference_validation():
    post = uniform_posteriors(4, 3)
    with pytest.raises(ValueError):
        ctc_forced_align(post, [])
    with pytest.raises(ValueError):
        ctc_forced_align(post, [0])  # blank in reference
    with pytest.raises(ValueError):
        ctc_forced_align(post, [3])  # out of range
    with pytest.raises(ValueError):
        ctc_forced_align(post, [1, 1, 1])  # needs 5 frames, only 4


# --- alignment behavior ---


def test_sharp_labeling_is_recovered_exactly():
    # frames: a a blank b b  -> tokens 1 and 2 with a gap at frame 2
    post = sharp_posteriors([1, 1, 0, 2, 2], n_classes=3, sharpness=0.95)
    spans = ctc_forced_align(post, [1, 2])
    assert spans == [(1, 0, 1), (2, 3, 4)]


def test_repeated_token_needs_blank_between():
    post = sharp_posteriors([1, 0, 1], n_classes=2, sharpness=0.9)
    spans = ctc_forced_align(post, [1, 1])
    assert spans == [(1, 0, 0), (1, 2, 2)]


def test_spans_are_monotone_and_cover_reference():
    rng = np.random.default_rng(0)
    for _ in range(50):
        t = int(rng.integers(4, 12))
        v = int(rng.integers(2, 4))
        ref = [int(rng.integers(1, v + 1)) for _ in range(int(rng.integers(1, 4)))]
        if min_ctc_path_length(ref) > t:
            continue
        probs = rng.dirichlet(np.ones(v + 1), size=t)
        post = FramePosteriors(log_probs=np.log(probs))
        spans = ctc_forced_align(post, ref)
        assert [tok for tok, _, _ in spans] == ref
        prev_end = -1
        for _, a, b in spans:
            assert prev_end < a <= b < t
            prev_end = b


def test_alignment_is_deterministic_under_ties():
    post = uniform_posteriors(6, 3)
    a = ctc_forced_align(post, [1, 2])
    b = ctc_forced_align(post, [1, 2])
    assert a == b


def test_path_log_prob_reconstructs_full_labeling():
    post = sharp_posteriors([1, 1, 0, 2, 2], n_classes=3, sharpness=0.95)
    spans = ctc_forced_align(post, [1, 2])
    lp = post.log_probs
    expected = lp[0, 1] + lp[1, 1] + lp[2, 0] + lp[3, 2] + lp[4, 2]
    assert abs(path_log_prob(post, spans) - expected) < 1e-12


def test_viterbi_matches_brute_force_oracle():
    rng = np.random.default_rng(42)
    checked = 0
    while checked < 100:
        t = int(rng.integers(2, 9))
        v = int(rng.integers(1, 4))
        ref_len = int(rng.integers(1, 4))
        ref = [int(rng.integers(1, v + 1)) for _ in range(ref_len)]
        if min_ctc_path_length(ref) > t:
            continue
        probs = rng.dirichlet(np.ones(v + 1), size=t)
        post = FramePosteriors(log_probs=np.log(probs))
        spans = ctc_forced_align(post, ref)
        oracle_score, _ = brute_force_ctc(post.log_probs, ref)
        assert oracle_score is not None
        assert abs(path_log_prob(post, spans) - oracle_score) < 1e-9
        checked += 1


# --- word span mapping ---


def test_tokens_to_word_spans_groups_by_counts():
    token_spans = [(5, 0, 1), (7, 2, 2), (9, 4, 6), (5, 7, 8)]
    align = tokens_to_word_spans(token_spans, [2, 2], ["hello", "world"])
    assert align.spans == [(0, 2, "hello"), (4, 8, "world")]


def test_tokens_to_word_spans_validates_counts():
    with pytest.raises(ValueError):
        tokens_to_word_spans([(1, 0, 1)], [2], ["w"])
    with pytest.raises(ValueError):
        tokens_to_word_spans([(1, 0, 1)], [1], ["w", "x"])
