import math

import numpy as np
import pytest

from silt.corpus import DEFAULT_WORDS
from silt.ctc_align import WordAlignment
from silt.interleave import (
    InterleaveConfig,
    constant_text_ratio,
    interleave,
    realized_text_fraction,
    sample_poisson,
    schedule_text_ratio,
)
from silt.quantizer import UnitSequence

from oracles import decimal_schedule


def make_instance(n_words: int, frames_per_word: int = 3, n_units: int = 16):
    words = [DEFAULT_WORDS[i % len(DEFAULT_WORDS)] for i in range(n_words)]
    units = [(i * 5) % n_units for i in range(n_words * frames_per_word)]
    spans = [
        (i * frames_per_word, (i + 1) * frames_per_word - 1, w)
        for i, w in enumerate(words)
    ]
    return UnitSequence(units=units), WordAlignment(spans)


# --- schedule ---


def test_schedule_is_exact_on_the_default_decimal_grid():
    assert schedule_text_ratio(0) == 0.9
    assert schedule_text_ratio(299) == 0.9
    assert schedule_text_ratio(300) == 0.8
    assert schedule_text_ratio(2699) == 0.1
    assert schedule_text_ratio(2700) == 0.0
    assert schedule_text_ratio(100000) == 0.0


def test_schedule_matches_decimal_reference_everywhere():
    for step in range(0, 3200, 37):
        assert schedule_text_ratio(step) == decimal_schedule(step)


def test_schedule_with_custom_parameters():
    assert schedule_text_ratio(0, p0=0.5, delta=0.25, interval=10) == 0.5
    assert schedule_text_ratio(10, p0=0.5, delta=0.25, interval=10) == 0.25
    assert schedule_text_ratio(20, p0=0.5, delta=0.25, interval=10) == 0.0
    assert schedule_text_ratio(1, p0=0.3, delta=0.1, interval=1) == 0.2


def test_schedule_validates_arguments():
    with pytest.raises(ValueError):
        schedule_text_ratio(-1)
    with pytest.raises(ValueError):
        schedule_text_ratio(0, p0=1.5)
    with pytest.raises(ValueError):
        schedule_text_ratio(0, delta=0.0)
    with pytest.raises(ValueError):
        schedule_text_ratio(0, interval=0)


def test_constant_ratio_is_point_three():
    assert constant_text_ratio(0) == 0.3
    assert constant_text_ratio(10000) == 0.3


# --- poisson sampling ---


def test_poisson_zero_mean_is_always_zero():
    rng = np.random.default_rng(0)
    assert all(sample_poisson(0.0, rng) == 0 for _ in range(200))


def test_poisson_negative_mean_rejected():
    with pytest.raises(ValueError):
        sample_poisson(-0.1, np.random.default_rng(0))


def test_poisson_sample_statistics():
    rng = np.random.default_rng(1)
    draws = [sample_poisson(2.0, rng) for _ in range(20000)]
    assert abs(np.mean(draws) - 2.0) < 0.05
    assert abs(np.mean([d == 0 for d in draws]) - math.exp(-2.0)) < 0.01


# --- interleaving ---


def test_config_validation():
    with pytest.raises(ValueError):
        InterleaveConfig(p=1.5)
    with pytest.raises(ValueError):
        InterleaveConfig(p=-0.1)
    with pytest.raises(ValueError):
        InterleaveConfig(lam=-1.0)
    with pytest.raises(ValueError):
        InterleaveConfig(mode="nope")


def test_p_zero_is_identity(vocab_small, bpe_small):
    units, align = make_instance(5)
    out = interleave(units, align, InterleaveConfig(p=0.0), vocab_small, bpe_small,
                     np.random.default_rng(0))
    assert out.tokens == [vocab_small.unit_to_id(u) for u in units.units]
    assert out.replaced_spans == []
    assert realized_text_fraction(out) == 0.0


def test_p_one_replaces_every_word(vocab_small, bpe_small):
    units, align = make_instance(4)
    out = interleave(units, align, InterleaveConfig(p=1.0, lam=0.0), vocab_small,
                     bpe_small, np.random.default_rng(3))
    # lam=0 makes every span a single word, so the output is the per-word
    # encodings in order with no unit tokens left
    expected = [t for w in align.words for t in bpe_small.encode(w)]
    assert out.tokens == expected
    assert realized_text_fraction(out) == 1.0


def test_fraction_brackets_p(vocab_small, bpe_small):
    rng = np.random.default_rng(7)
    for _ in range(200):
        n_words = int(rng.integers(1, 30))
        units, align = make_instance(n_words)
        p = float(rng.choice([0.1, 0.3, 0.5, 0.7, 0.9]))
        lam = float(rng.choice([0.0, 1.0, 2.0]))
        out = interleave(units, align, InterleaveConfig(p=p, lam=lam), vocab_small,
                         bpe_small, rng)
        f = out.realized_text_fraction
        assert f >= p
        last_share = (out.replaced_spans[-1][1] - out.replaced_spans[-1][0] + 1) / n_words
        assert f - last_share < p


def test_same_seed_reproduces_output(vocab_small, bpe_small):
    units, align = make_instance(12)
    cfg = InterleaveConfig(p=0.6, lam=1.0)
    a = interleave(units, align, cfg, vocab_small, bpe_small, np.random.default_rng(5))
    b = interleave(units, align, cfg, vocab_small, bpe_small, np.random.default_rng(5))
    assert a.tokens == b.tokens
    assert a.replaced_spans == b.replaced_spans


def test_remaining_units_preserve_order(vocab_small, bpe_small):
    rng = np.random.default_rng(11)
    for _ in range(100):
        n_words = int(rng.integers(1, 20))
        units, align = make_instance(n_words)
        out = interleave(units, align, InterleaveConfig(p=0.5, lam=1.0), vocab_small,
                         bpe_small, rng)
        kept = [
            vocab_small.id_to_unit(t)
            for t in out.tokens
            if vocab_small.modality_of(t) == "speech"
        ]
        removed = set()
        for ws, we in out.replaced_spans:
            a, b = align.spans[ws][0], align.spans[we][1]
            removed.update(range(a, b + 1))
        expected = [u for i, u in enumerate(units.units) if i not in removed]
        assert kept == expected


def test_mask_mode_emits_one_mask_per_span(vocab_small, bpe_small):
    units, align = make_instance(10)
    out = interleave(units, align, InterleaveConfig(p=0.7, lam=1.0, mode="mask"),
                     vocab_small, bpe_small, np.random.default_rng(2))
    n_masks = sum(1 for t in out.tokens if t == vocab_small.mask)
    assert n_masks == len(out.replaced_spans)
    assert all(vocab_small.modality_of(t) != "text" for t in out.tokens)


def test_equal_interval_mode_ignores_alignment(vocab_small, bpe_small):
    # deliberately wrong alignment: spans cover only the first three frames
    units = UnitSequence(units=[1, 2, 3, 4, 5, 6, 7, 8, 9, 10])
    fake = WordAlignment([(0, 0, "time"), (1, 1, "year"), (2, 2, "way")])
    cfg = InterleaveConfig(p=1.0, lam=0.0, mode="text_equal_interval")
    out = interleave(units, fake, cfg, vocab_small, bpe_small, np.random.default_rng(0))
    # equal intervals (0,2),(3,5),(6,9) tile all ten frames, so nothing is left
    expected = [t for w in fake.words for t in bpe_small.encode(w)]
    assert out.tokens == expected

    plain = interleave(units, fake, InterleaveConfig(p=1.0, lam=0.0), vocab_small,
                       bpe_small, np.random.default_rng(0))
    assert any(vocab_small.modality_of(t) == "speech" for t in plain.tokens)


def test_equal_interval_rejects_fewer_frames_than_words():
    from silt.interleave import _equal_interval_spans

    spans = _equal_interval_spans(10, ["time", "year", "way"])
    assert spans.spans == [(0, 2, "time"), (3, 5, "year"), (6, 9, "way")]
    with pytest.raises(ValueError):
        _equal_interval_spans(2, ["time", "year", "way"])


def test_alignment_must_fit_units(vocab_small, bpe_small):
    units = UnitSequence(units=[1, 2, 3])
    align = WordAlignment([(0, 3, "time")])
    with pytest.raises(ValueError):
        interleave(units, align, InterleaveConfig(p=0.5), vocab_small, bpe_small,
                   np.random.default_rng(0))


def test_empty_sequence_is_silently_empty(vocab_small, bpe_small):
    out = interleave(UnitSequence(units=[]), WordAlignment([]), InterleaveConfig(p=0.9),
                     vocab_small, bpe_small, np.random.default_rng(0))
    assert out.tokens == []
    assert out.realized_text_fraction == 0.0
