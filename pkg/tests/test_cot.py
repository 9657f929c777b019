import pytest

from silt.cot import (
    TrainingExample,
    build_inference_prompt,
    build_training_example,
    split_generated,
)


def units(vocab, raw):
    return [vocab.unit_to_id(u) for u in raw]


def test_cot_layout_and_mask(vocab_small):
    v = vocab_small
    i_src = units(v, [0, 1, 2])
    t_src = [10, 11]
    t_tgt = [12, 13]
    i_tgt = units(v, [3, 4, 5, 6])
    ex = build_training_example(i_src, t_src, t_tgt, i_tgt, "cot", v)

    assert len(ex.tokens) == 16  # 1 + 3 + 1 + 2 + 1 + 2 + 1 + 4 + 1
    assert ex.tokens == (
        [v.bos] + i_src + [v.sep_asr] + t_src + [v.sep_mt] + t_tgt
        + [v.sep_tts] + i_tgt + [v.eos]
    )
    assert sum(ex.loss_mask) == 12
    assert ex.loss_mask == [0] * 4 + [1] * 12
    assert ex.loss_mask[0] == 0


def test_direct_layout_and_mask(vocab_small):
    v = vocab_small
    i_src = units(v, [0, 1, 2])
    i_tgt = units(v, [3, 4, 5, 6])
    ex = build_training_example(i_src, None, None, i_tgt, "direct", v)

    assert len(ex.tokens) == 10  # 1 + 3 + 1 + 4 + 1
    assert ex.tokens == [v.bos] + i_src + [v.sep_tts] + i_tgt + [v.eos]
    assert sum(ex.loss_mask) == 6
    assert ex.loss_mask == [0] * 4 + [1] * 6


def test_segments_partition_the_sequence(vocab_small):
    v = vocab_small
    ex = build_training_example(units(v, [0, 1]), [10], [11, 12], units(v, [3]), "cot", v)
    ranges = [ex.segments[k] for k in ("i_src", "t_src", "t_tgt", "i_tgt")]
    assert ranges[0][0] == 0
    for (a, b), (c, d) in zip(ranges, ranges[1:]):
        assert b == c
    assert ranges[-1][1] == len(ex.tokens)
    # each segment leads with its structural token
    assert ex.tokens[ex.segments["i_src"][0]] == v.bos
    assert ex.tokens[ex.segments["t_src"][0]] == v.sep_asr
    assert ex.tokens[ex.segments["t_tgt"][0]] == v.sep_mt
    assert ex.tokens[ex.segments["i_tgt"][0]] == v.sep_tts
    assert ex.tokens[ex.segments["i_tgt"][1] - 1] == v.eos


def test_direct_segments(vocab_small):
    v = vocab_small
    ex = build_training_example(units(v, [0, 1]), None, None, units(v, [3]), "direct", v)
    assert set(ex.segments) == {"i_src", "i_tgt"}
    assert ex.segments["i_src"] == (0, 3)
    assert ex.segments["i_tgt"] == (3, 6)


def test_build_validation(vocab_small):
    v = vocab_small
    ok = units(v, [0, 1])
    with pytest.raises(ValueError):
        build_training_example([], [10], [11], ok, "cot", v)
    with pytest.raises(ValueError):
        build_training_example(ok, [10], [11], [], "cot", v)
    with pytest.raises(ValueError):
        build_training_example(ok, [], [11], ok, "cot", v)
    with pytest.raises(ValueError):
        build_training_example(ok, [10], [], ok, "cot", v)
    with pytest.raises(ValueError):
        build_training_example(ok, [10], [11], ok, "seq2seq", v)
    with pytest.raises(ValueError):
        build_training_example(ok, [v.total], [11], ok, "cot", v)
    with pytest.raises(ValueError):
        build_training_example(ok, [10], [11], [-1], "cot", v)


def test_mismatched_mask_length_rejected():
    with pytest.raises(ValueError):
        TrainingExample(tokens=[1, 2, 3], loss_mask=[0, 1], segments={})


def test_inference_prompt(vocab_small):
    v = vocab_small
    i_src = units(v, [0, 1, 2])
    assert build_inference_prompt(i_src, "cot", v) == [v.bos] + i_src + [v.sep_asr]
    assert build_inference_prompt(i_src, "direct", v) == [v.bos] + i_src + [v.sep_tts]
    with pytest.raises(ValueError):
        build_inference_prompt([], "cot", v)
    with pytest.raises(ValueError):
        build_inference_prompt(i_src, "nope", v)


def test_split_recovers_training_layout(vocab_small):
    v = vocab_small
    i_src = units(v, [0, 1, 2])
    t_src = [10, 11]
    t_tgt = [12, 13]
    i_tgt = units(v, [3, 4])
    ex = build_training_example(i_src, t_src, t_tgt, i_tgt, "cot", v)
    out = split_generated(ex.tokens, v)
    assert out["t_src"] == t_src
    assert out["t_tgt"] == t_tgt
    assert out["s_tgt"] == i_tgt
    assert out["malformed"] is False


def test_split_works_on_generated_tail_only(vocab_small):
    v = vocab_small
    gen = [10, v.sep_mt, 12, v.sep_tts] + units(v, [3, 4]) + [v.eos]
    out = split_generated(gen, v)
    assert out["t_src"] == [10]
    assert out["t_tgt"] == [12]
    assert out["s_tgt"] == units(v, [3, 4])
    assert not out["malformed"]


def test_split_flags_missing_separators(vocab_small):
    v = vocab_small
    out = split_generated([10, 11, 12], v)
    assert out["malformed"] is True
    assert out["t_src"] == [10, 11, 12]
    assert out["t_tgt"] == [] and out["s_tgt"] == []

    out = split_generated([10, v.sep_mt, 12], v)
    assert out["malformed"] is True
    assert out["t_src"] == [10] and out["t_tgt"] == [12]

    out = split_generated([10, v.sep_mt, 12, v.sep_tts, v.unit_to_id(3)], v)
    assert out["malformed"] is True  # no EOS
    assert out["s_tgt"] == [v.unit_to_id(3)]


def test_split_handles_empty_segments(vocab_small):
    v = vocab_small
    out = split_generated([v.sep_mt, v.sep_tts, v.eos], v)
    assert not out["malformed"]
    assert out["t_src"] == [] and out["t_tgt"] == [] and out["s_tgt"] == []
