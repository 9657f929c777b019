"""Assembly of chain-of-thought training sequences and their loss masks.

A full example reads [BOS, I_src, SEP_ASR, T_src, SEP_MT, T_tgt, SEP_TTS,
I_tgt, EOS]: source speech, transcript, translation, target speech. The
direct (no chain-of-thought) variant drops both text stages. Loss is applied
from SEP_ASR (or SEP_TTS in direct mode) through EOS inclusive, so each
separator is learned as the terminator of the segment before it.

loss_mask[t] = 1 means token t is a prediction target, i.e. the model's
output at position t-1 is scored against tokens[t]. loss_mask[0] is always 0.
"""

from __future__ import annotations

from dataclasses import dataclass

from .vocab import JointVocab

MODES = ("cot", "direct")


@dataclass
class TrainingExample:
    tokens: list[int]
    loss_mask: list[int]
    # segment name -> half-open token range; each segment includes its leading
    # structural token (BOS for i_src, the separator otherwise; eos rides with
    # i_tgt), so the ranges partition the sequence.
    segments: dict[str, tuple[int, int]]

    def __post_init__(self):
        if len(self.tokens) != len(self.loss_mask):
            raise ValueError("tokens and loss_mask must have equal length")


def _check_ids(name: str, ids: list[int], vocab: JointVocab) -> None:
    for i in ids:
        if not 0 <= i < vocab.total:
            raise ValueError(f"{name} contains id {i} outside the joint vocabulary")


def build_training_example(
    i_src: list[int],
    t_src_ids,
    t_tgt_ids,
    i_tgt: list[int],
    mode: str,
    vocab: JointVocab,
) -> TrainingExample:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if len(i_src) == 0:
        raise ValueError("source speech segment must be non-empty")
    if len(i_tgt) == 0:
        raise ValueError("target speech segment must be non-empty")
    _check_ids("i_src", i_src, vocab)
    _check_ids("i_tgt", i_tgt, vocab)

    tokens = [vocab.bos] + list(i_src)
    segments = {"i_src": (0, len(tokens))}
    if mode == "cot":
        if not t_src_ids or not t_tgt_ids:
            raise ValueError("text segments must be non-empty in cot mode")
        _check_ids("t_src", t_src_ids, vocab)
        _check_ids("t_tgt", t_tgt_ids, vocab)
        start = len(tokens)
        tokens += [vocab.sep_asr] + list(t_src_ids)
        segments["t_src"] = (start, len(tokens))
        start = len(tokens)
        tokens += [vocab.sep_mt] + list(t_tgt_ids)
        segments["t_tgt"] = (start, len(tokens))
    start = len(tokens)
    tokens += [vocab.sep_tts] + list(i_tgt) + [vocab.eos]
    segments["i_tgt"] = (start, len(tokens))

    mask = [0] * len(tokens)
    loss_start = segments["t_src"][0] if mode == "cot" else segments["i_tgt"][0]
    for t in range(loss_start, len(tokens)):
        mask[t] = 1
    return TrainingExample(tokens=tokens, loss_mask=mask, segments=segments)


def build_inference_prompt(i_src: list[int], mode: str, vocab: JointVocab) -> list[int]:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if len(i_src) == 0:
        raise ValueError("source speech segment must be non-empty")
    _check_ids("i_src", i_src, vocab)
    sep = vocab.sep_asr if mode == "cot" else vocab.sep_tts
    return [vocab.bos] + list(i_src) + [sep]


def split_generated(tokens: list[int], vocab: JointVocab) -> dict:
    """Split a decoded sequence back into transcript, translation, and target
    units. Tolerant: missing separators or a missing EOS set malformed=True
    and leave the unreached segments empty instead of raising."""
    seq = list(tokens)
    # drop the prompt if the full sequence was passed in
    if vocab.sep_asr in seq:
        seq = seq[seq.index(vocab.sep_asr) + 1 :]

    out = {"t_src": [], "t_tgt": [], "s_tgt": [], "malformed": False}
    order = [("t_src", vocab.sep_mt), ("t_tgt", vocab.sep_tts), ("s_tgt", vocab.eos)]
    pos = 0
    for name, stop in order:
        seg = []
        while pos < len(seq) and seq[pos] != stop:
            seg.append(seq[pos])
            pos += 1
        out[name] = seg
        if pos == len(seq):  # ran out before the stop token
            out["malformed"] = True
            return out
        pos += 1
    return out
