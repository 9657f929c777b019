"""Byte-level BPE tokenizer and the joint speech-text vocabulary.

The tokenizer is trained from scratch on the toy corpus. It is byte-level
with full byte fallback (all 256 byte values are base tokens), so encode
followed by decode is the identity on any valid UTF-8 string and there is
no unknown-token failure path.

The joint vocabulary extends the text id space with speech-unit ids and a
handful of special tokens, laid out in disjoint ranges:

    text ids      [0, n_text)
    unit ids      [n_text, n_text + n_units)
    special ids   [n_text + n_units, total)
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field

from .artifacts import make_header, read_json, write_json

BYTE_ALPHABET_SIZE = 256

# Whitespace attaches to the following word, so concatenating pre-token
# decodings reproduces the original text and merges never cross word
# boundaries.
_PRETOKEN_RE = re.compile(r"\s*\S+|\s+")

SPECIAL_NAMES = ("PAD", "BOS", "EOS", "SEP_ASR", "SEP_MT", "SEP_TTS", "MASK")


class BpeModel:
    """Byte-pair-encoding model: 256 byte base tokens plus learned merges.

    Merge i creates token id 256 + i from an ordered pair of existing ids.
    """

    def __init__(self, merges: list[tuple[int, int]]):
        self.merges = [(int(l), int(r)) for l, r in merges]
        self.vocab_bytes: list[bytes] = [bytes([b]) for b in range(BYTE_ALPHABET_SIZE)]
        self.merge_ranks: dict[tuple[int, int], tuple[int, int]] = {}
        for rank, (left, right) in enumerate(self.merges):
            new_id = BYTE_ALPHABET_SIZE + rank
            if left >= new_id or right >= new_id:
                raise ValueError(f"merge {rank} references undefined token ids ({left}, {right})")
            self.vocab_bytes.append(self.vocab_bytes[left] + self.vocab_bytes[right])
            self.merge_ranks[(left, right)] = (rank, new_id)
        self._encode_cache: dict[bytes, list[int]] = {}

    @property
    def vocab_size(self) -> int:
        return BYTE_ALPHABET_SIZE + len(self.merges)

    def token_to_id(self, token: bytes) -> int:
        return self.vocab_bytes.index(token)

    def _encode_pretoken(self, raw: bytes) -> list[int]:
        cached = self._encode_cache.get(raw)
        if cached is not None:
            return cached
        ids = list(raw)
        while len(ids) > 1:
            best = None  # (rank, position, new_id)
            for i in range(len(ids) - 1):
                hit = self.merge_ranks.get((ids[i], ids[i + 1]))
                if hit is not None and (best is None or hit[0] < best[0]):
                    best = (hit[0], i, hit[1])
            if best is None:
                break
            _, i, new_id = best
            ids[i : i + 2] = [new_id]
        self._encode_cache[raw] = ids
        return ids

    def encode(self, text: str) -> list[int]:
        out: list[int] = []
        for pretoken in _PRETOKEN_RE.findall(text):
            out.extend(self._encode_pretoken(pretoken.encode("utf-8")))
        return out

    def encode_words(self, words: list[str]) -> tuple[list[int], list[int]]:
        """Encode a word sequence, returning (ids, per-word token counts).

        Matches encode(" ".join(words)) exactly: the first word carries no
        leading space, every later word carries one.
        """
        ids: list[int] = []
        counts: list[int] = []
        for i, word in enumerate(words):
            piece = word if i == 0 else " " + word
            piece_ids = self._encode_pretoken(piece.encode("utf-8"))
            ids.extend(piece_ids)
            counts.append(len(piece_ids))
        return ids, counts

    def decode(self, ids: list[int]) -> str:
        chunks = []
        for i in ids:
            if not 0 <= i < self.vocab_size:
                raise ValueError(f"unknown token id {i} (vocab size {self.vocab_size})")
            chunks.append(self.vocab_bytes[i])
        return b"".join(chunks).decode("utf-8", errors="replace")

    def save(self, path: str, seed: int = 0) -> None:
        payload = {
            "header": make_header(seed, {"kind": "bpe", "vocab_size": self.vocab_size}),
            "base": list(range(BYTE_ALPHABET_SIZE)),
            "merges": [[l, r] for l, r in self.merges],
        }
        write_json(path, payload)

    @classmethod
    def load(cls, path: str) -> "BpeModel":
        payload = read_json(path)
        if payload.get("base") != list(range(BYTE_ALPHABET_SIZE)):
            raise ValueError(f"unsupported BPE base alphabet in {path}")
        return cls([(l, r) for l, r in payload["merges"]])


def train_bpe(corpus: list[str], target_size: int) -> BpeModel:
    """Learn merges greedily by pair frequency until target_size tokens exist.

    Ties on frequency break lexicographically on the (left bytes, right bytes)
    pair, so training is deterministic across platforms. Training stops early
    once no adjacent pair is left to merge.
    """
    if not corpus:
        raise ValueError("corpus is empty")
    if target_size < BYTE_ALPHABET_SIZE:
        raise ValueError(
            f"target_size {target_size} is below the byte base alphabet ({BYTE_ALPHABET_SIZE})"
        )

    pretoken_counts: Counter[bytes] = Counter()
    for line in corpus:
        for pretoken in _PRETOKEN_RE.findall(line):
            pretoken_counts[pretoken.encode("utf-8")] += 1

    # Work on distinct pretokens weighted by frequency.
    sequences: list[list[int]] = [list(raw) for raw in pretoken_counts]
    weights: list[int] = list(pretoken_counts.values())
    vocab_bytes: list[bytes] = [bytes([b]) for b in range(BYTE_ALPHABET_SIZE)]
    merges: list[tuple[int, int]] = []

    while BYTE_ALPHABET_SIZE + len(merges) < target_size:
        pair_counts: Counter[tuple[int, int]] = Counter()
        for seq, w in zip(sequences, weights):
            for a, b in zip(seq, seq[1:]):
                pair_counts[(a, b)] += w
        if not pair_counts:
            break
        best_count = max(pair_counts.values())
        best_pair = min(
            (p for p, c in pair_counts.items() if c == best_count),
            key=lambda p: (vocab_bytes[p[0]], vocab_bytes[p[1]]),
        )
        new_id = BYTE_ALPHABET_SIZE + len(merges)
        merges.append(best_pair)
        vocab_bytes.append(vocab_bytes[best_pair[0]] + vocab_bytes[best_pair[1]])
        for seq in sequences:
            i = 0
            while i < len(seq) - 1:
                if seq[i] == best_pair[0] and seq[i + 1] == best_pair[1]:
                    seq[i : i + 2] = [new_id]
                else:
                    i += 1

    return BpeModel(merges)


@dataclass(frozen=True)
class JointVocab:
    """Merged token space: text BPE ids, then speech-unit ids, then specials."""

    n_text: int
    n_units: int
    specials: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.n_text < 1 or self.n_units < 1:
            raise ValueError("n_text and n_units must both be >= 1")
        if not self.specials:
            base = self.n_text + self.n_units
            object.__setattr__(
                self, "specials", {name: base + i for i, name in enumerate(SPECIAL_NAMES)}
            )

    @property
    def total(self) -> int:
        return self.n_text + self.n_units + len(self.specials)

    @property
    def pad(self) -> int:
        return self.specials["PAD"]

    @property
    def bos(self) -> int:
        return self.specials["BOS"]

    @property
    def eos(self) -> int:
        return self.specials["EOS"]

    @property
    def sep_asr(self) -> int:
        return self.specials["SEP_ASR"]

    @property
    def sep_mt(self) -> int:
        return self.specials["SEP_MT"]

    @property
    def sep_tts(self) -> int:
        return self.specials["SEP_TTS"]

    @property
    def mask(self) -> int:
        return self.specials["MASK"]

    def modality_of(self, token_id: int) -> str:
        if 0 <= token_id < self.n_text:
            return "text"
        if self.n_text <= token_id < self.n_text + self.n_units:
            return "speech"
        if self.n_text + self.n_units <= token_id < self.total:
            return "special"
        raise ValueError(f"token id {token_id} outside vocab of size {self.total}")

    def unit_to_id(self, unit: int) -> int:
        if not 0 <= unit < self.n_units:
            raise ValueError(f"unit index {unit} outside [0, {self.n_units})")
        return self.n_text + unit

    def id_to_unit(self, token_id: int) -> int:
        if self.modality_of(token_id) != "speech":
            raise ValueError(f"token id {token_id} is not a speech unit")
        return token_id - self.n_text

    def units_to_ids(self, units: list[int]) -> list[int]:
        return [self.unit_to_id(u) for u in units]

    def save(self, path: str, seed: int = 0) -> None:
        payload = {
            "header": make_header(seed, {"kind": "joint_vocab", "total": self.total}),
            "n_text": self.n_text,
            "n_units": self.n_units,
            "specials": dict(self.specials),
        }
        write_json(path, payload)

    @classmethod
    def load(cls, path: str) -> "JointVocab":
        payload = read_json(path)
        return cls(payload["n_text"], payload["n_units"], dict(payload["specials"]))


def build_joint_vocab(n_text: int, n_units: int) -> JointVocab:
    return JointVocab(n_text=n_text, n_units=n_units)
