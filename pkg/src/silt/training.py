"""Training loop with scheduled interleaving, Adam, checkpoints, decoding.

Every source of randomness in a run is derived from (seed, step) or
(seed, example id, step), never from a mutating generator, so resuming from
a checkpoint reproduces the uninterrupted loss trace bit for bit and batch
assembly order cannot leak into results.

Checkpoints use a small versioned container (magic, JSON header, raw
little-endian float64 blob) instead of npz: identical state must produce
identical bytes, and zip containers embed timestamps.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__ as TOOL_VERSION
from .artifacts import config_hash, derived_rng
from .cot import build_training_example
from .ctc_align import WordAlignment
from .interleave import (
    InterleaveConfig,
    constant_text_ratio,
    interleave,
    schedule_text_ratio,
)
from .model import ModelConfig, forward, init_model, loss_and_grads_batch
from .quantizer import UnitSequence
from .vocab import BpeModel, JointVocab

SCHEDULE_KINDS = ("scheduled", "constant", "none")
SIDES = ("both", "input", "output")
CKPT_MAGIC = b"SILTCKPT\x01"
METRICS_COLUMNS = ("step", "p", "loss", "f_src", "f_tgt", "len_mean")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 3e-4
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    batch_size: int = 8
    total_steps: int = 1000
    schedule_kind: str = "scheduled"
    grad_clip_norm: float = 1.0
    seed: int = 0
    # schedule parameters (schedule_kind == "scheduled")
    p0: float = 0.9
    delta: float = 0.1
    interval: int = 300
    # interleaving
    lam: float = 1.0
    mode: str = "text"
    side: str = "both"
    checkpoint_every: int = 0  # 0 = final checkpoint only

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.schedule_kind not in SCHEDULE_KINDS:
            raise ValueError(f"schedule_kind must be one of {SCHEDULE_KINDS}")
        if self.side not in SIDES:
            raise ValueError(f"side must be one of {SIDES}")
        if self.checkpoint_every < 0:
            raise ValueError("checkpoint_every must be >= 0")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "betas": list(self.betas),
            "eps": self.eps,
            "batch_size": self.batch_size,
            "total_steps": self.total_steps,
            "schedule_kind": self.schedule_kind,
            "grad_clip_norm": self.grad_clip_norm,
            "seed": self.seed,
            "p0": self.p0,
            "delta": self.delta,
            "interval": self.interval,
            "lam": self.lam,
            "mode": self.mode,
            "side": self.side,
            "checkpoint_every": self.checkpoint_every,
        }


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0


def init_adam(params: dict[str, np.ndarray]) -> AdamState:
    return AdamState(
        m={k: np.zeros_like(p) for k, p in params.items()},
        v={k: np.zeros_like(p) for k, p in params.items()},
        step=0,
    )


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    cfg: TrainConfig,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """Adam with bias correction, after optional global-norm clipping."""
    if set(grads) != set(params):
        raise ValueError("gradient keys do not match parameter keys")
    for k in params:
        if grads[k].shape != params[k].shape:
            raise ValueError(f"shape mismatch for {k}")
        if not np.all(np.isfinite(grads[k])):
            raise ValueError(f"non-finite gradient in {k}")

    if cfg.grad_clip_norm > 0:
        total = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
        if total > cfg.grad_clip_norm:
            scale = cfg.grad_clip_norm / total
            grads = {k: g * scale for k, g in grads.items()}

    b1, b2 = cfg.betas
    t = state.step + 1
    new_params, new_m, new_v = {}, {}, {}
    for k, p in params.items():
        g = grads[k]
        m = b1 * state.m[k] + (1 - b1) * g
        v = b2 * state.v[k] + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        new_params[k] = p - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)
        new_m[k], new_v[k] = m, v
    return new_params, AdamState(m=new_m, v=new_v, step=t)


def make_schedule(cfg: TrainConfig):
    if cfg.schedule_kind == "none":
        return lambda step: 0.0
    if cfg.schedule_kind == "constant":
        return constant_text_ratio
    return lambda step: schedule_text_ratio(step, cfg.p0, cfg.delta, cfg.interval)


# --- checkpoint container ---


@dataclass
class Checkpoint:
    params: dict[str, np.ndarray]
    opt: AdamState
    model_cfg: ModelConfig
    seed: int
    step: int
    header: dict = field(default_factory=dict)


def save_checkpoint(
    path: str,
    params: dict[str, np.ndarray],
    opt: AdamState,
    model_cfg: ModelConfig,
    seed: int,
    step: int,
) -> None:
    names = sorted(params)
    header = {
        "tool_version": TOOL_VERSION,
        "config_hash": config_hash(model_cfg.to_dict()),
        "seed": seed,
        "step": step,
        "adam_step": opt.step,
        "model_cfg": model_cfg.to_dict(),
        "dtype": "<f8",
        "tensors": [{"name": n, "shape": list(params[n].shape)} for n in names],
        "rng": {"kind": "step-derived", "seed": seed},
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(struct.pack("<Q", len(head)))
        f.write(head)
        for group in (params, opt.m, opt.v):
            for n in names:
                f.write(np.ascontiguousarray(group[n], dtype="<f8").tobytes())


def load_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as f:
        magic = f.read(len(CKPT_MAGIC))
        if magic != CKPT_MAGIC:
            raise ValueError(f"{path} is not a checkpoint file")
        (head_len,) = struct.unpack("<Q", f.read(8))
        header = json.loads(f.read(head_len).decode("utf-8"))
        blob = f.read()

    names = [t["name"] for t in header["tensors"]]
    shapes = {t["name"]: tuple(t["shape"]) for t in header["tensors"]}
    groups: list[dict[str, np.ndarray]] = []
    offset = 0
    for _ in range(3):
        group = {}
        for n in names:
            size = int(np.prod(shapes[n], dtype=np.int64)) if shapes[n] else 1
            nbytes = size * 8
            arr = np.frombuffer(blob[offset : offset + nbytes], dtype="<f8")
            group[n] = arr.reshape(shapes[n]).astype(np.float64)
            offset += nbytes
        groups.append(group)
    if offset != len(blob):
        raise ValueError(f"{path}: trailing bytes in checkpoint blob")

    return Checkpoint(
        params=groups[0],
        opt=AdamState(m=groups[1], v=groups[2], step=int(header["adam_step"])),
        model_cfg=ModelConfig.from_dict(header["model_cfg"]),
        seed=int(header["seed"]),
        step=int(header["step"]),
        header=header,
    )


# --- training loop ---


@dataclass
class _Rec:
    id: int
    src_units: UnitSequence
    src_align: WordAlignment
    tgt_units: UnitSequence
    tgt_align: WordAlignment
    t_src_ids: list[int]
    t_tgt_ids: list[int]


def _prep_records(dataset: list[dict], bpe: BpeModel) -> list[_Rec]:
    recs = []
    for r in dataset:
        recs.append(
            _Rec(
                id=int(r["id"]),
                src_units=UnitSequence(units=list(r["src_units"])),
                src_align=WordAlignment.from_json(r["src_align"]),
                tgt_units=UnitSequence(units=list(r["tgt_units"])),
                tgt_align=WordAlignment.from_json(r["tgt_align"]),
                t_src_ids=bpe.encode(r["src_text"]),
                t_tgt_ids=bpe.encode(r["tgt_text"]),
            )
        )
    return recs


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    opt: AdamState
    metrics: list[dict]
    n_skipped: int
    checkpoint_paths: list[str]


def assemble_step_batch(
    recs: list[_Rec],
    indices,
    step: int,
    p: float,
    train_cfg: TrainConfig,
    vocab: JointVocab,
    bpe: BpeModel,
    max_seq_len: int,
):
    """Interleave and assemble one step's examples; returns (examples, stats).

    Interleaving draws from per-(example, step, side) RNG streams so the
    result is independent of batch order and of any previous steps.
    """
    p_src = p if train_cfg.side in ("both", "input") else 0.0
    p_tgt = p if train_cfg.side in ("both", "output") else 0.0
    examples, f_src, f_tgt, lens = [], [], [], []
    n_skipped = 0
    for j in indices:
        rec = recs[j]
        il_src = interleave(
            rec.src_units,
            rec.src_align,
            InterleaveConfig(p=p_src, lam=train_cfg.lam, mode=train_cfg.mode),
            vocab,
            bpe,
            derived_rng(train_cfg.seed, "ilt", rec.id, step, 0),
        )
        il_tgt = interleave(
            rec.tgt_units,
            rec.tgt_align,
            InterleaveConfig(p=p_tgt, lam=train_cfg.lam, mode=train_cfg.mode),
            vocab,
            bpe,
            derived_rng(train_cfg.seed, "ilt", rec.id, step, 1),
        )
        ex = build_training_example(
            il_src.tokens, rec.t_src_ids, rec.t_tgt_ids, il_tgt.tokens, "cot", vocab
        )
        if len(ex.tokens) > max_seq_len:
            n_skipped += 1
            continue
        examples.append(ex)
        f_src.append(il_src.realized_text_fraction)
        f_tgt.append(il_tgt.realized_text_fraction)
        lens.append(len(ex.tokens))
    stats = {
        "f_src": float(np.mean(f_src)) if f_src else 0.0,
        "f_tgt": float(np.mean(f_tgt)) if f_tgt else 0.0,
        "len_mean": float(np.mean(lens)) if lens else 0.0,
        "n_skipped": n_skipped,
    }
    return examples, stats


def _pad_batch(examples, pad_id: int):
    t_max = max(len(ex.tokens) for ex in examples)
    toks = np.full((len(examples), t_max), pad_id, dtype=np.int64)
    mask = np.zeros((len(examples), t_max), dtype=np.int64)
    for i, ex in enumerate(examples):
        toks[i, : len(ex.tokens)] = ex.tokens
        mask[i, : len(ex.tokens)] = ex.loss_mask
    return toks, mask


def train(
    dataset: list[dict],
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    vocab: JointVocab,
    bpe: BpeModel,
    schedule=None,
    out_dir: str | None = None,
    init: Checkpoint | None = None,
) -> TrainResult:
    """Run (or resume) a training job over raw dataset records.

    Per step: p = schedule(step); re-interleave each sampled example's source
    and target unit sequences at ratio p; assemble the full sequence
    [BOS, I_src, SEP_ASR, T_src, SEP_MT, T_tgt, SEP_TTS, I_tgt, EOS]; take one
    Adam step on the masked cross-entropy. Overlength examples are skipped and
    counted, not fatal.
    """
    if not dataset:
        raise ValueError("dataset is empty")
    recs = _prep_records(dataset, bpe)
    schedule = schedule or make_schedule(train_cfg)

    if init is not None:
        params = {k: p.copy() for k, p in init.params.items()}
        opt = AdamState(
            m={k: a.copy() for k, a in init.opt.m.items()},
            v={k: a.copy() for k, a in init.opt.v.items()},
            step=init.opt.step,
        )
        start_step = init.step
    else:
        params = init_model(model_cfg)
        opt = init_adam(params)
        start_step = 0

    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    metrics: list[dict] = []
    ckpt_paths: list[str] = []
    n_skipped = 0
    for step in range(start_step, train_cfg.total_steps):
        p = schedule(step)
        idx = derived_rng(train_cfg.seed, "batch", step).integers(
            0, len(recs), size=train_cfg.batch_size
        )
        examples, stats = assemble_step_batch(
            recs, idx, step, p, train_cfg, vocab, bpe, model_cfg.max_seq_len
        )
        n_skipped += stats["n_skipped"]
        if examples:
            toks, mask = _pad_batch(examples, vocab.pad)
            loss, grads = loss_and_grads_batch(
                params,
                toks,
                mask,
                model_cfg,
                train_mode=True,
                rng=derived_rng(train_cfg.seed, "drop", step),
            )
            params, opt = adam_step(params, grads, opt, train_cfg)
        else:
            loss = float("nan")  # whole batch overlength; logged, no update
        metrics.append(
            {
                "step": step,
                "p": p,
                "loss": loss,
                "f_src": stats["f_src"],
                "f_tgt": stats["f_tgt"],
                "len_mean": stats["len_mean"],
            }
        )
        done = step + 1
        if (
            out is not None
            and train_cfg.checkpoint_every > 0
            and done % train_cfg.checkpoint_every == 0
            and done < train_cfg.total_steps
        ):
            path = str(out / f"ckpt_step{done}.bin")
            save_checkpoint(path, params, opt, model_cfg, train_cfg.seed, done)
            ckpt_paths.append(path)

    if out is not None:
        path = str(out / "ckpt_final.bin")
        save_checkpoint(path, params, opt, model_cfg, train_cfg.seed, train_cfg.total_steps)
        ckpt_paths.append(path)
        write_metrics_csv(str(out / "metrics.csv"), metrics, train_cfg)
    return TrainResult(
        params=params,
        opt=opt,
        metrics=metrics,
        n_skipped=n_skipped,
        checkpoint_paths=ckpt_paths,
    )


def write_metrics_csv(path: str, metrics: list[dict], train_cfg: TrainConfig) -> None:
    header = {
        "tool_version": TOOL_VERSION,
        "config_hash": config_hash(train_cfg.to_dict()),
        "seed": train_cfg.seed,
    }
    lines = ["# " + json.dumps(header, sort_keys=True), ",".join(METRICS_COLUMNS)]
    for row in metrics:
        lines.append(",".join(repr(row[c]) if c != "step" else str(row[c]) for c in METRICS_COLUMNS))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_metrics_csv(path: str) -> list[dict]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    rows = []
    for line in lines[2:]:
        parts = line.split(",")
        rows.append(
            {
                "step": int(parts[0]),
                "p": float(parts[1]),
                "loss": float(parts[2]),
                "f_src": float(parts[3]),
                "f_tgt": float(parts[4]),
                "len_mean": float(parts[5]),
            }
        )
    return rows


def greedy_decode(
    params: dict[str, np.ndarray],
    prompt: list[int],
    max_len: int,
    vocab: JointVocab,
    cfg: ModelConfig,
) -> list[int]:
    """Argmax decoding until EOS or max_len total tokens; deterministic."""
    if not prompt:
        raise ValueError("prompt must be non-empty")
    seq = list(prompt)
    limit = min(max_len, cfg.max_seq_len)
    while len(seq) < limit:
        logits, _ = forward(params, seq, cfg)
        nxt = int(np.argmax(logits[-1]))
        seq.append(nxt)
        if nxt == vocab.eos:
            break
    return seq
