"""Tiny decoder-only transformer over the joint vocabulary, in numpy.

Pre-norm blocks, learned positional embeddings, causal self-attention, GELU
feed-forward, dropout on attention weights and FFN activations. Forward and
backward are written out by hand in float64; gradients are exact for the
forward graph (verified against central finite differences in the tests).

Everything batched carries a leading batch axis; sequences in a batch are
right-padded, and because attention is causal a padded tail never influences
the loss positions before it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

LN_EPS = 1e-5


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    n_layers: int = 2
    d_model: int = 64
    n_heads: int = 4
    d_ff: int = 256
    max_seq_len: int = 256
    dropout_rate: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.vocab_size < 2:
            raise ValueError(f"vocab_size must be >= 2, got {self.vocab_size}")
        if self.n_layers < 1:
            raise ValueError(f"n_layers must be >= 1, got {self.n_layers}")
        if self.d_model % self.n_heads != 0:
            raise ValueError(
                f"d_model {self.d_model} not divisible by n_heads {self.n_heads}"
            )
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.max_seq_len < 1:
            raise ValueError(f"max_seq_len must be >= 1, got {self.max_seq_len}")

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "n_layers": self.n_layers,
            "d_model": self.d_model,
            "n_heads": self.n_heads,
            "d_ff": self.d_ff,
            "max_seq_len": self.max_seq_len,
            "dropout_rate": self.dropout_rate,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def init_model(cfg: ModelConfig) -> dict[str, np.ndarray]:
    """Deterministic init: normal(0, 0.02) weights, zero biases, unit norm
    gains, zero norm offsets."""
    rng = np.random.default_rng(cfg.seed)
    d, ff, v, s = cfg.d_model, cfg.d_ff, cfg.vocab_size, cfg.max_seq_len

    def w(*shape):
        return rng.normal(0.0, 0.02, size=shape)

    params: dict[str, np.ndarray] = {
        "tok_emb": w(v, d),
        "pos_emb": w(s, d),
        "lnf.g": np.ones(d),
        "lnf.b": np.zeros(d),
        "w_out": w(d, v),
        "b_out": np.zeros(v),
    }
    for i in range(cfg.n_layers):
        p = f"h{i}."
        params[p + "ln1.g"] = np.ones(d)
        params[p + "ln1.b"] = np.zeros(d)
        for name in ("wq", "wk", "wv", "wo"):
            params[p + "attn." + name] = w(d, d)
        for name in ("bq", "bk", "bv", "bo"):
            params[p + "attn." + name] = np.zeros(d)
        params[p + "ln2.g"] = np.ones(d)
        params[p + "ln2.b"] = np.zeros(d)
        params[p + "ffn.w1"] = w(d, ff)
        params[p + "ffn.b1"] = np.zeros(ff)
        params[p + "ffn.w2"] = w(ff, d)
        params[p + "ffn.b2"] = np.zeros(d)
    return params


def n_params(params: dict[str, np.ndarray]) -> int:
    return sum(int(p.size) for p in params.values())


def _layer_norm(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = xc * inv
    return g * xhat + b, (xhat, inv)


def _layer_norm_backward(dy, g, cache):
    xhat, inv = cache
    dg = (dy * xhat).sum(axis=(0, 1))
    db = dy.sum(axis=(0, 1))
    dxhat = dy * g
    dx = inv * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dg, db


def _gelu(x):
    return 0.5 * x * (1.0 + erf(x / math.sqrt(2.0)))


def _gelu_grad(x):
    return 0.5 * (1.0 + erf(x / math.sqrt(2.0))) + x * np.exp(-0.5 * x * x) / math.sqrt(
        2.0 * math.pi
    )


def _dropout_scale(shape, rate, train_mode, rng):
    # inverted-dropout multiplier; identity when inactive
    if not train_mode or rate == 0.0:
        return None
    if rng is None:
        raise ValueError("rng required for dropout in train mode")
    return (rng.random(shape) >= rate) / (1.0 - rate)


def _split_heads(x, n_heads):
    b, t, d = x.shape
    return x.reshape(b, t, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    b, h, t, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, t, h * dh)


def forward_batch(
    params: dict,
    tokens: np.ndarray,
    cfg: ModelConfig,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
):
    """Returns (logits B*T*V, last_hidden B*T*d, cache for backward).

    last_hidden is the output of the final block, before the head's norm.
    """
    tokens = np.asarray(tokens, dtype=np.int64)
    if tokens.ndim != 2:
        raise ValueError(f"tokens must be (B, T), got shape {tokens.shape}")
    b, t = tokens.shape
    if t < 1 or t > cfg.max_seq_len:
        raise ValueError(f"sequence length {t} outside [1, {cfg.max_seq_len}]")
    if tokens.min() < 0 or tokens.max() >= cfg.vocab_size:
        raise ValueError("token id outside vocabulary")

    h = params["tok_emb"][tokens] + params["pos_emb"][:t]
    causal = np.where(np.triu(np.ones((t, t), dtype=bool), k=1), -np.inf, 0.0)
    scale = 1.0 / math.sqrt(cfg.d_model // cfg.n_heads)

    layers = []
    for i in range(cfg.n_layers):
        p = f"h{i}."
        x_in = h
        a, ln1_cache = _layer_norm(h, params[p + "ln1.g"], params[p + "ln1.b"])
        q = a @ params[p + "attn.wq"] + params[p + "attn.bq"]
        k = a @ params[p + "attn.wk"] + params[p + "attn.bk"]
        v = a @ params[p + "attn.wv"] + params[p + "attn.bv"]
        qh, kh, vh = (_split_heads(x, cfg.n_heads) for x in (q, k, v))
        scores = qh @ kh.transpose(0, 1, 3, 2) * scale + causal
        scores -= scores.max(axis=-1, keepdims=True)
        e = np.exp(scores)
        attn = e / e.sum(axis=-1, keepdims=True)
        attn_drop = _dropout_scale(attn.shape, cfg.dropout_rate, train_mode, rng)
        attn_used = attn if attn_drop is None else attn * attn_drop
        ctx = _merge_heads(attn_used @ vh)
        h = h + ctx @ params[p + "attn.wo"] + params[p + "attn.bo"]

        x_mid = h
        m, ln2_cache = _layer_norm(h, params[p + "ln2.g"], params[p + "ln2.b"])
        f1 = m @ params[p + "ffn.w1"] + params[p + "ffn.b1"]
        g1 = _gelu(f1)
        ffn_drop = _dropout_scale(g1.shape, cfg.dropout_rate, train_mode, rng)
        g1_used = g1 if ffn_drop is None else g1 * ffn_drop
        h = h + g1_used @ params[p + "ffn.w2"] + params[p + "ffn.b2"]

        layers.append(
            dict(
                x_in=x_in, a=a, ln1=ln1_cache, qh=qh, kh=kh, vh=vh,
                attn=attn, attn_drop=attn_drop, attn_used=attn_used,
                ctx=ctx, x_mid=x_mid, m=m, ln2=ln2_cache,
                f1=f1, g1=g1, ffn_drop=ffn_drop, g1_used=g1_used,
            )
        )

    last_hidden = h
    z, lnf_cache = _layer_norm(h, params["lnf.g"], params["lnf.b"])
    logits = z @ params["w_out"] + params["b_out"]
    cache = dict(tokens=tokens, layers=layers, z=z, lnf=lnf_cache, scale=scale)
    return logits, last_hidden, cache


def backward_batch(params: dict, cfg: ModelConfig, cache: dict, dlogits: np.ndarray) -> dict:
    tokens = cache["tokens"]
    b, t = tokens.shape
    grads = {}

    def lin_back(x, w_name, dy):
        d_in = dy @ params[w_name].T
        grads[w_name] = x.reshape(-1, x.shape[-1]).T @ dy.reshape(-1, dy.shape[-1])
        grads[_bias_name(w_name)] = dy.sum(axis=(0, 1))
        return d_in

    z = cache["z"]
    dz = lin_back(z, "w_out", dlogits)
    dh, grads["lnf.g"], grads["lnf.b"] = _layer_norm_backward(dz, params["lnf.g"], cache["lnf"])

    for i in reversed(range(cfg.n_layers)):
        p = f"h{i}."
        c = cache["layers"][i]

        # FFN branch
        dg1_used = lin_back(c["g1_used"], p + "ffn.w2", dh)
        dg1 = dg1_used if c["ffn_drop"] is None else dg1_used * c["ffn_drop"]
        df1 = dg1 * _gelu_grad(c["f1"])
        dm = lin_back(c["m"], p + "ffn.w1", df1)
        dx_mid, grads[p + "ln2.g"], grads[p + "ln2.b"] = _layer_norm_backward(
            dm, params[p + "ln2.g"], c["ln2"]
        )
        dh = dh + dx_mid

        # attention branch
        dctx = lin_back(c["ctx"], p + "attn.wo", dh)
        dctx_h = _split_heads(dctx, cfg.n_heads)
        d_attn_used = dctx_h @ c["vh"].transpose(0, 1, 3, 2)
        dvh = c["attn_used"].transpose(0, 1, 3, 2) @ dctx_h
        d_attn = d_attn_used if c["attn_drop"] is None else d_attn_used * c["attn_drop"]
        attn = c["attn"]
        dscores = attn * (d_attn - (d_attn * attn).sum(axis=-1, keepdims=True))
        dqh = dscores @ c["kh"] * cache["scale"]
        dkh = dscores.transpose(0, 1, 3, 2) @ c["qh"] * cache["scale"]
        dq, dk, dv = (_merge_heads(x) for x in (dqh, dkh, dvh))
        da = lin_back(c["a"], p + "attn.wq", dq)
        da += lin_back(c["a"], p + "attn.wk", dk)
        da += lin_back(c["a"], p + "attn.wv", dv)
        dx_in, grads[p + "ln1.g"], grads[p + "ln1.b"] = _layer_norm_backward(
            da, params[p + "ln1.g"], c["ln1"]
        )
        dh = dh + dx_in

    grads["pos_emb"] = np.zeros_like(params["pos_emb"])
    grads["pos_emb"][:t] = dh.sum(axis=0)
    grads["tok_emb"] = np.zeros_like(params["tok_emb"])
    np.add.at(grads["tok_emb"], tokens.reshape(-1), dh.reshape(-1, dh.shape[-1]))
    return grads


def _bias_name(w_name: str) -> str:
    head, _, leaf = w_name.rpartition(".")
    mapping = {"wq": "bq", "wk": "bk", "wv": "bv", "wo": "bo", "w1": "b1", "w2": "b2", "w_out": "b_out"}
    leaf = mapping[leaf if head else w_name]
    return f"{head}.{leaf}" if head else leaf


def _log_softmax(logits):
    mx = logits.max(axis=-1, keepdims=True)
    return logits - mx - np.log(np.exp(logits - mx).sum(axis=-1, keepdims=True))


def masked_positions(loss_mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mask = np.asarray(loss_mask)
    rows, cols = np.nonzero(mask)
    if rows.size == 0:
        raise ValueError("loss mask selects no positions")
    if (cols == 0).any():
        raise ValueError("position 0 cannot be a prediction target (no predecessor)")
    return rows, cols


def loss_and_grads_batch(
    params: dict,
    tokens: np.ndarray,
    loss_mask: np.ndarray,
    cfg: ModelConfig,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[float, dict]:
    """Masked next-token cross-entropy, averaged over mask=1 positions.

    loss_mask[b, t] = 1 scores the model's prediction at t-1 against
    tokens[b, t].
    """
    tokens = np.asarray(tokens, dtype=np.int64)
    rows, cols = masked_positions(loss_mask)
    logits, _, cache = forward_batch(params, tokens, cfg, train_mode, rng)
    logp = _log_softmax(logits)
    n = rows.size
    targets = tokens[rows, cols]
    loss = -float(logp[rows, cols - 1, targets].sum()) / n

    dlogits = np.zeros_like(logits)
    probs = np.exp(logp[rows, cols - 1, :])
    dlogits[rows, cols - 1, :] = probs / n
    dlogits[rows, cols - 1, targets] -= 1.0 / n
    grads = backward_batch(params, cfg, cache, dlogits)
    return loss, grads


def forward(
    params: dict,
    tokens,
    cfg: ModelConfig,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
):
    """Single-sequence forward; returns (logits T*V, last_hidden T*d)."""
    logits, hidden, _ = forward_batch(
        params, np.asarray(tokens, dtype=np.int64)[None, :], cfg, train_mode, rng
    )
    return logits[0], hidden[0]


def loss_and_grads(
    params: dict,
    tokens,
    loss_mask,
    cfg: ModelConfig,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[float, dict]:
    return loss_and_grads_batch(
        params,
        np.asarray(tokens, dtype=np.int64)[None, :],
        np.asarray(loss_mask, dtype=np.int64)[None, :],
        cfg,
        train_mode,
        rng,
    )
