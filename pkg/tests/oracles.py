"""Independent reference implementations used to check the library.

These deliberately avoid the library's own code paths: the CTC oracle
enumerates every frame labeling, the schedule oracle uses Decimal, the hash
split oracle calls hashlib directly, and the gradient oracle uses central
finite differences.
"""

from __future__ import annotations

import hashlib
import itertools
from decimal import Decimal

import numpy as np


def brute_force_ctc(log_probs: np.ndarray, reference: list[int], blank_id: int = 0):
    """Best log-prob over all frame labelings that collapse to the reference.

    Collapse = merge adjacent repeats, then drop blanks. Returns (best score,
    best labeling) or (None, None) if no labeling collapses correctly.
    """
    t, n_classes = log_probs.shape
    best = None
    best_labeling = None
    for labeling in itertools.product(range(n_classes), repeat=t):
        collapsed = []
        prev = None
        for lab in labeling:
            if lab != prev:
                collapsed.append(lab)
            prev = lab
        collapsed = [c for c in collapsed if c != blank_id]
        if collapsed != list(reference):
            continue
        score = sum(log_probs[i, lab] for i, lab in enumerate(labeling))
        if best is None or score > best:
            best = score
            best_labeling = labeling
    return best, best_labeling


def fd_gradcheck(loss_fn, params: dict[str, np.ndarray], analytic: dict[str, np.ndarray], h: float = 3e-5):
    """Max relative error between analytic grads and central differences.

    Relative error per entry is |a - n| / max(1e-6, |a|, |n|). The floor keeps
    roundoff noise on near-zero gradients (FD noise is ~eps*|loss|/h in
    absolute terms) from registering as a large relative error, while a wrong
    gradient of any visible magnitude still fails. h balances that noise
    against O(h^2) truncation error on high-curvature entries.
    """
    worst = 0.0
    worst_name = None
    for name, tensor in params.items():
        flat = tensor.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn(params)
            flat[i] = orig - h
            down = loss_fn(params)
            flat[i] = orig
            num = (up - down) / (2.0 * h)
            a = a_flat[i]
            rel = abs(a - num) / max(1e-6, abs(a), abs(num))
            if rel > worst:
                worst = rel
                worst_name = f"{name}[{i}]"
    return worst, worst_name


def split_of_index(index: int) -> str:
    h = int(hashlib.sha256(str(index).encode("utf-8")).hexdigest()[:8], 16) % 100
    return "train" if h < 90 else "dev" if h < 95 else "test"


def decimal_schedule(step: int, p0: str = "0.9", delta: str = "0.1", interval: int = 300) -> float:
    p = Decimal(p0) - Decimal(delta) * (step // interval)
    return float(max(p, Decimal(0)))
