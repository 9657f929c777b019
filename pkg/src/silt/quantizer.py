"""k-means codebook training and frame quantization into discrete units.

Consecutive duplicate units are preserved: quantize maps m feature frames to
exactly m unit indices, never collapsing repeats.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .artifacts import make_header, read_json, write_json


@dataclass
class Codebook:
    k: int
    dim: int
    centroids: np.ndarray  # (k, dim)
    inertia: float
    inertia_trace: list[float] = field(default_factory=list, repr=False)

    def save(self, path: str, seed: int = 0) -> None:
        payload = {
            "header": make_header(seed, {"kind": "codebook", "k": self.k, "dim": self.dim}),
            "k": self.k,
            "dim": self.dim,
            "centroids": self.centroids.tolist(),
            "inertia": self.inertia,
        }
        write_json(path, payload)

    @classmethod
    def load(cls, path: str) -> "Codebook":
        payload = read_json(path)
        centroids = np.asarray(payload["centroids"], dtype=np.float64)
        return cls(payload["k"], payload["dim"], centroids, float(payload.get("inertia", 0.0)))


@dataclass
class UnitSequence:
    """Discrete unit ids for one utterance; consecutive repeats are kept."""

    units: list[int]
    frame_rate: float = 50.0

    def __len__(self) -> int:
        return len(self.units)


def _sq_dists(features: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # (n, k) squared Euclidean distances, clipped so rounding can't go negative.
    d = (
        np.sum(features * features, axis=1)[:, None]
        - 2.0 * features @ centroids.T
        + np.sum(centroids * centroids, axis=1)[None, :]
    )
    return np.maximum(d, 0.0)


def _kmeans_pp_init(features: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = features.shape[0]
    centroids = np.empty((k, features.shape[1]), dtype=np.float64)
    first = int(rng.integers(0, n))
    centroids[0] = features[first]
    closest = _sq_dists(features, centroids[:1]).ravel()
    for i in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            # All remaining points coincide with chosen centroids; any pick works.
            idx = int(rng.integers(0, n))
        else:
            r = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(closest), r, side="right"))
            idx = min(idx, n - 1)
        centroids[i] = features[idx]
        closest = np.minimum(closest, _sq_dists(features, centroids[i : i + 1]).ravel())
    return centroids


def kmeans_fit(features: np.ndarray, k: int, max_iters: int = 50, seed: int = 0) -> Codebook:
    """Lloyd's algorithm with k-means++ seeding.

    Stops when assignments are unchanged or after max_iters. Empty clusters
    are reseeded to the currently worst-fit point. The per-iteration inertia
    trace is kept on the returned Codebook; it never increases.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise ValueError(f"features must be 2-D, got shape {features.shape}")
    n, dim = features.shape
    if k < 1:
        raise ValueError("k must be >= 1")
    if n < k:
        raise ValueError(f"need at least k={k} points, got {n}")
    if dim < 1:
        raise ValueError("feature dimension must be >= 1")
    if not np.all(np.isfinite(features)):
        raise ValueError("features contain non-finite values")

    rng = np.random.Generator(np.random.PCG64(seed))
    centroids = _kmeans_pp_init(features, k, rng)

    assignments = np.full(n, -1, dtype=np.int64)
    trace: list[float] = []
    for _ in range(max_iters):
        dists = _sq_dists(features, centroids)
        new_assignments = np.argmin(dists, axis=1)  # argmin takes the lowest index on ties
        if np.array_equal(new_assignments, assignments):
            break
        assignments = new_assignments
        for c in range(k):
            mask = assignments == c
            if mask.any():
                centroids[c] = features[mask].mean(axis=0)
        # Reseed empties to the points farthest from their assigned centroid.
        point_err = _sq_dists(features, centroids)[np.arange(n), assignments]
        for c in range(k):
            if not (assignments == c).any():
                worst = int(np.argmax(point_err))
                centroids[c] = features[worst]
                assignments[worst] = c
                point_err[worst] = 0.0
        # Lloyd objective against assigned centroids: non-increasing across
        # iterations even when a reseed happens (the reseeded cluster had no
        # members, so only the moved point's term changes, and it drops to 0).
        trace.append(float(point_err.sum()))

    final = trace[-1] if trace else float(_sq_dists(features, centroids).min(axis=1).sum())
    return Codebook(k=k, dim=dim, centroids=centroids, inertia=final, inertia_trace=trace)


def quantize(codebook: Codebook, features: np.ndarray, frame_rate: float = 50.0) -> UnitSequence:
    """Map each frame to its nearest centroid index (ties -> lowest index).

    Output length equals the number of frames; no deduplication.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.size == 0:
        return UnitSequence(units=[], frame_rate=frame_rate)
    if features.ndim != 2 or features.shape[1] != codebook.dim:
        raise ValueError(
            f"feature dim {features.shape[-1] if features.ndim == 2 else '?'} "
            f"does not match codebook dim {codebook.dim}"
        )
    units = np.argmin(_sq_dists(features, codebook.centroids), axis=1)
    return UnitSequence(units=[int(u) for u in units], frame_rate=frame_rate)
