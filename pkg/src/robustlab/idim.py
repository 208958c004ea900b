"""Neighbor-distance maximum-likelihood intrinsic dimension estimation,
plus synthetic manifold generators that act as its correctness oracle.

For each point the log-ratio of the k-th to the j-th nearest-neighbor
distance yields a local dimension estimate. Two aggregation modes are
offered:

- ``corrected_mean`` (default): average the bias-corrected per-point
  estimates (k-2) / sum_j log(T_k/T_j) over points, then over k. This is
  the behavior of the classic toolbox implementations of the estimator.
- ``inverse``: average the inverse estimates sum_j log(T_k/T_j) / (k-1)
  over points and k, then invert the mean.

Both are scale- and rotation-invariant because only distance ratios enter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, UsageError

AVERAGING_MODES = ("corrected_mean", "inverse")
MANIFOLD_KINDS = ("segment", "disk", "sphere", "gaussian_blob")


@dataclass(frozen=True)
class IdimConfig:
    k1: int = 6
    k2: int = 12
    sample: int = 1000
    seed: int = 0
    average: str = "corrected_mean"

    def __post_init__(self):
        if not (2 <= self.k1 <= self.k2):
            raise UsageError(f"need 2 <= k1 <= k2, got k1={self.k1}, k2={self.k2}")
        if self.sample <= self.k2:
            raise UsageError(f"sample size {self.sample} must exceed k2={self.k2}")
        if self.average not in AVERAGING_MODES:
            raise UsageError(f"unknown averaging mode {self.average!r}")


def _validate_cloud(points: np.ndarray, k2: int) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2:
        raise InputError(f"point cloud must be 2-d (n, D), got shape {pts.shape}")
    n = pts.shape[0]
    if n < k2 + 1:
        raise InputError(f"need at least k2+1={k2 + 1} points, got {n}")
    if len(np.unique(pts, axis=0)) != n:
        raise InputError("point cloud contains duplicate points")
    return pts


def mle_idim(points: np.ndarray, cfg: IdimConfig = IdimConfig()) -> float:
    """Estimate the intrinsic dimension of a point cloud.

    Brute-force O(n^2) Euclidean distances; fine at the intended sample
    size of ~1,000 points.
    """
    pts = _validate_cloud(points, cfg.k2)
    sq = np.sum(pts * pts, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (pts @ pts.T)
    np.maximum(d2, 0.0, out=d2)
    d2.sort(axis=1)
    # columns j = 1..k2 are the squared distances to the j-th neighbor
    log_t = 0.5 * np.log(d2[:, 1:cfg.k2 + 1])
    per_k = []
    for k in range(cfg.k1, cfg.k2 + 1):
        ratio_sum = (k - 1) * log_t[:, k - 1] - log_t[:, :k - 1].sum(axis=1)
        if cfg.average == "corrected_mean":
            per_k.append(np.mean((k - 2) / ratio_sum))
        else:
            per_k.append(np.mean(ratio_sum / (k - 1)))
    if cfg.average == "corrected_mean":
        return float(np.mean(per_k))
    return float(1.0 / np.mean(per_k))


def sample_cloud(data: np.ndarray, cfg: IdimConfig) -> np.ndarray:
    """Draw cfg.sample distinct rows from ``data`` (deduplicated, seeded).

    Duplicate rows in the pool are dropped before sampling so the estimator
    never sees a zero distance.
    """
    pool = np.unique(np.asarray(data, dtype=np.float64), axis=0)
    if pool.shape[0] < cfg.sample:
        raise InputError(f"only {pool.shape[0]} distinct points available, need {cfg.sample}")
    rng = np.random.default_rng(cfg.seed)
    idx = rng.choice(pool.shape[0], size=cfg.sample, replace=False)
    return pool[idx]


def gen_manifold(kind: str, true_dim: int, ambient_dim: int, n: int, seed: int) -> np.ndarray:
    """Points on a known manifold, randomly rotated into the ambient space.

    segment: uniform on a unit interval (true_dim must be 1)
    disk: uniform on a solid true_dim-ball
    sphere: uniform on the true_dim-sphere surface (uses true_dim+1 coords)
    gaussian_blob: standard normal of full rank true_dim
    """
    if kind not in MANIFOLD_KINDS:
        raise UsageError(f"unknown manifold kind {kind!r}")
    if true_dim < 1 or ambient_dim < 1:
        raise UsageError("dimensions must be >= 1")
    if n < 2:
        raise UsageError("need at least 2 points")
    rng = np.random.default_rng(seed)
    if kind == "segment":
        if true_dim != 1:
            raise UsageError("a segment has true_dim 1")
        local = rng.uniform(0.0, 1.0, size=(n, 1))
    elif kind == "disk":
        raw = rng.standard_normal((n, true_dim))
        raw /= np.linalg.norm(raw, axis=1, keepdims=True)
        radii = rng.uniform(0.0, 1.0, size=(n, 1)) ** (1.0 / true_dim)
        local = raw * radii
    elif kind == "sphere":
        local = rng.standard_normal((n, true_dim + 1))
        local /= np.linalg.norm(local, axis=1, keepdims=True)
    else:
        local = rng.standard_normal((n, true_dim))
    coords = local.shape[1]
    if coords > ambient_dim:
        raise UsageError(f"{kind} with true_dim={true_dim} needs {coords} coords, ambient is {ambient_dim}")
    basis, _ = np.linalg.qr(rng.standard_normal((ambient_dim, ambient_dim)))
    return local @ basis[:coords, :]
