"""Distance metric and lens computations.

The metric is variance-normalized Euclidean: squared coordinate differences
divided by per-column population variance, with zero-variance columns
excluded entirely (an epsilon floor would silently dominate the sum; skipping
keeps the function total and order-independent).

The lens is PCA computed through the n x n Gram matrix of centered rows.
With many more features than images the d x d covariance is infeasible, but
the nonzero spectra of X.Xt and Xt.X agree, so scores and eigenvalues come
out of the small eigenproblem. Work is accumulated in float64 over column
blocks to keep memory bounded at wide-matrix scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.spatial.distance import pdist

from .dataset import FeatureMatrix
from .errors import BadK, DegenerateData, DimensionMismatch

_BLOCK_COLS = 8192


@dataclass(frozen=True)
class ColumnStats:
    means: np.ndarray       # (d,) float64
    variances: np.ndarray   # (d,) float64, population (divisor n)
    active_mask: np.ndarray  # (d,) bool, False where variance == 0

    @property
    def n_cols(self) -> int:
        return self.means.shape[0]


@dataclass(frozen=True)
class LensValues:
    values: np.ndarray              # (n, k) float64, columns zero-mean
    explained_variance: np.ndarray  # (k,) non-increasing

    def __post_init__(self):
        vals = self.values
        ev = self.explained_variance
        if vals.ndim != 2 or vals.shape[1] < 1:
            raise BadK(f"lens values must be n x k with k >= 1, got {vals.shape}")
        scale = max(float(np.abs(vals).max(initial=0.0)), 1.0)
        if np.abs(vals.mean(axis=0)).max(initial=0.0) > 1e-6 * scale:
            raise DegenerateData("lens columns must be zero-mean")
        if any(ev[i] < ev[i + 1] for i in range(len(ev) - 1)):
            raise BadK("explained_variance must be non-increasing")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def k(self) -> int:
        return self.values.shape[1]


def column_stats(m: FeatureMatrix) -> ColumnStats:
    """Per-column means and population variances, flagging constant columns."""
    x = m.values
    n, d = x.shape
    means = np.zeros(d)
    variances = np.zeros(d)
    for lo in range(0, d, _BLOCK_COLS):
        hi = min(lo + _BLOCK_COLS, d)
        blk = x[:, lo:hi].astype(np.float64)
        mu = blk.mean(axis=0)
        means[lo:hi] = mu
        variances[lo:hi] = np.square(blk - mu).mean(axis=0)
    return ColumnStats(means=means, variances=variances, active_mask=variances > 0.0)


def vne_distance(x, y, stats: ColumnStats) -> float:
    """sqrt of sum over active columns of (x-y)^2 / column variance."""
    xv = np.asarray(x, dtype=np.float64).reshape(-1)
    yv = np.asarray(y, dtype=np.float64).reshape(-1)
    if xv.shape[0] != stats.n_cols or yv.shape[0] != stats.n_cols:
        raise DimensionMismatch(
            f"vectors of length {xv.shape[0]}/{yv.shape[0]} against {stats.n_cols} columns"
        )
    mask = stats.active_mask
    diff = xv[mask] - yv[mask]
    return float(np.sqrt(np.sum(diff * diff / stats.variances[mask])))


def pairwise_distances(points, m: FeatureMatrix, stats: ColumnStats) -> np.ndarray:
    """Condensed distance matrix over the given row indices (pairs i<j)."""
    idx = np.asarray(points, dtype=np.intp)
    if m.n_cols != stats.n_cols:
        raise DimensionMismatch(f"matrix has {m.n_cols} columns, stats {stats.n_cols}")
    n = idx.shape[0]
    if n < 2:
        return np.empty(0)
    mask = stats.active_mask
    if not mask.any():
        return np.zeros(n * (n - 1) // 2)
    rows = m.values[idx][:, mask].astype(np.float64)
    return pdist(rows, metric="seuclidean", V=stats.variances[mask])


def _centered_gram(x: np.ndarray, means: np.ndarray) -> np.ndarray:
    n, d = x.shape
    gram = np.zeros((n, n))
    for lo in range(0, d, _BLOCK_COLS):
        hi = min(lo + _BLOCK_COLS, d)
        blk = x[:, lo:hi].astype(np.float64) - means[lo:hi]
        gram += blk @ blk.T
    return gram


def pca_lens(m: FeatureMatrix, k: int = 2) -> LensValues:
    """Project mean-centered rows onto the top-k principal directions.

    Scores are recovered from the Gram eigenpairs: if G u = lam u then the
    unit principal direction is Xt u / sqrt(lam) and the score column is
    sqrt(lam) u. Each component's sign is fixed so its largest-magnitude
    feature loading is positive, making output stable across runs.
    """
    x = m.values
    n, d = x.shape
    if n < 2:
        raise BadK(f"need at least 2 rows, got {n}")
    if not 1 <= k <= min(n - 1, d):
        raise BadK(f"k={k} outside [1, min(n-1, d)] = [1, {min(n - 1, d)}]")

    means = np.zeros(d)
    for lo in range(0, d, _BLOCK_COLS):
        hi = min(lo + _BLOCK_COLS, d)
        means[lo:hi] = x[:, lo:hi].astype(np.float64).mean(axis=0)

    gram = _centered_gram(x, means)
    total = float(np.trace(gram))
    if total <= 0.0:
        raise DegenerateData("all rows are identical")

    eigvals, eigvecs = scipy.linalg.eigh(gram, subset_by_index=[n - k, n - 1])
    order = np.argsort(eigvals)[::-1]  # eigh returns ascending
    eigvals = np.maximum(eigvals[order], 0.0)
    eigvecs = eigvecs[:, order]

    values = np.empty((n, k))
    tiny = 1e-12 * max(total, 1.0)
    for j in range(k):
        lam = eigvals[j]
        u = eigvecs[:, j]
        if lam <= tiny:
            values[:, j] = 0.0
            continue
        # loading vector in feature space, only needed to pin the sign
        load = np.zeros(d)
        for lo in range(0, d, _BLOCK_COLS):
            hi = min(lo + _BLOCK_COLS, d)
            blk = x[:, lo:hi].astype(np.float64) - means[lo:hi]
            load[lo:hi] = blk.T @ u
        if load[int(np.argmax(np.abs(load)))] < 0.0:
            u = -u
        values[:, j] = np.sqrt(lam) * u

    return LensValues(values=values, explained_variance=eigvals / n)
