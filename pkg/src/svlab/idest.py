"""Maximum-likelihood intrinsic-dimension estimation.

For each point x with sorted nearest-neighbor distances T_1 <= ... <= T_k,

    m_k(x) = [ 1/(k-1) * sum_{j=1}^{k-1} ln(T_k(x) / T_j(x)) ]^{-1}

The estimate inverts per point, averages over points, then averages the
per-k values over k in [k1, k2]. Nearest neighbors are found by exact
brute-force search (chunked so the distance matrix never fully
materializes).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, NumericsError
from .rng import Rng

logger = logging.getLogger(__name__)

_JITTER_SEED = 0x1D_E57

_CHUNK = 512


@dataclass
class IdEstimate:
    value: float
    k1: int
    k2: int
    per_k: list
    n_used: int
    jitter_applied: bool = False


def _as_cloud(points) -> np.ndarray:
    a = np.asarray(points, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 2:
        raise ContractError(f"point cloud must be [n>=2, d], got {a.shape}")
    return a


def prepare_cloud(points, tol: float = 1e-12):
    """Jitter duplicate points so all pairwise distances are positive.

    Points whose nearest neighbor lies within ``tol`` get a deterministic
    perturbation of 1e-9 x cloud diameter. Returns (points, flag).
    """
    a = _as_cloud(points).copy()
    nn = _knn_distances(a, 1)[:, 0]
    dup = nn <= tol
    if not np.any(dup):
        return a, False
    diameter = float(np.linalg.norm(a.max(axis=0) - a.min(axis=0)))
    if diameter == 0.0:
        diameter = 1.0
    rng = Rng(_JITTER_SEED)
    noise = rng.uniform(-1.0, 1.0, size=a.shape) * (1e-9 * diameter)
    a[dup] += noise[dup]
    logger.warning("jittered %d duplicate points (1e-9 x diameter)",
                   int(dup.sum()))
    return a, True


def _knn_distances(a: np.ndarray, k: int) -> np.ndarray:
    """Sorted distances to the k nearest neighbors of every point."""
    n = a.shape[0]
    sq = np.einsum("ij,ij->i", a, a)
    out = np.empty((n, k))
    for lo in range(0, n, _CHUNK):
        hi = min(lo + _CHUNK, n)
        d2 = sq[lo:hi, None] + sq[None, :] - 2.0 * (a[lo:hi] @ a.T)
        np.maximum(d2, 0.0, out=d2)
        d2[np.arange(lo, hi) - lo, np.arange(lo, hi)] = np.inf  # drop self
        part = np.partition(d2, k - 1, axis=1)[:, :k]
        part.sort(axis=1)
        out[lo:hi] = np.sqrt(part)
    return out


def knn(points, query_index: int, k: int) -> np.ndarray:
    """Distances to the k nearest neighbors of one point, self excluded.

    Sorted ascending; ties are broken by point index (stable order).
    """
    a = _as_cloud(points)
    n = a.shape[0]
    if not 0 <= query_index < n:
        raise ContractError(f"query index {query_index} out of range")
    if k >= n:
        raise ContractError(f"k={k} needs at least {k + 1} points, have {n}")
    d = np.linalg.norm(a - a[query_index], axis=1)
    order = np.argsort(d, kind="stable")
    order = order[order != query_index]
    return d[order[:k]]


def mle_id(points, k1: int = 10, k2: int = 20) -> IdEstimate:
    """Double-averaged maximum-likelihood dimension estimate."""
    a = _as_cloud(points)
    n = a.shape[0]
    if not 2 <= k1 <= k2 < n:
        raise ContractError(f"need 2 <= k1 <= k2 < n, got k=[{k1},{k2}], n={n}")
    a, jittered = prepare_cloud(a)
    dists = _knn_distances(a, k2)
    if np.any(dists <= 0.0):
        bad = int(np.argwhere(dists.min(axis=1) <= 0.0)[0][0])
        raise NumericsError(f"zero neighbor distance at point {bad} after jitter")
    logs = np.log(dists)
    csum = np.cumsum(logs, axis=1)
    per_k = []
    for k in range(k1, k2 + 1):
        # sum_{j<k} ln(T_k/T_j) = (k-1) ln T_k - sum_{j<k} ln T_j
        denom = (k - 1) * logs[:, k - 1] - csum[:, k - 2]
        m_k = (k - 1) / denom
        per_k.append(float(m_k.mean()))
    return IdEstimate(value=float(np.mean(per_k)), k1=k1, k2=k2,
                      per_k=per_k, n_used=n, jitter_applied=jittered)


def dof_round(id_value: float) -> int:
    """Round an intrinsic dimension to the nearest even positive integer.

    A second-order system has an even state count, so the estimate maps to
    2 * round(id/2) with halves rounded away from zero.
    """
    if id_value <= 0.0:
        raise ContractError(f"intrinsic dimension must be > 0, got {id_value}")
    return 2 * int(np.floor(id_value / 2.0 + 0.5))
