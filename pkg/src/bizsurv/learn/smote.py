"""SMOTE oversampling of the minority class."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SmoteResult:
    rows: np.ndarray
    seed_index: np.ndarray
    neighbor_index: np.ndarray
    gap: np.ndarray
    k: int


def nearest_neighbors(Z: np.ndarray, k: int, chunk: int = 512) -> np.ndarray:
    """Indices of the k nearest other rows of ``Z`` (Euclidean), ties by index."""
    n = len(Z)
    sq = (Z**2).sum(axis=1)
    out = np.empty((n, k), dtype=np.int64)
    for start in range(0, n, chunk):
        stop = min(n, start + chunk)
        d = sq[start:stop, None] + sq[None, :] - 2.0 * Z[start:stop] @ Z.T
        np.maximum(d, 0.0, out=d)
        d[np.arange(stop - start), np.arange(start, stop)] = np.inf
        out[start:stop] = np.argsort(d, axis=1, kind="stable")[:, :k]
    return out


def smote(
    minority: np.ndarray,
    n_synthetic: int,
    k: int = 5,
    rng: np.random.Generator | None = None,
    scale: np.ndarray | None = None,
) -> SmoteResult:
    """Generate ``n_synthetic`` rows by interpolating toward minority neighbours.

    Each new row is ``x + u * (x_nn - x)`` with ``u ~ U[0, 1]`` and ``x_nn``
    one of the ``k`` nearest minority rows of seed ``x``. Neighbours are found
    on features divided by ``scale`` (per-column standard deviation of the
    minority rows if omitted).
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    X = np.asarray(minority, dtype=float)
    n = len(X)
    if n < 2:
        raise ValueError("SMOTE needs at least two minority rows")
    if n <= k:
        log.warning("SMOTE: %d minority rows <= k=%d; using k=%d", n, k, n - 1)
        k = n - 1
    if scale is None:
        std = X.std(axis=0)
        scale = np.where(std > 0, std, 1.0)
    nn = nearest_neighbors(X / scale, k)
    seeds = rng.integers(0, n, size=n_synthetic)
    pick = nn[seeds, rng.integers(0, k, size=n_synthetic)]
    gap = rng.random(n_synthetic)
    rows = X[seeds] + gap[:, None] * (X[pick] - X[seeds])
    return SmoteResult(rows, seeds, pick, gap, k)


def oversample(
    X: np.ndarray,
    y: np.ndarray,
    amount: float = 1.0,
    k: int = 5,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, np.ndarray, dict]:
    """Append SMOTE rows until minority/majority reaches ``amount``.

    Neighbour search uses the standard deviation of all of ``X``. Apply to
    the training fold only.
    """
    y = np.asarray(y)
    counts = {c: int((y == c).sum()) for c in (0, 1)}
    minority_cls = 0 if counts[0] <= counts[1] else 1
    n_min, n_maj = counts[minority_cls], counts[1 - minority_cls]
    target = int(np.floor(amount * n_maj + 0.5))
    n_new = max(0, target - n_min)
    info = {"minority_class": minority_cls, "before": counts, "synthetic": 0, "k": k}
    if n_new == 0 or n_min < 2:
        if n_new and n_min < 2:
            log.warning("SMOTE skipped: minority class has %d rows", n_min)
        return X, y, info
    std = X.std(axis=0)
    res = smote(X[y == minority_cls], n_new, k, rng, np.where(std > 0, std, 1.0))
    X_out = np.vstack([X, res.rows])
    y_out = np.concatenate([y, np.full(n_new, minority_cls, dtype=y.dtype)])
    info.update(synthetic=n_new, k=res.k, after={c: int((y_out == c).sum()) for c in (0, 1)})
    return X_out, y_out, info
