from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

log = logging.getLogger(__name__)


class DatasetError(ValueError):
    pass


def schema_fingerprint(columns: Sequence[str]) -> str:
    return hashlib.sha256("\x1f".join(columns).encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class Dataset:
    """Feature matrix with row ids, binary labels and a column schema.

    ``y = 1`` is the positive class (Survived, or Positive for sentiment).
    """

    ids: tuple[str, ...]
    X: np.ndarray
    y: np.ndarray
    columns: tuple[str, ...]
    split_tag: str = "all"
    meta: Mapping = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.X.ndim != 2 or self.X.shape[1] != len(self.columns):
            raise DatasetError(f"matrix width {self.X.shape} does not match {len(self.columns)} columns")
        if self.X.shape[0] != len(self.ids) or self.y.shape != (len(self.ids),):
            raise DatasetError("ids, X and y disagree on the number of rows")
        if not np.isfinite(self.X).all():
            raise DatasetError("feature matrix contains NaN or Inf")

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def fingerprint(self) -> str:
        return schema_fingerprint(self.columns)

    def take(self, rows, split_tag: str | None = None) -> "Dataset":
        rows = np.asarray(rows, dtype=int)
        return Dataset(
            tuple(self.ids[i] for i in rows), self.X[rows], self.y[rows], self.columns,
            split_tag or self.split_tag, self.meta,
        )

    def select_columns(self, columns: Sequence[str]) -> "Dataset":
        pos = {c: i for i, c in enumerate(self.columns)}
        idx = [pos[c] for c in columns]
        return Dataset(self.ids, self.X[:, idx], self.y, tuple(columns), self.split_tag, self.meta)

    def class_counts(self) -> dict[int, int]:
        return {0: int((self.y == 0).sum()), 1: int((self.y == 1).sum())}


def assemble_dataset(
    tables: Mapping[str, pd.DataFrame],
    labels: Mapping[str, int] | pd.Series,
    families: Sequence[str],
) -> Dataset:
    """Inner-join the selected feature tables with the labels on business id.

    Columns are prefixed with their family (``"A:price_range"``). Rows lost
    to the join are counted in ``meta["dropped"]``.
    """
    labels = pd.Series(labels, dtype="int64") if not isinstance(labels, pd.Series) else labels.astype("int64")
    missing = [f for f in families if f not in tables]
    if missing:
        raise DatasetError(f"missing feature tables: {missing}")
    frames = []
    for fam in families:
        t = tables[fam]
        frames.append(t.rename(columns=lambda c, fam=fam: f"{fam}:{c}"))
    ids = set(labels.index)
    for t in frames:
        ids &= set(t.index)
    ids = sorted(ids)
    if not ids:
        raise DatasetError("join of feature tables and labels is empty")
    X = np.hstack([t.loc[ids].to_numpy(dtype=float) for t in frames])
    columns = tuple(c for t in frames for c in t.columns)
    dropped = {"labels": len(labels) - len(ids)}
    for fam, t in zip(families, frames):
        dropped[fam] = len(t) - len(ids)
    if dropped["labels"]:
        log.info("assemble_dataset: %d labelled rows dropped by the join", dropped["labels"])
    return Dataset(tuple(ids), X, labels.loc[ids].to_numpy(), columns, "all", {"dropped": dropped, "families": list(families)})


def stratified_split(d: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Shuffle each class with ``seed`` and move round(n_c * test_fraction) rows to test."""
    if not 0 < test_fraction < 1:
        raise DatasetError("test_fraction must lie strictly between 0 and 1")
    rng = np.random.default_rng(seed)
    train_rows, test_rows = [], []
    for cls in (0, 1):
        rows = np.flatnonzero(d.y == cls)
        if len(rows) < 2:
            raise DatasetError(f"class {cls} has {len(rows)} rows; need at least 2 to split")
        rows = rows[rng.permutation(len(rows))]
        n_test = int(np.floor(len(rows) * test_fraction + 0.5))
        n_test = min(max(n_test, 1), len(rows) - 1)
        test_rows.append(rows[:n_test])
        train_rows.append(rows[n_test:])
    train = np.sort(np.concatenate(train_rows))
    test = np.sort(np.concatenate(test_rows))
    return d.take(train, "train"), d.take(test, "test")


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        return cls(mean, np.where(std > 0, std, 1.0))

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.scale
