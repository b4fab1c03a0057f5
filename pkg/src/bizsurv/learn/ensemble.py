"""Equal-weight majority voting and the feature-family ablation grid."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np
import pandas as pd

from .._util import derive_seed
from .dataset import Dataset, assemble_dataset, stratified_split
from .metrics import roc_auc
from .models import TrainedModel, predict_proba, train_classifier
from .smote import oversample

log = logging.getLogger(__name__)

FAMILIES = ("G", "U", "A", "L")
FAMILY_NAMES = {"G": "geography", "U": "user mobility", "A": "business attributes", "L": "linguistic"}

# Row label -> feature families, in the published table order.
ABLATION_ROWS: tuple[tuple[str, tuple[str, ...]], ...] = (
    ("G", ("G",)),
    ("U", ("U",)),
    ("A", ("A",)),
    ("L", ("L",)),
    ("GU", ("G", "U")),
    ("ALL", ("G", "U", "A", "L")),
    ("-GU", ("A", "L")),
    ("-G", ("U", "A", "L")),
    ("-U", ("G", "A", "L")),
    ("-A", ("G", "U", "L")),
    ("-L", ("G", "U", "A")),
)


def parse_families(spec: str) -> tuple[str, ...]:
    """'GU' -> ('G', 'U'); 'ALL' -> all four; '-G' -> the other three."""
    s = spec.strip().upper()
    if s == "ALL":
        return FAMILIES
    if s.startswith("-"):
        drop = set(s[1:])
        if not drop <= set(FAMILIES):
            raise ValueError(f"unknown feature family in {spec!r}")
        return tuple(f for f in FAMILIES if f not in drop)
    if not s or not set(s) <= set(FAMILIES):
        raise ValueError(f"unknown feature family in {spec!r}")
    return tuple(f for f in FAMILIES if f in s)


@dataclass(frozen=True)
class VoteResult:
    labels: np.ndarray
    mean_proba: np.ndarray
    votes: np.ndarray


def majority_vote(models: Sequence[TrainedModel], X) -> VoteResult:
    """Equal-weight vote; even splits go to the side of the mean probability.

    ``X`` is one matrix shared by all models, or one matrix per model.
    """
    if len(models) < 2:
        raise ValueError("majority_vote needs at least two models")
    inputs = list(X) if isinstance(X, (list, tuple)) else [X] * len(models)
    if len(inputs) != len(models):
        raise ValueError("one input matrix per model expected")
    probs = np.vstack([predict_proba(m, x) for m, x in zip(models, inputs)])
    votes = (probs >= 0.5).astype(int)
    mean = probs.mean(axis=0)
    yes = votes.sum(axis=0)
    no = len(models) - yes
    labels = np.where(yes > no, 1, np.where(no > yes, 0, (mean >= 0.5).astype(int)))
    return VoteResult(labels, mean, votes)


@dataclass(frozen=True)
class AblationConfig:
    kinds: tuple[str, ...] = ("GBDT", "MLP")
    test_fraction: float = 0.2
    smote: bool = True
    smote_k: int = 5
    smote_amount: float = 1.0
    hyper: Mapping[str, Any] = field(default_factory=dict)


@dataclass
class FamilyFit:
    family: str
    train: Dataset
    test: Dataset
    models: dict[str, TrainedModel]
    test_proba: dict[str, np.ndarray]
    smote_info: dict


def common_ids(tables: Mapping[str, pd.DataFrame], labels: pd.Series, families: Sequence[str]) -> list[str]:
    ids = set(labels.index)
    for f in families:
        ids &= set(tables[f].index)
    return sorted(ids)


def split_ids(ids: Sequence[str], labels: pd.Series, test_fraction: float, seed: int) -> tuple[list[str], list[str]]:
    d = Dataset(tuple(ids), np.zeros((len(ids), 0)), labels.loc[list(ids)].to_numpy().astype(int), ())
    train, test = stratified_split(d, test_fraction, seed)
    return list(train.ids), list(test.ids)


def fit_family(
    family: str,
    tables: Mapping[str, pd.DataFrame],
    labels: pd.Series,
    train_ids: Sequence[str],
    test_ids: Sequence[str],
    config: AblationConfig,
    seed: int,
) -> FamilyFit:
    """Train every configured model kind on one feature family (SMOTE on train only)."""
    lab = labels.loc[list(train_ids) + list(test_ids)]
    full = assemble_dataset({family: tables[family]}, lab, [family])
    pos = {bid: i for i, bid in enumerate(full.ids)}
    train = full.take([pos[i] for i in train_ids], "train")
    test = full.take([pos[i] for i in test_ids], "test")
    X, y, info = train.X, train.y, {"synthetic": 0}
    if config.smote:
        rng = np.random.default_rng(derive_seed(seed, "smote", family))
        X, y, info = oversample(train.X, train.y, config.smote_amount, config.smote_k, rng)
    fit_on = Dataset(tuple(f"row{i}" for i in range(len(y))), X, y, train.columns, "train")
    models, probs = {}, {}
    for kind in config.kinds:
        m = train_classifier(kind, fit_on, config.hyper.get(kind), derive_seed(seed, "model", family, kind))
        models[kind] = m
        probs[kind] = predict_proba(m, test)
    return FamilyFit(family, train, test, models, probs, info)


@dataclass
class AblationResult:
    table: pd.DataFrame
    fits: dict[str, FamilyFit]
    test_labels: np.ndarray
    n_train: int
    n_test: int
    skipped: list[str]

    def to_csv(self) -> str:
        return self.table.to_csv(float_format="%.6f", lineterminator="\n")


def ablation_table(
    test_proba: Mapping[str, Mapping[str, np.ndarray]],
    y_test: np.ndarray,
    kinds: Sequence[str],
) -> tuple[pd.DataFrame, list[str]]:
    """Ablation grid from per-family test probabilities ``test_proba[family][kind]``.

    Multi-family rows score the mean probability of their family models.
    Rows needing a missing family are skipped with a warning.
    """
    rows, index, skipped = [], [], []
    for name, fams in ABLATION_ROWS:
        missing = [f for f in fams if f not in test_proba]
        if missing:
            log.warning("ablation row %s skipped: missing %s", name, missing)
            skipped.append(name)
            continue
        rows.append([roc_auc(np.mean([test_proba[f][k] for f in fams], axis=0), y_test).auc for k in kinds])
        index.append(name)
    table = pd.DataFrame(rows, index=pd.Index(index, name="features"), columns=list(kinds))
    return table, skipped


def run_ablation(
    tables: Mapping[str, pd.DataFrame],
    labels: Mapping[str, int] | pd.Series,
    config: AblationConfig = AblationConfig(),
    seed: int = 0,
) -> AblationResult:
    """AUC of every configured model kind for each row of the ablation grid.

    Single-family rows score one model; multi-family rows score the
    equal-weight ensemble of the per-family models by mean probability.
    All rows share one stratified split over restaurants present in every
    available table.
    """
    labels = pd.Series(labels).astype(int)
    available = [f for f in FAMILIES if f in tables]
    if not available:
        raise ValueError("no feature tables given")
    for f in FAMILIES:
        if f not in tables:
            log.warning("feature table %s missing; rows using it are skipped", f)
    ids = common_ids(tables, labels, available)
    train_ids, test_ids = split_ids(ids, labels, config.test_fraction, derive_seed(seed, "split"))
    fits = {f: fit_family(f, tables, labels, train_ids, test_ids, config, seed) for f in available}
    y_test = labels.loc[test_ids].to_numpy()

    table, skipped = ablation_table({f: fits[f].test_proba for f in fits}, y_test, config.kinds)
    return AblationResult(table, fits, y_test, len(train_ids), len(test_ids), skipped)
