"""Local surrogate explanations (LIME-style) for tabular and bag-of-words models.

Weights always explain the positive-class probability, so a positive
weight pushes toward Survived (or Positive for the sentiment task).
"""

from __future__ import annotations

import html
import json
import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .learn.dataset import Dataset
from .learn.models import TrainedModel, predict_proba
from .text import preprocess

DEFAULT_TOP_K = 10
TABULAR_SAMPLES = 5000
TEXT_SAMPLES = 3000
RIDGE_ALPHA = 1.0
TEXT_KERNEL_WIDTH = 25.0
FORMATS = ("json", "html")
MODES = ("quartile", "continuous")


class UnexplainableInput(ValueError):
    pass


@dataclass(frozen=True)
class Entry:
    feature: str
    condition: str
    weight: float

    def to_json(self) -> dict:
        return {"feature": self.feature, "condition": self.condition, "weight": self.weight}


@dataclass(frozen=True)
class TabularExplanation:
    instance_id: str
    predicted_class: int
    probability: float
    entries: tuple[Entry, ...]
    local_fit_r2: float
    intercept: float
    kernel_width: float
    num_samples: int
    seed: int
    mode: str = "quartile"
    excluded: tuple[str, ...] = ()

    def to_json(self) -> dict:
        return {
            "type": "tabular",
            "instance_id": self.instance_id,
            "predicted_class": self.predicted_class,
            "probability": self.probability,
            "entries": [e.to_json() for e in self.entries],
            "local_fit_r2": self.local_fit_r2,
            "intercept": self.intercept,
            "config": {"kernel_width": self.kernel_width, "num_samples": self.num_samples,
                       "seed": self.seed, "mode": self.mode, "top_k": len(self.entries)},
            "excluded_constant_features": list(self.excluded),
        }


@dataclass(frozen=True)
class TextExplanation:
    review_id: str
    text: str
    predicted_class: int
    probability: float
    word_weights: tuple[tuple[str, float], ...]
    local_fit_r2: float
    intercept: float
    kernel_width: float
    num_samples: int
    seed: int

    def to_json(self) -> dict:
        return {
            "type": "text",
            "review_id": self.review_id,
            "predicted_class": self.predicted_class,
            "probability": self.probability,
            "word_weights": [[w, v] for w, v in self.word_weights],
            "local_fit_r2": self.local_fit_r2,
            "intercept": self.intercept,
            "config": {"kernel_width": self.kernel_width, "num_samples": self.num_samples,
                       "seed": self.seed, "top_k": len(self.word_weights)},
            "text": self.text,
        }


Predictor = Callable[[np.ndarray], np.ndarray]


def _predictor(model: TrainedModel | Predictor) -> Predictor:
    if isinstance(model, TrainedModel):
        return lambda X: predict_proba(model, X)
    return lambda X: np.asarray(model(X), dtype=float).ravel()


def weighted_ridge(Z: np.ndarray, y: np.ndarray, w: np.ndarray, alpha: float = RIDGE_ALPHA):
    """Ridge fit with an unpenalised intercept under sample weights ``w``.

    Returns (coefficients, intercept, weighted R^2 clipped to [0, 1]).
    """
    sw = w / w.sum()
    z_mean = sw @ Z
    y_mean = float(sw @ y)
    Zc, yc = Z - z_mean, y - y_mean
    A = (Zc * w[:, None]).T @ Zc + alpha * np.eye(Z.shape[1])
    coef = np.linalg.solve(A, (Zc * w[:, None]).T @ yc)
    intercept = y_mean - float(z_mean @ coef)
    resid = yc - Zc @ coef
    ss_tot = float(w @ yc**2)
    if ss_tot <= 1e-300:
        return coef, intercept, 1.0 if float(w @ resid**2) <= 1e-300 else 0.0
    r2 = 1.0 - float(w @ resid**2) / ss_tot
    return coef, intercept, float(min(1.0, max(0.0, r2)))


def _ranked(weights: np.ndarray, k: int) -> np.ndarray:
    order = np.lexsort((np.arange(len(weights)), -np.abs(weights)))
    return order[:k]


def _fmt(v: float) -> str:
    return f"{v:.4g}"


@dataclass(frozen=True)
class _FeatureBins:
    edges: tuple[float, ...]
    categorical: bool


def _feature_bins(col: np.ndarray, categorical: bool) -> _FeatureBins:
    if categorical:
        return _FeatureBins((), True)
    q = np.unique(np.quantile(col, [0.25, 0.5, 0.75]))
    return _FeatureBins(tuple(float(v) for v in q), False)


def _bin_of(values: np.ndarray, fb: _FeatureBins) -> np.ndarray:
    return np.searchsorted(np.asarray(fb.edges), values, side="left")


def _condition(name: str, value: float, fb: _FeatureBins) -> str:
    if fb.categorical:
        return f"{name} = {_fmt(value)}"
    e = fb.edges
    b = int(np.searchsorted(np.asarray(e), value, side="left"))
    if not e:
        return f"{name} = {_fmt(value)}"
    if b == 0:
        return f"{name} <= {_fmt(e[0])}"
    if b == len(e):
        return f"{name} > {_fmt(e[-1])}"
    return f"{_fmt(e[b - 1])} < {name} <= {_fmt(e[b])}"


def explain_tabular(
    model: TrainedModel | Predictor,
    x,
    background: Dataset | np.ndarray,
    k: int = DEFAULT_TOP_K,
    num_samples: int = TABULAR_SAMPLES,
    seed: int = 0,
    *,
    feature_names: Sequence[str] | None = None,
    instance_id: str = "",
    mode: str = "quartile",
    kernel_width: float | None = None,
    ridge_alpha: float = RIDGE_ALPHA,
    categorical: Sequence[str] | None = None,
) -> TabularExplanation:
    """Explain one prediction with a weighted linear surrogate.

    ``mode="quartile"`` perturbs by resampling each feature from the
    background and regresses on "same quartile bin as the instance"
    indicators; features with at most two distinct background values are
    treated as categorical. ``mode="continuous"`` perturbs with Gaussian
    noise scaled by the background standard deviation and regresses on
    standardized offsets from the instance.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    B = background.X if isinstance(background, Dataset) else np.asarray(background, dtype=float)
    if feature_names is None:
        if isinstance(background, Dataset):
            feature_names = background.columns
        elif isinstance(model, TrainedModel):
            feature_names = model.columns
        else:
            feature_names = [f"x{j}" for j in range(B.shape[1])]
    names = list(feature_names)
    x = np.asarray(x, dtype=float).ravel()
    if B.ndim != 2 or len(B) == 0:
        raise ValueError("background must be a nonempty matrix")
    if x.shape[0] != B.shape[1] or len(names) != B.shape[1]:
        raise ValueError("instance, background and feature names disagree on width")
    if num_samples < 2:
        raise ValueError("num_samples must be at least 2")
    f = _predictor(model)
    rng = np.random.default_rng(seed)

    std = B.std(axis=0)
    active = np.flatnonzero(std > 0)
    excluded = tuple(names[j] for j in np.flatnonzero(std == 0))
    d = len(active)
    width = float(kernel_width) if kernel_width is not None else 0.75 * math.sqrt(max(d, 1))
    p0 = float(f(x[None, :])[0])

    samples = np.repeat(x[None, :], num_samples, axis=0)
    conditions: list[str] = []
    if mode == "quartile":
        cat = set(categorical or ())
        bins = []
        for j in active:
            fb = _feature_bins(B[:, j], names[j] in cat or len(np.unique(B[:, j])) <= 2)
            bins.append(fb)
            conditions.append(_condition(names[j], x[j], fb))
        picks = rng.integers(0, len(B), size=(num_samples - 1, d))
        samples[1:, active] = B[picks, active[None, :]]
        Z = np.empty((num_samples, d))
        for c, (j, fb) in enumerate(zip(active, bins)):
            if fb.categorical:
                Z[:, c] = samples[:, j] == x[j]
            else:
                Z[:, c] = _bin_of(samples[:, j], fb) == _bin_of(x[j : j + 1], fb)[0]
        dist2 = (1.0 - Z).sum(axis=1)
    else:
        scale = std[active]
        noise = rng.standard_normal((num_samples - 1, d))
        samples[1:, active] = x[active] + noise * scale
        Z = np.vstack([np.zeros((1, d)), noise])
        conditions = [f"{names[j]} = {_fmt(x[j])}" for j in active]
        dist2 = (Z**2).sum(axis=1)

    y = f(samples)
    w = np.exp(-dist2 / width**2)
    if d == 0:
        coef, intercept, r2 = np.zeros(0), float(np.average(y, weights=w)), 1.0
    else:
        coef, intercept, r2 = weighted_ridge(Z, y, w, ridge_alpha)
    top = _ranked(coef, k)
    entries = tuple(Entry(names[active[c]], conditions[c], float(coef[c])) for c in top)
    return TabularExplanation(
        instance_id, int(p0 >= 0.5), p0, entries, r2, float(intercept), width, num_samples, seed, mode, excluded,
    )


def vocabulary_from_columns(columns: Sequence[str]) -> list[str]:
    """Vocabulary terms from model columns such as ``L:bow__great``."""
    out = []
    for c in columns:
        tail = c.split(":", 1)[-1]
        out.append(tail[len("bow__"):] if tail.startswith("bow__") else tail)
    return out


def explain_text(
    model: TrainedModel | Predictor,
    text: str,
    k: int = DEFAULT_TOP_K,
    num_samples: int = TEXT_SAMPLES,
    seed: int = 0,
    *,
    vocabulary: Sequence[str] | None = None,
    review_id: str = "",
    kernel_width: float = TEXT_KERNEL_WIDTH,
    ridge_alpha: float = RIDGE_ALPHA,
) -> TextExplanation:
    """Explain a bag-of-words prediction for ``text`` by masking distinct tokens.

    Each sample keeps every distinct in-vocabulary token with probability
    1/2; the model scores the masked counts. Samples are weighted by
    ``exp(-d^2 / w^2)`` with ``d`` the cosine distance (times 100) between
    the kept-token indicator and the full text.
    """
    if vocabulary is None:
        if not isinstance(model, TrainedModel):
            raise ValueError("vocabulary is required for callable models")
        vocabulary = vocabulary_from_columns(model.columns)
    index = {t: i for i, t in enumerate(vocabulary)}
    tokens = [t for t in preprocess(text) if t in index]
    distinct = list(dict.fromkeys(tokens))
    if not distinct:
        raise UnexplainableInput("unexplainable input: no in-vocabulary tokens")
    counts = np.zeros((len(distinct), len(vocabulary)))
    for t in tokens:
        counts[distinct.index(t), index[t]] += 1
    f = _predictor(model)
    rng = np.random.default_rng(seed)
    m = len(distinct)
    masks = (rng.random((num_samples, m)) < 0.5).astype(float)
    masks[0] = 1.0
    X = masks @ counts
    y = f(X)
    kept = masks.sum(axis=1)
    cos = np.where(kept > 0, kept / np.sqrt(np.maximum(kept, 1) * m), 0.0)
    dist = (1.0 - cos) * 100.0
    w = np.exp(-(dist**2) / kernel_width**2)
    coef, intercept, r2 = weighted_ridge(masks, y, w, ridge_alpha)
    top = _ranked(coef, k)
    p0 = float(y[0])
    return TextExplanation(
        review_id, text, int(p0 >= 0.5), p0, tuple((distinct[i], float(coef[i])) for i in top),
        r2, float(intercept), kernel_width, num_samples, seed,
    )


# ---------------------------------------------------------------- rendering

POSITIVE_COLOR = "#2ca02c"
NEGATIVE_COLOR = "#d62728"
_NO_FEATURES = "no salient features"


def _salient(e) -> list[tuple[str, float]]:
    pairs = [(x.condition, x.weight) for x in e.entries] if isinstance(e, TabularExplanation) else list(e.word_weights)
    return [(n, w) for n, w in pairs if abs(w) > _floor(pairs)]


def _floor(pairs) -> float:
    """Weights below 1% of the largest (or numerically zero) are not shown."""
    top = max((abs(w) for _, w in pairs), default=0.0)
    return max(1e-9, 0.01 * top)


def _svg_bars(pairs: list[tuple[str, float]]) -> str:
    row_h, label_w, bar_w = 22, 320, 260
    h = row_h * len(pairs) + 10
    scale = max(abs(w) for _, w in pairs)
    mid = label_w + bar_w / 2
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{label_w + bar_w + 80}" height="{h}">']
    for i, (name, w) in enumerate(pairs):
        y = 5 + i * row_h
        length = (bar_w / 2) * abs(w) / scale
        x0 = mid if w >= 0 else mid - length
        color = POSITIVE_COLOR if w >= 0 else NEGATIVE_COLOR
        parts.append(f'<text x="{label_w - 6}" y="{y + 15}" text-anchor="end" font-size="12">{html.escape(name)}</text>')
        parts.append(f'<rect x="{x0:.1f}" y="{y + 3}" width="{length:.1f}" height="{row_h - 6}" fill="{color}"/>')
        parts.append(f'<text x="{label_w + bar_w + 4}" y="{y + 15}" font-size="11">{w:+.4f}</text>')
    parts.append(f'<line x1="{mid}" y1="0" x2="{mid}" y2="{h}" stroke="#444"/>')
    parts.append("</svg>")
    return "\n".join(parts)


def _highlight(text: str, weights: Mapping[str, float]) -> str:
    floor = _floor(weights.items())
    out = []
    for word in text.split():
        toks = preprocess(word)
        w = weights.get(toks[0]) if len(toks) == 1 else None
        if w is None or abs(w) <= floor:
            out.append(html.escape(word))
        else:
            color = POSITIVE_COLOR if w > 0 else NEGATIVE_COLOR
            out.append(f'<mark style="background:{color};color:white" title="{w:+.4f}">{html.escape(word)}</mark>')
    return " ".join(out)


def render_explanation(e: TabularExplanation | TextExplanation, format: str = "json") -> str:
    """JSON or a standalone HTML page (bar chart or highlighted text)."""
    if format not in FORMATS:
        raise ValueError(f"unsupported format {format!r}; supported formats: {', '.join(FORMATS)}")
    if format == "json":
        return json.dumps(e.to_json(), indent=2, sort_keys=True) + "\n"
    pairs = _salient(e)
    if isinstance(e, TabularExplanation):
        title = f"Explanation for {html.escape(e.instance_id or 'instance')}"
        body = _svg_bars(pairs) if pairs else f"<p>{_NO_FEATURES}</p>"
    else:
        title = f"Explanation for {html.escape(e.review_id or 'text')}"
        weights = dict(e.word_weights)
        body = f"<p>{_highlight(e.text, weights)}</p>"
        body += _svg_bars(pairs) if pairs else f"<p>{_NO_FEATURES}</p>"
    label = "Survived / Positive" if e.predicted_class == 1 else "Dead / Negative"
    return (
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\">"
        f"<title>{title}</title></head><body>\n<h2>{title}</h2>\n"
        f"<p>Predicted class: {label} (p = {e.probability:.3f}); local fit R&#178; = {e.local_fit_r2:.3f}</p>\n"
        f"{body}\n</body></html>\n"
    )
