"""Review preprocessing, polarity labels, bag-of-words and best/worst review selection."""

from __future__ import annotations

import enum
import hashlib
import string
import unicodedata
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .corpus import ReviewRecord, Snapshot

SEP = "<SEP>"
DEFAULT_VOCAB_SIZE = 1000
STOPWORDS_SHA256 = "4e22be0ad71ae1c41dd7a8f944e851ead671d114edf4faad1ee8c698d2ba5084"


class Polarity(str, enum.Enum):
    POSITIVE = "Positive"
    NEGATIVE = "Negative"
    NEUTRAL = "Neutral"


POLARITY_MAPS: dict[str, dict[int, Polarity]] = {
    # 5 stars is not mentioned by the source mapping; it is positive here.
    "default": {1: Polarity.NEGATIVE, 2: Polarity.NEGATIVE, 3: Polarity.POSITIVE,
                4: Polarity.POSITIVE, 5: Polarity.POSITIVE},
    # Three-star reviews are left out of the sentiment task.
    "drop3": {1: Polarity.NEGATIVE, 2: Polarity.NEGATIVE, 3: Polarity.NEUTRAL,
              4: Polarity.POSITIVE, 5: Polarity.POSITIVE},
}


@lru_cache(maxsize=None)
def stopwords() -> frozenset[str]:
    raw = resources.files("bizsurv.data").joinpath("stopwords.txt").read_bytes()
    digest = hashlib.sha256(raw).hexdigest()
    if digest != STOPWORDS_SHA256:
        raise RuntimeError(f"stop-word list hash mismatch: {digest}")
    return frozenset(w for w in raw.decode("utf-8").split() if w)


def _is_punct(ch: str) -> bool:
    # Unicode punctuation plus ASCII symbols such as ^ and ~; emoji are kept.
    return ch in string.punctuation or unicodedata.category(ch).startswith("P")


def preprocess(text: str, stop: frozenset[str] | None = None) -> list[str]:
    """Lowercase, split on whitespace, strip edge punctuation, drop stop words.

    Interior punctuation survives, so "don't" stays one token.
    """
    stop = stopwords() if stop is None else stop
    out = []
    for raw in text.lower().split():
        start, end = 0, len(raw)
        while start < end and _is_punct(raw[start]):
            start += 1
        while end > start and _is_punct(raw[end - 1]):
            end -= 1
        tok = raw[start:end]
        if tok and tok not in stop and tok != SEP:
            out.append(tok)
    return out


def polarity(stars: int, mapping: str | Mapping[int, Polarity] = "default") -> Polarity:
    table = POLARITY_MAPS[mapping] if isinstance(mapping, str) else mapping
    return table[int(stars)]


@dataclass(frozen=True)
class Vocabulary:
    terms: tuple[str, ...]

    @property
    def index(self) -> dict[str, int]:
        return self._index

    def __post_init__(self):
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.terms)})

    def __len__(self) -> int:
        return len(self.terms)

    def __contains__(self, term: str) -> bool:
        return term in self._index


def build_vocabulary(corpus: Iterable[Sequence[str]], size: int = DEFAULT_VOCAB_SIZE) -> Vocabulary:
    """Top-``size`` tokens by total frequency; ties go to the lexicographically smaller."""
    counts: Counter = Counter()
    for tokens in corpus:
        counts.update(tokens)
    counts.pop(SEP, None)
    if not counts:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return Vocabulary(tuple(t for t, _ in ranked[:size]))


def bow_vector(token_lists: Iterable[Sequence[str]], vocab: Vocabulary) -> np.ndarray:
    """Summed in-vocabulary token counts; out-of-vocabulary tokens are ignored."""
    counts = np.zeros(len(vocab), dtype=np.int64)
    idx = vocab.index
    for tokens in token_lists:
        for t in tokens:
            j = idx.get(t)
            if j is not None:
                counts[j] += 1
    return counts


@dataclass(frozen=True)
class ExtremeReviews:
    best: ReviewRecord
    worst: ReviewRecord
    tokens: tuple[str, ...]


def select_extreme_reviews(reviews: Sequence[ReviewRecord], rng: np.random.Generator) -> ExtremeReviews:
    """Highest- and lowest-rated review; rating ties are broken by ``rng``.

    ``tokens`` is the worst review's tokens, then :data:`SEP`, then the best's.
    """
    if not reviews:
        raise ValueError("no reviews to select from")
    ordered = sorted(reviews, key=lambda r: r.review_id)
    lo = min(r.stars for r in ordered)
    hi = max(r.stars for r in ordered)
    worst_pool = [r for r in ordered if r.stars == lo]
    best_pool = [r for r in ordered if r.stars == hi]
    worst = worst_pool[int(rng.integers(len(worst_pool)))]
    best = best_pool[int(rng.integers(len(best_pool)))]
    tokens = (*preprocess(worst.text), SEP, *preprocess(best.text))
    return ExtremeReviews(best, worst, tokens)


def bow_columns(vocab: Vocabulary) -> list[str]:
    return [f"bow__{t}" for t in vocab.terms]


@dataclass
class TextFeatures:
    bow: pd.DataFrame
    vocabulary: Vocabulary
    polarity_records: list[dict]
    extreme_records: list[dict]
    review_bow_records: list[dict]
    report: dict


def compute_text_features(
    s: Snapshot,
    restaurant_ids: Sequence[str],
    vocab_size: int = DEFAULT_VOCAB_SIZE,
    rng: np.random.Generator | None = None,
    polarity_map: str = "default",
) -> TextFeatures:
    """Per-restaurant BOW table plus the per-review records for the sentiment task.

    Restaurants without reviews in the observation window get no BOW row.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    ids = sorted(restaurant_ids)
    end = s.end
    per_restaurant: dict[str, list[ReviewRecord]] = {}
    tokens: dict[str, list[str]] = {}
    for rid in ids:
        revs = sorted((r for r in s.reviews_by_business.get(rid, ()) if r.timestamp < end), key=lambda r: r.review_id)
        per_restaurant[rid] = revs
        for r in revs:
            tokens[r.review_id] = preprocess(r.text)
    vocab = build_vocabulary((tokens[k] for k in sorted(tokens)), vocab_size)

    with_reviews = [rid for rid in ids if per_restaurant[rid]]
    bow = np.zeros((len(with_reviews), len(vocab)), dtype=np.int64)
    polarity_records, extreme_records, review_bow = [], [], []
    for k, rid in enumerate(with_reviews):
        revs = per_restaurant[rid]
        bow[k] = bow_vector((tokens[r.review_id] for r in revs), vocab)
        for r in revs:
            polarity_records.append({
                "review_id": r.review_id, "business_id": rid, "stars": r.stars,
                "polarity": polarity(r.stars, polarity_map).value,
            })
        ex = select_extreme_reviews(revs, rng)
        extreme_records.append({
            "business_id": rid, "best_review_id": ex.best.review_id, "best_stars": ex.best.stars,
            "worst_review_id": ex.worst.review_id, "worst_stars": ex.worst.stars,
            "tokens": list(ex.tokens),
        })
        roles = [("worst", ex.worst), ("best", ex.best)]
        if ex.best.review_id == ex.worst.review_id:
            roles = [("best", ex.best)]
        for role, r in roles:
            counts = bow_vector([tokens[r.review_id]], vocab)
            nz = np.flatnonzero(counts)
            review_bow.append({
                "review_id": r.review_id, "business_id": rid, "role": role, "stars": r.stars,
                "polarity": polarity(r.stars, polarity_map).value,
                "counts": {str(int(j)): int(counts[j]) for j in nz},
            })
    df = pd.DataFrame(bow, index=pd.Index(with_reviews, name="business_id"), columns=bow_columns(vocab))
    report = {
        "restaurants": len(ids),
        "with_reviews": len(with_reviews),
        "without_reviews": len(ids) - len(with_reviews),
        "reviews": len(tokens),
        "vocabulary_size": len(vocab),
        "polarity_map": polarity_map,
    }
    return TextFeatures(df, vocab, polarity_records, extreme_records, review_bow, report)
