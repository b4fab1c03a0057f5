"""Seeded synthetic corpora with a planted logistic survival model.

The observation snapshot is generated without looking at the labels, so
any family that does not carry a planted driver is independent of survival.
Labels only shape the prediction snapshot (open, closed or delisted).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from typing import Mapping

import numpy as np

from .corpus import (
    BusinessRecord,
    CheckinRecord,
    PhotoRecord,
    ReviewRecord,
    Snapshot,
    window_end,
)
from .geo import DEFAULT_RADIUS_M, SpatialIndex, default_manifest

# Planted drivers and the family whose features expose them.
DRIVERS = {
    "attributes": "A",
    "activity": "U",
    "density": "G",
    "sentiment": "L",
}

POSITIVE_WORDS = (
    "delicious", "amazing", "excellent", "fantastic", "friendly", "fresh", "perfect", "wonderful",
    "awesome", "tasty", "loved", "favorite", "outstanding", "superb", "yummy", "flavorful",
    "attentive", "welcoming", "cozy", "gem", "impeccable", "divine", "generous", "crispy",
    "juicy", "heavenly", "recommend", "terrific", "lovely", "pleasant", "spotless", "charming",
    "stellar", "incredible", "phenomenal", "tender", "brilliant", "glad", "enjoyed", "best",
)
NEGATIVE_WORDS = (
    "terrible", "awful", "rude", "bland", "cold", "dirty", "horrible", "disgusting",
    "worst", "overpriced", "stale", "slow", "greasy", "soggy", "burnt", "inedible",
    "mediocre", "disappointing", "gross", "filthy", "nasty", "unfriendly", "undercooked", "salty",
    "tasteless", "sticky", "rotten", "avoid", "refund", "sick", "waited", "ignored",
    "poor", "lukewarm", "dry", "chewy", "rubbery", "unacceptable", "regret", "sloppy",
)
_SYLLABLES = (
    "ba", "ko", "ri", "ta", "mu", "le", "zo", "pi", "na", "vu", "shi", "dro", "fen", "gal", "hur",
    "jin", "kel", "lom", "mar", "nix", "ost", "pru", "qua", "ret", "sol", "tiv", "ulm", "ver", "wex", "yor",
)
# Function words left in the text so preprocessing has stop words and punctuation to remove.
_GLUE = ("the", "and", "was", "it", "we", "to", "a", "of", "very", "with")


def filler_words(n: int = 1500) -> tuple[str, ...]:
    """Fixed pseudo-word list, independent of the corpus seed."""
    rng = np.random.default_rng(20_170_101)
    taken = set(POSITIVE_WORDS) | set(NEGATIVE_WORDS) | set(_GLUE)
    out: list[str] = []
    while len(out) < n:
        w = "".join(rng.choice(_SYLLABLES, size=rng.integers(2, 4)))
        if w not in taken:
            taken.add(w)
            out.append(w)
    return tuple(out)


@dataclass(frozen=True)
class SynthConfig:
    n_restaurants: int = 5000
    n_other: int = 1000
    n_users: int = 4000
    reviews_per_restaurant: float = 6.0
    min_reviews: int = 3
    checkins_per_restaurant: float = 15.0
    photos_per_restaurant: float = 2.0
    center: tuple[float, float] = (33.4484, -112.0740)
    extent_km: float = 12.0
    clusters: int = 12
    cluster_share: float = 0.7
    base_survival: float = 0.87
    closed_at_observation: float = 0.05
    delist_fraction: float = 0.3
    attribute_missing: float = 0.15
    # Driver name -> logistic coefficient on its standardized value.
    signal: Mapping[str, float] = field(default_factory=lambda: {"attributes": 3.0})
    # Restaurants with fewer reviews than the threshold get their death odds multiplied.
    review_threshold: int | None = None
    review_death_odds: float = 2.0
    sentiment_words: float = 0.35
    words_per_review: tuple[int, int] = (8, 24)
    observation_end: date = date(2017, 12, 31)
    prediction_end: date = date(2019, 12, 31)
    activity_start: date = date(2013, 1, 1)

    def validate(self) -> None:
        if self.n_restaurants < 1:
            raise ValueError("n_restaurants must be at least 1")
        if self.n_other < 0 or self.n_users < 1:
            raise ValueError("n_other must be >= 0 and n_users >= 1")
        if self.min_reviews < 0 or self.reviews_per_restaurant < 0:
            raise ValueError("review counts must be nonnegative")
        if not 0 < self.base_survival < 1:
            raise ValueError("base_survival must lie strictly between 0 and 1")
        for name in ("closed_at_observation", "delist_fraction", "attribute_missing", "cluster_share", "sentiment_words"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not self.activity_start < self.observation_end < self.prediction_end:
            raise ValueError("need activity_start < observation_end < prediction_end")
        unknown = set(self.signal) - set(DRIVERS)
        if unknown:
            raise ValueError(f"unknown signal drivers {sorted(unknown)}; known: {sorted(DRIVERS)}")
        lo, hi = self.words_per_review
        if not 1 <= lo <= hi:
            raise ValueError("words_per_review must satisfy 1 <= low <= high")
        if self.review_death_odds <= 0:
            raise ValueError("review_death_odds must be positive")
        if self.extent_km <= 0 or self.clusters < 1:
            raise ValueError("extent_km and clusters must be positive")

    @classmethod
    def from_dict(cls, d: Mapping) -> "SynthConfig":
        d = dict(d)
        for key in ("observation_end", "prediction_end", "activity_start"):
            if isinstance(d.get(key), str):
                d[key] = date.fromisoformat(d[key])
        for key in ("center", "words_per_review"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    def to_dict(self) -> dict:
        out = {}
        for k in self.__dataclass_fields__:
            v = getattr(self, k)
            if isinstance(v, date):
                v = v.isoformat()
            elif isinstance(v, tuple):
                v = list(v)
            elif isinstance(v, Mapping):
                v = dict(sorted(v.items()))
            out[k] = v
        return out


@dataclass(frozen=True)
class SynthResult:
    observation: Snapshot
    prediction: Snapshot
    restaurant_ids: tuple[str, ...]
    survival_probability: np.ndarray
    survived: np.ndarray
    drivers: Mapping[str, np.ndarray]
    open_at_observation: np.ndarray
    review_counts: np.ndarray
    intercept: float

    def oracle_auc(self) -> float:
        return expected_auc(self.survival_probability[self.open_at_observation])


def expected_auc(p: np.ndarray) -> float:
    """AUC of scoring by ``p`` itself when labels are Bernoulli(p).

    Ratio of expected correctly ordered pairs to expected positive-negative
    pairs; ties count one half.
    """
    p = np.asarray(p, dtype=float)
    order = np.argsort(p, kind="stable")
    ps = p[order]
    neg = 1.0 - ps
    _, start, counts = np.unique(ps, return_index=True, return_counts=True)
    # Negative mass strictly below each tie group, and within it.
    cum_neg = np.concatenate([[0.0], np.cumsum(neg)])
    below = cum_neg[start]
    within = cum_neg[start + counts] - below
    grp_pos = np.add.reduceat(ps, start)
    grp_pos_neg_self = np.add.reduceat(ps * neg, start)
    ordered = float((grp_pos * below).sum() + 0.5 * (grp_pos * within - grp_pos_neg_self).sum())
    total = float(ps.sum() * neg.sum() - (ps * neg).sum())
    return ordered / total if total > 0 else 0.5


def _standardize(v: np.ndarray) -> np.ndarray:
    sd = v.std()
    return (v - v.mean()) / sd if sd > 0 else np.zeros_like(v, dtype=float)


def _solve_intercept(eta: np.ndarray, target: float) -> float:
    """b such that mean(sigmoid(b + eta)) equals ``target`` (bisection)."""
    lo, hi = -30.0, 30.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        m = np.mean(1.0 / (1.0 + np.exp(-(mid + eta))))
        if m < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _offsets_to_latlon(center, dx_km, dy_km):
    lat0, lon0 = center
    lat = lat0 + dy_km / 111.195
    lon = lon0 + dx_km / (111.195 * math.cos(math.radians(lat0)))
    return lat, lon


def _yelp_bool(v: bool) -> str:
    return "True" if v else "False"


def _attributes(rng: np.random.Generator, miss: float) -> tuple[dict, float]:
    """Yelp-style attribute map and the raw attribute-driver score it implies."""
    a: dict = {}
    score = 0.0

    def present() -> bool:
        return rng.random() >= miss

    if present():
        price = int(rng.integers(1, 5))
        a["RestaurantsPriceRange2"] = str(price)
        score += 0.6 * (price - 2.5)
    else:
        score -= 0.5
    if present():
        amb = {k: bool(rng.random() < 0.25) for k in ("romantic", "intimate", "classy", "hipster", "divey", "touristy", "trendy", "upscale", "casual")}
        a["Ambience"] = "{" + ", ".join(f"'{k}': {v}" for k, v in amb.items()) + "}"
        score += 0.8 * amb["classy"] + 0.6 * amb["trendy"] - 1.2 * amb["divey"] - 0.6 * amb["touristy"]
    if present():
        a["Alcohol"] = "u'" + str(rng.choice(["none", "beer_and_wine", "full_bar"])) + "'"
    for key, weight in (("OutdoorSeating", 1.0), ("RestaurantsReservations", 0.8), ("HappyHour", 0.6),
                        ("GoodForKids", 0.0), ("BikeParking", 0.0), ("HasTV", -0.4), ("DogsAllowed", 0.0)):
        if present():
            v = bool(rng.random() < 0.5)
            a[key] = _yelp_bool(v)
            score += weight * v
    if present():
        wifi = str(rng.choice(["no", "free", "paid"]))
        a["WiFi"] = f"u'{wifi}'"
        score += 0.7 * (wifi == "free") - 0.5 * (wifi == "paid")
    else:
        score -= 0.3
    if present():
        a["RestaurantsAttire"] = "'" + str(rng.choice(["casual", "dressy", "formal"], p=[0.8, 0.15, 0.05])) + "'"
    if present():
        park = {k: bool(rng.random() < 0.3) for k in ("garage", "street", "validated", "lot", "valet")}
        a["BusinessParking"] = "{" + ", ".join(f"'{k}': {v}" for k, v in park.items()) + "}"
        score += 0.5 * park["lot"]
    return a, score


def _review_texts(rng, stars, lengths, sentiment_share, fillers, filler_w) -> list[str]:
    """Review strings mixing pool words (by star polarity), Zipf filler and glue words."""
    n = len(stars)
    n_sent = rng.binomial(lengths, sentiment_share)
    n_fill = lengths - n_sent
    n_glue = np.maximum(1, lengths // 4)
    pos = rng.integers(0, len(POSITIVE_WORDS), size=int(n_sent.sum()))
    neg = rng.integers(0, len(NEGATIVE_WORDS), size=int(n_sent.sum()))
    positive_review = np.repeat(stars >= 3, n_sent)
    sent = np.where(positive_review, np.asarray(POSITIVE_WORDS, dtype=object)[pos],
                    np.asarray(NEGATIVE_WORDS, dtype=object)[neg])
    fill = np.asarray(fillers, dtype=object)[rng.choice(len(fillers), size=int(n_fill.sum()), p=filler_w)]
    glue = np.asarray(_GLUE, dtype=object)[rng.integers(0, len(_GLUE), size=int(n_glue.sum()))]
    words = np.concatenate([sent, fill, glue])
    owner = np.concatenate([np.repeat(np.arange(n), c) for c in (n_sent, n_fill, n_glue)])
    # Shuffle words within each review: sort by owner, then by a random key.
    order = np.lexsort((rng.random(len(words)), owner))
    words = words[order]
    bounds = np.concatenate([[0], np.cumsum(n_sent + n_fill + n_glue)])
    out = []
    for j in range(n):
        text = " ".join(words[bounds[j]:bounds[j + 1]]).capitalize()
        out.append(text + ("!" if stars[j] >= 4 else "."))
    return out


def generate(config: SynthConfig = SynthConfig(), seed: int = 0) -> SynthResult:
    """Generate an observation/prediction snapshot pair with known survival odds."""
    config.validate()
    rng = np.random.default_rng(seed)
    manifest = default_manifest()
    n_r, n_o = config.n_restaurants, config.n_other
    n_b = n_r + n_o

    # Locations: a share of businesses in Gaussian clusters, the rest uniform.
    half = config.extent_km / 2
    centers = rng.uniform(-half * 0.8, half * 0.8, size=(config.clusters, 2))
    in_cluster = rng.random(n_b) < config.cluster_share
    which = rng.integers(0, config.clusters, size=n_b)
    spread = config.extent_km / 25
    xy = np.where(
        in_cluster[:, None],
        centers[which] + rng.normal(0, spread, size=(n_b, 2)),
        rng.uniform(-half, half, size=(n_b, 2)),
    )
    lat, lon = _offsets_to_latlon(config.center, xy[:, 0], xy[:, 1])
    lat, lon = np.round(lat, 7), np.round(lon, 7)

    ids = [f"r{i:06d}" for i in range(n_r)] + [f"b{i:06d}" for i in range(n_o)]
    cuisines = list(manifest.cuisines)
    roots = [c for c in manifest.categories if c not in ("Restaurants", "Food")]

    popularity = np.exp(rng.normal(0, 0.6, size=n_r))
    quality = rng.normal(0, 1, size=n_r)
    n_rev = config.min_reviews + rng.poisson(config.reviews_per_restaurant * popularity / popularity.mean())
    attrs, attr_score = [], np.zeros(n_r)
    for i in range(n_r):
        a, sc = _attributes(rng, config.attribute_missing)
        attrs.append(a)
        attr_score[i] = sc

    open_obs = rng.random(n_r) >= config.closed_at_observation
    businesses = []
    for i in range(n_b):
        if i < n_r:
            k = int(rng.integers(1, 3))
            cats = ["Restaurants"] + [str(c) for c in rng.choice(cuisines, size=k, replace=False)]
            if rng.random() < 0.3:
                cats.append(str(rng.choice(["Food", "Nightlife"])))
            is_open, attributes = bool(open_obs[i]), attrs[i]
        else:
            cats = [str(rng.choice(roots))]
            is_open, attributes = True, None
        businesses.append(BusinessRecord(
            ids[i], f"Business {ids[i]}", float(lat[i]), float(lon[i]), frozenset(cats), is_open,
            attributes, "AZ", int(n_rev[i]) if i < n_r else int(rng.integers(0, 50)),
        ))

    # Reviews: counts scale with popularity; users are Zipf-active.
    end = window_end(config.observation_end)
    start = datetime.combine(config.activity_start, datetime.min.time())
    span_s = (end - start).total_seconds()
    opened = rng.uniform(0, 0.7, size=n_r)  # fraction of the window before the restaurant opened
    user_w = 1.0 / np.arange(1, config.n_users + 1) ** 0.8
    user_w /= user_w.sum()
    fillers = filler_words()
    filler_w = 1.0 / np.arange(1, len(fillers) + 1) ** 1.05
    filler_w /= filler_w.sum()
    stars_mean = 3.6 + 0.9 * quality
    reviews = []
    n_total = int(n_rev.sum())
    rest_of = np.repeat(np.arange(n_r), n_rev)
    users = rng.choice(config.n_users, size=n_total, p=user_w)
    when = (opened[rest_of] + (1 - opened[rest_of]) * rng.random(n_total)) * span_s
    stars = np.clip(np.rint(stars_mean[rest_of] + rng.normal(0, 1.0, size=n_total)), 1, 5).astype(int)
    lo, hi = config.words_per_review
    lengths = rng.integers(lo, hi + 1, size=n_total)
    texts = _review_texts(rng, stars, lengths, config.sentiment_words, fillers, filler_w)
    for j in range(n_total):
        ts = start + timedelta(seconds=int(when[j]))
        reviews.append(ReviewRecord(
            f"v{j:07d}", ids[int(rest_of[j])], f"u{int(users[j]):05d}", int(stars[j]), ts, texts[j],
        ))

    # Check-ins with a lunch/dinner hour mix per restaurant.
    checkins = []
    n_chk = rng.poisson(config.checkins_per_restaurant * popularity / popularity.mean())
    for i in range(n_r):
        if n_chk[i] == 0:
            continue
        lunch = rng.random()
        days = (opened[i] + (1 - opened[i]) * rng.random(n_chk[i])) * span_s / 86400
        hours = np.where(rng.random(n_chk[i]) < lunch, rng.normal(12.5, 1.2, n_chk[i]), rng.normal(19, 1.5, n_chk[i]))
        secs = np.floor(days) * 86400 + np.clip(hours, 0, 23.99) * 3600
        stamps = tuple(sorted(start + timedelta(seconds=int(s)) for s in secs if s < span_s))
        if stamps:
            checkins.append(CheckinRecord(ids[i], stamps))

    photos = []
    n_ph = rng.poisson(config.photos_per_restaurant, size=n_r)
    for i in range(n_r):
        photos += [PhotoRecord(f"p{i:06d}_{k}", ids[i]) for k in range(n_ph[i])]

    observation = Snapshot(config.observation_end, tuple(businesses), tuple(reviews), tuple(checkins), tuple(photos))

    # Planted survival model over standardized drivers.
    index = SpatialIndex(ids, lat, lon)
    density = np.array([len(index.query(lat[i], lon[i], DEFAULT_RADIUS_M)) - 1 for i in range(n_r)], dtype=float)
    drivers = {
        "attributes": _standardize(attr_score),
        "activity": _standardize(np.log(popularity)),
        "density": _standardize(np.log1p(density)),
        "sentiment": _standardize(quality),
    }
    eta = np.zeros(n_r)
    for name, beta in config.signal.items():
        eta += beta * drivers[name]
    if config.review_threshold is not None:
        eta -= math.log(config.review_death_odds) * (n_rev < config.review_threshold)
    b0 = _solve_intercept(eta[open_obs], config.base_survival) if open_obs.any() else 0.0
    prob = 1.0 / (1.0 + np.exp(-(b0 + eta)))
    survived = rng.random(n_r) < prob
    delist = rng.random(n_r) < config.delist_fraction

    later = []
    for i, b in enumerate(businesses):
        if i >= n_r:
            later.append(b)
            continue
        if not open_obs[i]:
            later.append(_with_open(b, False))
        elif survived[i]:
            later.append(b)
        elif not delist[i]:
            later.append(_with_open(b, False))
    prediction = Snapshot(config.prediction_end, tuple(later))
    return SynthResult(
        observation, prediction, tuple(ids[:n_r]), prob, survived & open_obs, drivers,
        open_obs, n_rev, float(b0),
    )


def _with_open(b: BusinessRecord, is_open: bool) -> BusinessRecord:
    return BusinessRecord(b.business_id, b.name, b.latitude, b.longitude, b.categories, is_open,
                          b.attributes, b.state, b.review_count)


def generate_synthetic_corpus(config: SynthConfig = SynthConfig(), seed: int = 0) -> tuple[Snapshot, Snapshot]:
    """(observation, prediction) snapshots; see :func:`generate` for ground truth."""
    r = generate(config, seed)
    return r.observation, r.prediction
