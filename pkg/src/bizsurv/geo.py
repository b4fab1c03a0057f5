"""Locality profiles: neighbourhoods, competition, category mix and attractiveness."""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from functools import cached_property, lru_cache
from importlib import resources
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd
from scipy.spatial import cKDTree

from .corpus import Snapshot

EARTH_RADIUS_M = 6_371_000.0
DEFAULT_RADIUS_M = 500.0


@dataclass(frozen=True)
class CategoryManifest:
    categories: tuple[str, ...]
    cuisines: tuple[str, ...]

    @cached_property
    def category_index(self) -> dict[str, int]:
        return {c.lower(): i for i, c in enumerate(self.categories)}

    @cached_property
    def cuisine_index(self) -> dict[str, int]:
        return {c.lower(): i for i, c in enumerate(self.cuisines)}


def _read_manifest_file(name: str) -> tuple[str, ...]:
    text = resources.files("bizsurv.data").joinpath(name).read_text(encoding="utf-8")
    return tuple(l.strip() for l in text.splitlines() if l.strip() and not l.startswith("#"))


@lru_cache(maxsize=None)
def default_manifest() -> CategoryManifest:
    m = CategoryManifest(_read_manifest_file("categories.txt"), _read_manifest_file("cuisines.txt"))
    assert len(m.categories) == 22 and len(m.cuisines) == 145
    return m


def slug(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", name.lower()).strip("_")


def geo_distance(a: Sequence[float], b: Sequence[float]) -> float:
    """Great-circle distance in meters between two (lat, lon) points in degrees."""
    lat1, lon1 = math.radians(a[0]), math.radians(a[1])
    lat2, lon2 = math.radians(b[0]), math.radians(b[1])
    h = math.sin((lat2 - lat1) / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def haversine_m(lat1, lon1, lat2, lon2):
    """Vectorised haversine; all arguments in degrees, broadcastable."""
    lat1, lon1, lat2, lon2 = map(np.radians, (lat1, lon1, lat2, lon2))
    h = np.sin((lat2 - lat1) / 2) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2
    return 2 * EARTH_RADIUS_M * np.arcsin(np.minimum(1.0, np.sqrt(h)))


def _unit_xyz(lat, lon):
    lat, lon = np.radians(lat), np.radians(lon)
    return np.column_stack([np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat)])


@dataclass(frozen=True)
class Neighborhood:
    center_id: str
    members: frozenset[str]
    radius_m: float = DEFAULT_RADIUS_M

    @property
    def is_empty(self) -> bool:
        return not self.members


class SpatialIndex:
    """KD-tree over unit-sphere coordinates answering great-circle radius queries."""

    def __init__(self, ids: Sequence[str], lat: np.ndarray, lon: np.ndarray):
        self.ids = list(ids)
        self.lat = np.asarray(lat, dtype=float)
        self.lon = np.asarray(lon, dtype=float)
        self._tree = cKDTree(_unit_xyz(self.lat, self.lon))

    @classmethod
    def from_snapshot(cls, s: Snapshot) -> "SpatialIndex":
        bs = s.businesses
        return cls([b.business_id for b in bs], np.array([b.latitude for b in bs]), np.array([b.longitude for b in bs]))

    def query(self, lat: float, lon: float, radius_m: float) -> list[int]:
        # Chord length for the arc; padded, then filtered exactly by haversine.
        chord = 2 * math.sin(min(math.pi, radius_m / EARTH_RADIUS_M) / 2) * (1 + 1e-9)
        cand = np.asarray(self._tree.query_ball_point(_unit_xyz([lat], [lon])[0], chord), dtype=int)
        if cand.size == 0:
            return []
        d = haversine_m(lat, lon, self.lat[cand], self.lon[cand])
        return sorted(cand[d <= radius_m].tolist())


def build_neighborhoods(
    s: Snapshot,
    radius_m: float = DEFAULT_RADIUS_M,
    centers: Iterable[str] | None = None,
) -> dict[str, Neighborhood]:
    """Neighbourhood of every restaurant (or every id in ``centers``).

    Members are businesses of any category within ``radius_m`` meters,
    the center itself excluded.
    """
    index = SpatialIndex.from_snapshot(s)
    lookup = s.business_index
    if centers is None:
        centers = [b.business_id for b in s.businesses if b.is_restaurant]
    out = {}
    for cid in centers:
        c = lookup[cid]
        hits = index.query(c.latitude, c.longitude, radius_m)
        members = frozenset(index.ids[i] for i in hits) - {cid}
        out[cid] = Neighborhood(cid, members, radius_m)
    return out


def competition(n: Neighborhood, s: Snapshot) -> float:
    """Share of neighbourhood businesses that are restaurants; 0 when empty."""
    if n.is_empty:
        return 0.0
    lookup = s.business_index
    return sum(lookup[m].is_restaurant for m in n.members) / len(n.members)


def cuisines_of(categories: Iterable[str], manifest: CategoryManifest | None = None) -> frozenset[str]:
    idx = (manifest or default_manifest()).cuisine_index
    return frozenset(c.lower() for c in categories if c.lower() in idx)


def specific_competition(n: Neighborhood, s: Snapshot, center_cuisines: Iterable[str]) -> float:
    """Share of neighbouring restaurants sharing at least one cuisine with the center."""
    lookup = s.business_index
    wanted = frozenset(c.lower() for c in center_cuisines)
    restaurants = [lookup[m] for m in n.members if lookup[m].is_restaurant]
    if not restaurants:
        return 0.0
    same = sum(bool(wanted & cuisines_of(r.categories)) for r in restaurants)
    return same / len(restaurants)


def category_profiles(
    n: Neighborhood,
    s: Snapshot,
    manifest: CategoryManifest | None = None,
    unknown: Counter | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Tally top-level categories (22) and cuisines (145) over the members.

    A business with k known categories contributes to k bins. Strings in
    neither manifest are tallied into ``unknown`` when it is given.
    """
    manifest = manifest or default_manifest()
    cat_idx, sub_idx = manifest.category_index, manifest.cuisine_index
    cats = np.zeros(len(manifest.categories), dtype=np.int64)
    subs = np.zeros(len(manifest.cuisines), dtype=np.int64)
    lookup = s.business_index
    for m in n.members:
        for c in lookup[m].categories:
            key = c.lower()
            if key in cat_idx:
                cats[cat_idx[key]] += 1
            elif key in sub_idx:
                subs[sub_idx[key]] += 1
            elif unknown is not None:
                unknown[c] += 1
    return cats, subs


def place_entropy(category_counts) -> float:
    """Shannon entropy (nats) of the category distribution; 0 for no mass."""
    c = np.asarray(category_counts, dtype=float)
    total = c.sum()
    if total <= 0:
        return 0.0
    p = c[c > 0] / total
    return float(max(0.0, -(p * np.log(p)).sum()))


def tfidf(counts: np.ndarray) -> np.ndarray:
    """Row-document TF-IDF with idf = ln(N / df); columns with df = 0 get 0."""
    counts = np.asarray(counts, dtype=float)
    n_docs = counts.shape[0]
    df = (counts > 0).sum(axis=0)
    idf = np.zeros(counts.shape[1])
    present = df > 0
    idf[present] = np.log(n_docs / df[present])
    return counts * idf


def neighborhood_attractiveness(
    all_profiles: Mapping[str, tuple[np.ndarray, np.ndarray]],
) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """TF-IDF of each restaurant's category and cuisine counts against all neighbourhoods."""
    ids = list(all_profiles)
    if not ids:
        return {}
    cats = tfidf(np.vstack([all_profiles[i][0] for i in ids]))
    subs = tfidf(np.vstack([all_profiles[i][1] for i in ids]))
    return {i: (cats[k], subs[k]) for k, i in enumerate(ids)}


def geo_columns(manifest: CategoryManifest | None = None) -> list[str]:
    m = manifest or default_manifest()
    return (
        ["competition", "specific_competition"]
        + [f"cat_count__{slug(c)}" for c in m.categories]
        + [f"subcat_count__{slug(c)}" for c in m.cuisines]
        + ["place_entropy"]
        + [f"nac__{slug(c)}" for c in m.categories]
        + [f"nasc__{slug(c)}" for c in m.cuisines]
        + ["empty_neighborhood"]
    )


def compute_geo_features(
    s: Snapshot,
    restaurant_ids: Sequence[str] | None = None,
    radius_m: float = DEFAULT_RADIUS_M,
    neighborhoods: Mapping[str, Neighborhood] | None = None,
    manifest: CategoryManifest | None = None,
) -> tuple[pd.DataFrame, dict]:
    """Locality-profile table, one row per restaurant, plus a small report."""
    manifest = manifest or default_manifest()
    if restaurant_ids is None:
        restaurant_ids = s.restaurant_ids(open_only=True)
    ids = sorted(restaurant_ids)
    if neighborhoods is None:
        neighborhoods = build_neighborhoods(s, radius_m, ids)
    lookup = s.business_index
    unknown: Counter = Counter()
    profiles = {}
    rows = {}
    for rid in ids:
        n = neighborhoods[rid]
        profiles[rid] = category_profiles(n, s, manifest, unknown)
        rows[rid] = (
            competition(n, s),
            specific_competition(n, s, cuisines_of(lookup[rid].categories, manifest)),
        )
    attract = neighborhood_attractiveness(profiles)
    data = np.zeros((len(ids), len(geo_columns(manifest))))
    for k, rid in enumerate(ids):
        cats, subs = profiles[rid]
        nac, nasc = attract[rid]
        data[k] = np.concatenate([
            rows[rid], cats, subs, [place_entropy(cats)], nac, nasc,
            [float(neighborhoods[rid].is_empty)],
        ])
    df = pd.DataFrame(data, index=pd.Index(ids, name="business_id"), columns=geo_columns(manifest))
    int_cols = [c for c in df.columns if c.startswith(("cat_count__", "subcat_count__"))] + ["empty_neighborhood"]
    df[int_cols] = df[int_cols].astype(np.int64)
    report = {
        "restaurants": len(ids),
        "radius_m": radius_m,
        "empty_neighborhoods": int(df["empty_neighborhood"].sum()),
        "unknown_categories": dict(sorted(unknown.items())),
    }
    return df, report
