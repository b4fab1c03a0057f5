import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _builders import LAT, LON, business, haversine_oracle, offset, snapshot
from bizsurv.geo import (
    EARTH_RADIUS_M,
    Neighborhood,
    SpatialIndex,
    build_neighborhoods,
    category_profiles,
    competition,
    compute_geo_features,
    default_manifest,
    geo_columns,
    geo_distance,
    haversine_m,
    neighborhood_attractiveness,
    place_entropy,
    specific_competition,
    tfidf,
)


class TestDistance:
    def test_identity(self):
        assert geo_distance((LAT, LON), (LAT, LON)) == 0.0

    def test_one_degree_of_longitude_on_equator(self):
        # R * pi / 180, evaluated independently.
        assert abs(geo_distance((0.0, 0.0), (0.0, 1.0)) - 111_194.93) <= 1.0
        assert geo_distance((0.0, 0.0), (0.0, 1.0)) == pytest.approx(EARTH_RADIUS_M * math.pi / 180, abs=1e-6)

    def test_symmetric_and_matches_reference(self):
        rng = np.random.default_rng(0)
        lat = rng.uniform(-89, 89, size=(1000, 2))
        lon = rng.uniform(-180, 180, size=(1000, 2))
        for (a1, a2), (o1, o2) in zip(lat, lon):
            d = geo_distance((a1, o1), (a2, o2))
            assert d == geo_distance((a2, o2), (a1, o1))
            assert d == pytest.approx(haversine_oracle((a1, o1), (a2, o2)), rel=1e-9, abs=1e-6)

    def test_vectorised_agrees(self):
        rng = np.random.default_rng(1)
        a = rng.uniform(-60, 60, size=(50, 4))
        v = haversine_m(a[:, 0], a[:, 1], a[:, 2], a[:, 3])
        s = [geo_distance((r[0], r[1]), (r[2], r[3])) for r in a]
        np.testing.assert_allclose(v, s, rtol=1e-12)


class TestNeighborhoods:
    def test_pairs_inside_and_outside_radius(self):
        near = offset(LAT, LON, north_m=100)
        far = offset(LAT, LON, east_m=600)
        s = snapshot([business("a"), business("b", *near), business("c", *far)])
        n = build_neighborhoods(s, 500)
        assert n["a"].members == {"b"}
        assert n["b"].members == {"a"}
        assert n["c"].members == frozenset()
        assert all(cid not in nb.members for cid, nb in n.items())

    def test_members_of_any_category(self):
        s = snapshot([business("a"), business("gym", *offset(LAT, LON, 50), cats=("Gyms",))])
        n = build_neighborhoods(s)
        assert set(n) == {"a"}
        assert n["a"].members == {"gym"}

    def test_index_equals_brute_force(self):
        rng = np.random.default_rng(3)
        pts = [offset(LAT, LON, *rng.uniform(-2000, 2000, 2)) for _ in range(300)]
        s = snapshot([business(f"b{i:03d}", la, lo) for i, (la, lo) in enumerate(pts)])
        got = build_neighborhoods(s, 400)
        for i, p in enumerate(pts):
            want = {f"b{j:03d}" for j, q in enumerate(pts) if j != i and haversine_oracle(p, q) <= 400}
            assert got[f"b{i:03d}"].members == want

    def test_index_query_whole_earth(self):
        idx = SpatialIndex(["n", "s"], np.array([89.0, -89.0]), np.array([0.0, 0.0]))
        assert idx.query(0.0, 0.0, math.pi * EARTH_RADIUS_M) == [0, 1]


def _ring_snapshot():
    """Center restaurant with two restaurants (one Italian), one bar and one gym around it."""
    pos = [offset(LAT, LON, 100 * math.cos(t), 100 * math.sin(t)) for t in (0, 1.5, 3, 4.5)]
    return snapshot([
        business("c", cats=("Restaurants", "Italian")),
        business("r1", *pos[0], cats=("Restaurants", "Italian", "Pizza")),
        business("r2", *pos[1], cats=("Restaurants", "Mexican")),
        business("bar", *pos[2], cats=("Nightlife", "Bars")),
        business("gym", *pos[3], cats=("Active Life", "Gyms")),
    ])


class TestCompetition:
    def test_half_restaurants(self):
        s = _ring_snapshot()
        n = build_neighborhoods(s, 500, ["c"])["c"]
        assert competition(n, s) == 0.5

    def test_all_restaurants_and_empty(self):
        s = _ring_snapshot()
        assert competition(Neighborhood("c", frozenset({"r1", "r2"})), s) == 1.0
        assert competition(Neighborhood("c", frozenset()), s) == 0.0

    def test_specific_competition(self):
        s = _ring_snapshot()
        n = Neighborhood("c", frozenset({"r1", "r2", "bar"}))
        assert specific_competition(n, s, {"Italian"}) == 0.5
        assert specific_competition(n, s, {"Thai"}) == 0.0
        assert specific_competition(Neighborhood("c", frozenset({"bar"})), s, {"Italian"}) == 0.0

    def test_specific_competition_four_members(self):
        pts = [offset(LAT, LON, 50 * (i + 1)) for i in range(4)]
        cuisines = ["Thai", "Thai", "Mexican", "Burgers"]
        s = snapshot([business("c", cats=("Restaurants", "Thai", "Vietnamese"))]
                     + [business(f"m{i}", *p, cats=("Restaurants", c)) for i, (p, c) in enumerate(zip(pts, cuisines))])
        n = build_neighborhoods(s, 500, ["c"])["c"]
        assert specific_competition(n, s, {"Thai", "Vietnamese"}) == 0.5


class TestCategoryProfiles:
    def test_counts(self):
        m = default_manifest()
        s = snapshot([
            business("c"),
            *[business(f"r{i}", *offset(LAT, LON, 20 * (i + 1))) for i in range(3)],
            business("bar", *offset(LAT, LON, -30), cats=("Nightlife",)),
        ])
        n = build_neighborhoods(s, 500, ["c"])["c"]
        cats, subs = category_profiles(n, s)
        assert cats[m.category_index["restaurants"]] == 3
        assert cats[m.category_index["nightlife"]] == 1
        assert cats.sum() == 4 and subs.sum() == 0
        assert cats.shape == (22,) and subs.shape == (145,)

    def test_empty_and_unknown(self):
        s = snapshot([business("c"), business("x", *offset(LAT, LON, 10), cats=("Restaurants", "Zorbing"))])
        cats, subs = category_profiles(Neighborhood("c", frozenset()), s)
        assert cats.sum() == 0 and subs.sum() == 0
        unknown = Counter()
        category_profiles(Neighborhood("c", frozenset({"x"})), s, unknown=unknown)
        assert unknown == {"Zorbing": 1}


class TestPlaceEntropy:
    def test_examples(self):
        one = np.zeros(22)
        one[4] = 9
        assert place_entropy(one) == 0.0
        assert place_entropy(np.ones(22)) == pytest.approx(math.log(22), abs=1e-12)
        assert place_entropy([2, 2] + [0] * 20) == pytest.approx(math.log(2), abs=1e-12)
        assert place_entropy(np.zeros(22)) == 0.0

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.integers(0, 50), min_size=22, max_size=22), st.randoms())
    def test_bounds_and_permutation_invariance(self, counts, rnd):
        h = place_entropy(counts)
        assert 0.0 <= h <= math.log(22) + 1e-12
        shuffled = list(counts)
        rnd.shuffle(shuffled)
        assert place_entropy(shuffled) == pytest.approx(h, abs=1e-12)


# Ten neighbourhoods over four terms; expected weights worked out by hand:
# term 0 is everywhere (idf = ln 1 = 0), term 1 has df = 4 (idf = ln 2.5),
# term 2 has df = 1 (idf = ln 10), term 3 never occurs.
TEN_COUNTS = np.array([
    [1, 2, 0, 0], [3, 1, 0, 0], [1, 0, 0, 0], [2, 0, 0, 0], [1, 3, 0, 0],
    [4, 0, 0, 0], [1, 0, 0, 0], [1, 1, 0, 0], [2, 0, 0, 0], [1, 0, 5, 0],
])
TEN_EXPECTED = np.zeros((10, 4))
TEN_EXPECTED[[0, 1, 4, 7], 1] = [1.8325814637483102, 0.9162907318741551, 2.7488721956224653, 0.9162907318741551]
TEN_EXPECTED[9, 2] = 11.512925464970229


class TestAttractiveness:
    def test_hand_computed_table(self):
        np.testing.assert_allclose(tfidf(TEN_COUNTS), TEN_EXPECTED, rtol=0, atol=1e-12)

    def test_through_profiles(self):
        profiles = {}
        for i, row in enumerate(TEN_COUNTS):
            cats, subs = np.zeros(22), np.zeros(145)
            cats[:4] = row
            subs[10:14] = row
            profiles[f"r{i}"] = (cats, subs)
        out = neighborhood_attractiveness(profiles)
        for i in range(10):
            np.testing.assert_allclose(out[f"r{i}"][0][:4], TEN_EXPECTED[i], atol=1e-12)
            np.testing.assert_allclose(out[f"r{i}"][1][10:14], TEN_EXPECTED[i], atol=1e-12)
            assert out[f"r{i}"][0][4:].sum() == 0

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.lists(st.integers(0, 4), min_size=5, max_size=5), min_size=1, max_size=12))
    def test_zero_iff_absent_or_everywhere(self, rows):
        counts = np.array(rows)
        w = tfidf(counts)
        everywhere = (counts > 0).all(axis=0)
        zero_expected = (counts == 0) | everywhere[None, :]
        assert ((w == 0) == zero_expected).all()


class TestGeoTable:
    def test_shape_and_flags(self):
        s = _ring_snapshot()
        lonely = business("far", *offset(LAT, LON, 5000))
        s = snapshot(list(s.businesses) + [lonely])
        df, report = compute_geo_features(s)
        assert list(df.columns) == geo_columns()
        assert df.shape == (4, 2 + 22 + 145 + 1 + 22 + 145 + 1)
        assert df.loc["far", "empty_neighborhood"] == 1
        assert df.loc["far", "competition"] == 0.0
        assert report["empty_neighborhoods"] == 1
        assert ((df["competition"] >= 0) & (df["competition"] <= 1)).all()
        assert ((df["specific_competition"] >= 0) & (df["specific_competition"] <= 1)).all()
