"""Small record builders shared by the test modules."""

from __future__ import annotations

import math
from datetime import date, datetime

from bizsurv.corpus import BusinessRecord, CheckinRecord, PhotoRecord, ReviewRecord, Snapshot

EARTH_RADIUS_M = 6_371_000.0
LAT, LON = 33.45, -112.07
OBS = date(2017, 12, 31)
PRED = date(2019, 12, 31)


def business(bid, lat=LAT, lon=LON, cats=("Restaurants",), is_open=True, attrs=None):
    return BusinessRecord(bid, bid, lat, lon, frozenset(cats), is_open, attrs)


def review(rid, bid, uid="u", stars=4, when="2017-06-01 12:00:00", text=""):
    return ReviewRecord(rid, bid, uid, stars, datetime.fromisoformat(when), text)


def checkin(bid, *stamps):
    return CheckinRecord(bid, tuple(datetime.fromisoformat(s) for s in stamps))


def photo(pid, bid):
    return PhotoRecord(pid, bid)


def snapshot(businesses, reviews=(), checkins=(), photos=(), as_of=OBS):
    return Snapshot(as_of, tuple(businesses), tuple(reviews), tuple(checkins), tuple(photos))


def offset(lat, lon, north_m=0.0, east_m=0.0):
    """Point displaced by the given meters (small-distance approximation)."""
    dlat = math.degrees(north_m / EARTH_RADIUS_M)
    dlon = math.degrees(east_m / (EARTH_RADIUS_M * math.cos(math.radians(lat))))
    return lat + dlat, lon + dlon


def haversine_oracle(a, b):
    """Reference great-circle distance, written independently of the library."""
    (la1, lo1), (la2, lo2) = a, b
    p1, p2 = math.radians(la1), math.radians(la2)
    dp, dl = p2 - p1, math.radians(lo2 - lo1)
    s = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.atan2(math.sqrt(s), math.sqrt(1 - s))
