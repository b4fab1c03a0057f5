"""User mobility features derived from consecutive reviews and check-ins."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .corpus import ReviewRecord, Snapshot
from .geo import Neighborhood, geo_distance

DAYS_PER_MONTH = 30.44
TREND_MONTHS = 6


@dataclass(frozen=True)
class Transition:
    user_id: str
    from_id: str
    to_id: str
    t_from: datetime
    t_to: datetime
    distance_m: float

    @property
    def duration_s(self) -> float:
        return (self.t_to - self.t_from).total_seconds()

    def to_json(self) -> dict:
        return {
            "user_id": self.user_id,
            "from_id": self.from_id,
            "to_id": self.to_id,
            "t_from": self.t_from.isoformat(sep=" "),
            "t_to": self.t_to.isoformat(sep=" "),
            "distance_m": self.distance_m,
            "duration_s": self.duration_s,
        }


def extract_transitions(
    reviews: Iterable[ReviewRecord],
    locations: Mapping[str, tuple[float, float]],
    max_gap: timedelta | None = None,
) -> list[Transition]:
    """Consecutive review pairs per user at two different businesses.

    Reviews are ordered by (timestamp, review_id). Pairs touching a business
    without a known location are dropped. Output is sorted by user, then time.
    """
    by_user: dict[str, list[ReviewRecord]] = defaultdict(list)
    for r in reviews:
        if r.user_id:
            by_user[r.user_id].append(r)
    out = []
    for user in sorted(by_user):
        seq = sorted(by_user[user], key=lambda r: (r.timestamp, r.review_id))
        for a, b in zip(seq, seq[1:]):
            if a.business_id == b.business_id:
                continue
            if max_gap is not None and b.timestamp - a.timestamp > max_gap:
                continue
            la, lb = locations.get(a.business_id), locations.get(b.business_id)
            if la is None or lb is None:
                continue
            out.append(Transition(user, a.business_id, b.business_id, a.timestamp, b.timestamp, geo_distance(la, lb)))
    return out


def first_engagement(reviews: Iterable[datetime], checkins: Iterable[datetime]) -> datetime | None:
    stamps = [*reviews, *checkins]
    return min(stamps) if stamps else None


def lifespan_months(r: str, s: Snapshot) -> float | None:
    """Months from first review or check-in to the end of observation, floored at 1.

    Returns None when the restaurant has no engagement at all.
    """
    reviews = [x.timestamp for x in s.reviews_by_business.get(r, ())]
    checkins = s.checkins_by_business.get(r, ())
    return months_since(first_engagement(reviews, checkins), s.end)


def months_since(start: datetime | None, end: datetime) -> float | None:
    if start is None:
        return None
    months = (end - start).total_seconds() / (DAYS_PER_MONTH * 86400.0)
    return max(1.0, months)


def flow_rates(r: str, transitions: Iterable[Transition], months: float) -> tuple[float, float]:
    """(inflow, outflow): transitions into / out of ``r`` per month of lifespan."""
    if months < 1:
        raise ValueError("lifespan must be at least one month")
    n_in = n_out = 0
    for t in transitions:
        n_in += t.to_id == r
        n_out += t.from_id == r
    return n_in / months, n_out / months


@dataclass(frozen=True)
class TravelStats:
    avg_dist_to: float
    avg_dist_from: float
    avg_speed_to: float
    avg_speed_from: float
    no_inbound: bool
    no_outbound: bool


def _travel(ts: Sequence[Transition]) -> tuple[float, float]:
    if not ts:
        return 0.0, 0.0
    dist = float(np.mean([t.distance_m for t in ts]))
    speeds = [t.distance_m / t.duration_s for t in ts if t.duration_s > 0]
    return dist, float(np.mean(speeds)) if speeds else 0.0


def transition_travel_stats(r: str, transitions: Iterable[Transition]) -> TravelStats:
    """Mean distance (m) and speed (m/s) over inbound and outbound transitions.

    Zero-duration transitions count toward distance but not speed.
    """
    inbound, outbound = [], []
    for t in transitions:
        if t.to_id == r:
            inbound.append(t)
        if t.from_id == r:
            outbound.append(t)
    d_to, s_to = _travel(inbound)
    d_from, s_from = _travel(outbound)
    return TravelStats(d_to, d_from, s_to, s_from, not inbound, not outbound)


def temporal_profile(checkins: Iterable[datetime]) -> np.ndarray:
    """Normalised 24-bin hour-of-day histogram; all zeros without check-ins."""
    h = np.zeros(24)
    for t in checkins:
        h[t.hour] += 1
    total = h.sum()
    return h / total if total else h


def popularity_skew(h) -> float:
    h = np.asarray(h, dtype=float)
    nz = h[h > 0]
    return float(max(0.0, -(nz * np.log(nz)).sum()))


def aggregate_profile(neighbor_profiles: Iterable[np.ndarray]) -> np.ndarray | None:
    """Mean of the non-empty neighbour profiles, renormalised to sum 1."""
    active = [p for p in neighbor_profiles if p.sum() > 0]
    if not active:
        return None
    mean = np.mean(active, axis=0)
    return mean / mean.sum()


def competitor_alignment(h, neighbor_profiles: Iterable[np.ndarray]) -> float:
    """Squared Euclidean distance between ``h`` and the neighbourhood profile.

    Returns 0 when no neighbour has check-ins.
    """
    agg = aggregate_profile(neighbor_profiles)
    if agg is None:
        return 0.0
    return float(((np.asarray(h, dtype=float) - agg) ** 2).sum())


def monthly_checkin_counts(checkins: Iterable[datetime], end: datetime, months: int = TREND_MONTHS) -> np.ndarray:
    """Check-in counts for the ``months`` calendar months ending at ``end`` (exclusive)."""
    last = end - timedelta(microseconds=1)
    last_key = last.year * 12 + last.month - 1
    counts = np.zeros(months)
    for t in checkins:
        if t >= end:
            continue
        k = months - 1 - (last_key - (t.year * 12 + t.month - 1))
        if 0 <= k < months:
            counts[k] += 1
    return counts


def visit_trend(monthly_counts) -> float:
    """OLS slope of check-in count against month index 1..n."""
    y = np.asarray(monthly_counts, dtype=float)
    x = np.arange(1, len(y) + 1, dtype=float)
    xc = x - x.mean()
    return float((xc * (y - y.mean())).sum() / (xc**2).sum())


MOBILITY_COLUMNS = (
    ["inflow", "outflow", "avg_dist_to", "avg_dist_from", "avg_speed_to", "avg_speed_from",
     "popularity_skew", "competitor_alignment", "visit_trend", "lifespan_months"]
    + [f"h_{i:02d}" for i in range(24)]
    + ["no_engagement", "no_inbound", "no_outbound", "no_checkins", "no_neighbor_checkins"]
)


def compute_mobility_features(
    s: Snapshot,
    restaurant_ids: Sequence[str],
    neighborhoods: Mapping[str, Neighborhood],
    max_gap: timedelta | None = None,
    scope: str = "all",
) -> tuple[pd.DataFrame, list[Transition], dict]:
    """Mobility table for ``restaurant_ids`` plus the transitions it was built from.

    ``scope="neighborhood"`` counts flows only with businesses inside the
    restaurant's neighbourhood; the default counts every transition.
    """
    if scope not in ("all", "neighborhood"):
        raise ValueError(f"unknown flow scope {scope!r}")
    locations = {b.business_id: (b.latitude, b.longitude) for b in s.businesses}
    transitions = extract_transitions(s.reviews, locations, max_gap)
    inbound: dict[str, list[Transition]] = defaultdict(list)
    outbound: dict[str, list[Transition]] = defaultdict(list)
    for t in transitions:
        inbound[t.to_id].append(t)
        outbound[t.from_id].append(t)

    profiles: dict[str, np.ndarray] = {}

    def profile(bid):
        if bid not in profiles:
            profiles[bid] = temporal_profile(s.checkins_by_business.get(bid, ()))
        return profiles[bid]

    ids = sorted(restaurant_ids)
    data = np.zeros((len(ids), len(MOBILITY_COLUMNS)))
    for k, rid in enumerate(ids):
        ins, outs = inbound.get(rid, []), outbound.get(rid, [])
        if scope == "neighborhood":
            members = neighborhoods[rid].members
            ins = [t for t in ins if t.from_id in members]
            outs = [t for t in outs if t.to_id in members]
        checkins = s.checkins_by_business.get(rid, ())
        months = lifespan_months(rid, s)
        if months is None:
            inflow = outflow = 0.0
            life = 0.0
        else:
            inflow, outflow = len(ins) / months, len(outs) / months
            life = months
        travel = transition_travel_stats(rid, ins + outs)
        h = profile(rid)
        neigh = [profile(m) for m in sorted(neighborhoods[rid].members)]
        agg = aggregate_profile(neigh)
        align = 0.0 if agg is None else float(((h - agg) ** 2).sum())
        trend = visit_trend(monthly_checkin_counts(checkins, s.end))
        data[k] = [
            inflow, outflow, travel.avg_dist_to, travel.avg_dist_from,
            travel.avg_speed_to, travel.avg_speed_from, popularity_skew(h), align, trend, life,
            *h,
            months is None, travel.no_inbound, travel.no_outbound, not checkins, agg is None,
        ]
    df = pd.DataFrame(data, index=pd.Index(ids, name="business_id"), columns=MOBILITY_COLUMNS)
    flags = MOBILITY_COLUMNS[-5:]
    df[flags] = df[flags].astype(np.int64)
    report = {
        "restaurants": len(ids),
        "transitions": len(transitions),
        "max_gap_s": None if max_gap is None else max_gap.total_seconds(),
        "scope": scope,
        "flags": {f: int(df[f].sum()) for f in flags},
    }
    return df, transitions, report
