"""Yelp-style snapshot parsing, restaurant filtering and survival labelling."""

from __future__ import annotations

import enum
import json
import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping

log = logging.getLogger(__name__)

RESTAURANT_CATEGORY = "restaurants"
TIMESTAMP_FORMAT = "%Y-%m-%d %H:%M:%S"

# Record kind -> accepted file names, first one is used when writing.
FILE_NAMES = {
    "business": ("business.json", "yelp_academic_dataset_business.json"),
    "review": ("review.json", "yelp_academic_dataset_review.json"),
    "checkin": ("checkin.json", "yelp_academic_dataset_checkin.json"),
    "photo": ("photo.json", "photos.json", "yelp_academic_dataset_photo.json"),
}


class CorpusError(Exception):
    """Fatal problem with an input corpus."""


class RecordError(ValueError):
    """A single record violates its invariants and is skipped."""


class Label(str, enum.Enum):
    SURVIVED = "Survived"
    DEAD = "Dead"

    @property
    def y(self) -> int:
        # Positive class is Survived.
        return 1 if self is Label.SURVIVED else 0


def parse_timestamp(value: Any) -> datetime:
    if isinstance(value, datetime):
        return value
    text = str(value).strip()
    try:
        return datetime.strptime(text, TIMESTAMP_FORMAT)
    except ValueError:
        pass
    try:
        return datetime.fromisoformat(text)
    except ValueError as exc:
        raise RecordError(f"unparseable timestamp {value!r}") from exc


def format_timestamp(ts: datetime) -> str:
    return ts.strftime(TIMESTAMP_FORMAT)


def window_end(as_of: date) -> datetime:
    """Exclusive end instant of a snapshot dated ``as_of`` (midnight after it)."""
    return datetime.combine(as_of + timedelta(days=1), time.min)


def split_categories(raw: Any) -> frozenset[str]:
    if raw is None:
        return frozenset()
    if isinstance(raw, str):
        parts = raw.split(",")
    else:
        parts = list(raw)
    return frozenset(p.strip() for p in parts if p and p.strip())


@dataclass(frozen=True)
class BusinessRecord:
    business_id: str
    name: str
    latitude: float
    longitude: float
    categories: frozenset[str]
    is_open: bool
    attributes: Mapping[str, Any] | None = None
    state: str = ""
    review_count: int = 0

    def __post_init__(self):
        if not self.business_id:
            raise RecordError("empty business_id")
        if not (-90.0 <= self.latitude <= 90.0) or not (-180.0 <= self.longitude <= 180.0):
            raise RecordError(f"coordinates out of range for {self.business_id}")
        if self.review_count < 0:
            raise RecordError("negative review_count")

    @property
    def is_restaurant(self) -> bool:
        return any(c.lower() == RESTAURANT_CATEGORY for c in self.categories)

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "BusinessRecord":
        try:
            lat = float(obj["latitude"])
            lon = float(obj["longitude"])
        except (KeyError, TypeError, ValueError) as exc:
            raise RecordError("missing or invalid coordinates") from exc
        if math.isnan(lat) or math.isnan(lon):
            raise RecordError("NaN coordinates")
        return cls(
            business_id=str(obj.get("business_id") or ""),
            name=str(obj.get("name") or ""),
            latitude=lat,
            longitude=lon,
            categories=split_categories(obj.get("categories")),
            is_open=bool(int(obj.get("is_open", 0))),
            attributes=obj.get("attributes"),
            state=str(obj.get("state") or ""),
            review_count=int(obj.get("review_count") or 0),
        )

    def to_json(self) -> dict:
        return {
            "business_id": self.business_id,
            "name": self.name,
            "latitude": self.latitude,
            "longitude": self.longitude,
            "categories": ", ".join(sorted(self.categories)),
            "is_open": int(self.is_open),
            "attributes": None if self.attributes is None else dict(self.attributes),
            "state": self.state,
            "review_count": self.review_count,
        }


@dataclass(frozen=True)
class ReviewRecord:
    review_id: str
    business_id: str
    user_id: str
    stars: int
    timestamp: datetime
    text: str = ""

    def __post_init__(self):
        if self.stars not in (1, 2, 3, 4, 5):
            raise RecordError(f"stars out of range: {self.stars!r}")

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "ReviewRecord":
        raw_stars = obj.get("stars")
        try:
            stars_f = float(raw_stars)
        except (TypeError, ValueError) as exc:
            raise RecordError(f"invalid stars {raw_stars!r}") from exc
        if not stars_f.is_integer():
            raise RecordError(f"non-integer stars {raw_stars!r}")
        if not obj.get("review_id") or not obj.get("business_id"):
            raise RecordError("review without id")
        return cls(
            review_id=str(obj["review_id"]),
            business_id=str(obj["business_id"]),
            user_id=str(obj.get("user_id") or ""),
            stars=int(stars_f),
            timestamp=parse_timestamp(obj.get("date")),
            text=str(obj.get("text") or ""),
        )

    def to_json(self) -> dict:
        return {
            "review_id": self.review_id,
            "user_id": self.user_id,
            "business_id": self.business_id,
            "stars": self.stars,
            "date": format_timestamp(self.timestamp),
            "text": self.text,
        }


@dataclass(frozen=True)
class CheckinRecord:
    business_id: str
    timestamps: tuple[datetime, ...] = ()

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "CheckinRecord":
        if not obj.get("business_id"):
            raise RecordError("checkin without business_id")
        raw = obj.get("date", "")
        if isinstance(raw, str):
            items = [p for p in raw.split(",") if p.strip()]
        else:
            items = list(raw or [])
        return cls(str(obj["business_id"]), tuple(parse_timestamp(p) for p in items))

    def to_json(self) -> dict:
        return {
            "business_id": self.business_id,
            "date": ", ".join(format_timestamp(t) for t in self.timestamps),
        }


@dataclass(frozen=True)
class PhotoRecord:
    photo_id: str
    business_id: str

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "PhotoRecord":
        if not obj.get("photo_id") or not obj.get("business_id"):
            raise RecordError("photo without ids")
        return cls(str(obj["photo_id"]), str(obj["business_id"]))

    def to_json(self) -> dict:
        return {"photo_id": self.photo_id, "business_id": self.business_id}


@dataclass(frozen=True)
class ParseReport:
    lines: Mapping[str, int] = field(default_factory=dict)
    skipped: Mapping[str, int] = field(default_factory=dict)
    skip_reasons: Mapping[str, int] = field(default_factory=dict)
    orphans: Mapping[str, int] = field(default_factory=dict)

    @property
    def total_skipped(self) -> int:
        return sum(self.skipped.values())

    def to_json(self) -> dict:
        return {
            "lines": dict(self.lines),
            "skipped": dict(self.skipped),
            "skip_reasons": dict(sorted(self.skip_reasons.items())),
            "orphans": dict(self.orphans),
        }


@dataclass(frozen=True)
class Snapshot:
    """One dated version of the corpus. Immutable after construction."""

    as_of: date
    businesses: tuple[BusinessRecord, ...]
    reviews: tuple[ReviewRecord, ...] = ()
    checkins: tuple[CheckinRecord, ...] = ()
    photos: tuple[PhotoRecord, ...] = ()
    report: ParseReport = field(default_factory=ParseReport, compare=False)

    @cached_property
    def business_index(self) -> dict[str, BusinessRecord]:
        return {b.business_id: b for b in self.businesses}

    @cached_property
    def reviews_by_business(self) -> dict[str, list[ReviewRecord]]:
        out: dict[str, list[ReviewRecord]] = defaultdict(list)
        for r in self.reviews:
            out[r.business_id].append(r)
        return dict(out)

    @cached_property
    def checkins_by_business(self) -> dict[str, tuple[datetime, ...]]:
        out: dict[str, list[datetime]] = defaultdict(list)
        for c in self.checkins:
            out[c.business_id].extend(c.timestamps)
        return {k: tuple(v) for k, v in out.items()}

    @cached_property
    def photos_by_business(self) -> dict[str, int]:
        return dict(Counter(p.business_id for p in self.photos))

    @property
    def end(self) -> datetime:
        return window_end(self.as_of)

    def restaurant_ids(self, open_only: bool = False) -> list[str]:
        return sorted(
            b.business_id
            for b in self.businesses
            if b.is_restaurant and (b.is_open or not open_only)
        )


def _find_file(root: Path, kind: str) -> Path | None:
    for name in FILE_NAMES[kind]:
        p = root / name
        if p.exists():
            return p
    return None


def _iter_jsonl(path: Path) -> Iterator[tuple[int, Any]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError:
                yield lineno, None


def parse_snapshot(path: str | Path, as_of: date) -> Snapshot:
    """Load a directory of JSONL files into a :class:`Snapshot`.

    Malformed lines and records violating invariants (bad stars, bad
    coordinates, records dated after ``as_of``) are skipped and counted.
    Reviews, check-ins and photos whose business id does not resolve are
    kept and counted as orphans.
    """
    root = Path(path)
    business_file = _find_file(root, "business")
    if business_file is None:
        raise CorpusError(f"no business file in {root}")
    end = window_end(as_of)
    lines: Counter = Counter()
    skipped: Counter = Counter()
    reasons: Counter = Counter()

    def load(kind, parser):
        p = business_file if kind == "business" else _find_file(root, kind)
        if p is None:
            return []
        records = []
        for lineno, obj in _iter_jsonl(p):
            lines[kind] += 1
            if not isinstance(obj, dict):
                skipped[kind] += 1
                reasons[f"{kind}:malformed_json"] += 1
                log.warning("%s:%d: malformed JSON line skipped", p.name, lineno)
                continue
            try:
                rec = parser(obj)
            except (RecordError, KeyError, TypeError, ValueError) as exc:
                skipped[kind] += 1
                reasons[f"{kind}:invalid_record"] += 1
                log.warning("%s:%d: skipped (%s)", p.name, lineno, exc)
                continue
            if kind == "review" and rec.timestamp >= end:
                skipped[kind] += 1
                reasons["review:after_snapshot"] += 1
                continue
            if kind == "checkin":
                kept = tuple(t for t in rec.timestamps if t < end)
                if len(kept) != len(rec.timestamps):
                    reasons["checkin:timestamps_after_snapshot"] += len(rec.timestamps) - len(kept)
                    rec = CheckinRecord(rec.business_id, kept)
            records.append(rec)
        return records

    businesses = load("business", BusinessRecord.from_json)
    seen: set[str] = set()
    unique = []
    for b in businesses:
        if b.business_id in seen:
            skipped["business"] += 1
            reasons["business:duplicate_id"] += 1
            continue
        seen.add(b.business_id)
        unique.append(b)
    reviews = load("review", ReviewRecord.from_json)
    checkins = load("checkin", CheckinRecord.from_json)
    photos = load("photo", PhotoRecord.from_json)

    orphans = {
        "review": sum(r.business_id not in seen for r in reviews),
        "checkin": sum(c.business_id not in seen for c in checkins),
        "photo": sum(p.business_id not in seen for p in photos),
    }
    for kind, n in orphans.items():
        if n:
            log.warning("%d %s records reference unknown businesses", n, kind)
    report = ParseReport(dict(lines), dict(skipped), dict(reasons), orphans)
    return Snapshot(as_of, tuple(unique), tuple(reviews), tuple(checkins), tuple(photos), report)


def write_snapshot(s: Snapshot, path: str | Path) -> None:
    """Write ``s`` as Yelp-layout JSONL files under ``path``."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    groups: dict[str, Iterable] = {
        "business": s.businesses,
        "review": s.reviews,
        "checkin": s.checkins,
        "photo": s.photos,
    }
    for kind, records in groups.items():
        with open(root / FILE_NAMES[kind][0], "w", encoding="utf-8", newline="\n") as fh:
            for rec in records:
                fh.write(json.dumps(rec.to_json(), ensure_ascii=False))
                fh.write("\n")


def filter_restaurants(s: Snapshot) -> Snapshot:
    """Keep restaurants and the reviews, check-ins and photos that reference them."""
    keep = {b.business_id for b in s.businesses if b.is_restaurant}
    return Snapshot(
        as_of=s.as_of,
        businesses=tuple(b for b in s.businesses if b.business_id in keep),
        reviews=tuple(r for r in s.reviews if r.business_id in keep),
        checkins=tuple(c for c in s.checkins if c.business_id in keep),
        photos=tuple(p for p in s.photos if p.business_id in keep),
        report=s.report,
    )


@dataclass(frozen=True)
class LabeledRestaurant:
    business_id: str
    label: Label
    observation_end: date
    prediction_end: date

    def to_json(self) -> dict:
        return {
            "business_id": self.business_id,
            "label": self.label.value,
            "observation_end": self.observation_end.isoformat(),
            "prediction_end": self.prediction_end.isoformat(),
        }

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "LabeledRestaurant":
        return cls(
            obj["business_id"],
            Label(obj["label"]),
            date.fromisoformat(obj["observation_end"]),
            date.fromisoformat(obj["prediction_end"]),
        )


@dataclass(frozen=True)
class LabelReport:
    considered: int
    survived: int
    dead: int
    closed_in_prediction: int
    delisted: int
    excluded_closed_at_observation: int
    observation_end: date
    prediction_end: date

    def to_json(self) -> dict:
        return {
            "considered": self.considered,
            "survived": self.survived,
            "dead": self.dead,
            "dead_closed": self.closed_in_prediction,
            "dead_delisted": self.delisted,
            "excluded_closed_at_observation": self.excluded_closed_at_observation,
            "observation_end": self.observation_end.isoformat(),
            "prediction_end": self.prediction_end.isoformat(),
        }


def derive_labels(
    observation: Snapshot, prediction: Snapshot
) -> tuple[list[LabeledRestaurant], LabelReport]:
    """Label every restaurant open at the end of the observation period.

    Survived if open in the prediction snapshot, Dead if closed there or
    missing from it (delisting counts as closure). Results are sorted by
    business id.
    """
    if not observation.as_of < prediction.as_of:
        raise CorpusError(
            f"observation date {observation.as_of} must precede prediction date {prediction.as_of}"
        )
    later = prediction.business_index
    if not set(observation.business_index).intersection(later):
        raise CorpusError("observation and prediction snapshots share no business ids")

    labels = []
    closed = delisted = excluded = 0
    for b in sorted(observation.businesses, key=lambda b: b.business_id):
        if not b.is_restaurant:
            continue
        if not b.is_open:
            excluded += 1
            continue
        after = later.get(b.business_id)
        if after is None:
            delisted += 1
            label = Label.DEAD
        elif after.is_open:
            label = Label.SURVIVED
        else:
            closed += 1
            label = Label.DEAD
        labels.append(LabeledRestaurant(b.business_id, label, observation.as_of, prediction.as_of))
    survived = sum(l.label is Label.SURVIVED for l in labels)
    report = LabelReport(
        considered=len(labels),
        survived=survived,
        dead=len(labels) - survived,
        closed_in_prediction=closed,
        delisted=delisted,
        excluded_closed_at_observation=excluded,
        observation_end=observation.as_of,
        prediction_end=prediction.as_of,
    )
    return labels, report


def write_labels(labels: Iterable[LabeledRestaurant], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for l in labels:
            fh.write(json.dumps(l.to_json()) + "\n")


def read_labels(path: str | Path) -> list[LabeledRestaurant]:
    with open(path, encoding="utf-8") as fh:
        return [LabeledRestaurant.from_json(json.loads(line)) for line in fh if line.strip()]
