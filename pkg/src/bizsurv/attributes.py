"""Fixed-width encoding of Yelp business attributes.

Three-valued attributes (missing / false / true) become two columns,
``<name>_present`` and ``<name>``. Enumerations are one-hot with an
explicit ``<name>_missing`` column. Raw Yelp values frequently arrive as
Python-literal strings (``"True"``, ``"u'free'"``, ``"{'romantic': False}"``);
:func:`parse_attribute_value` normalises them.
"""

from __future__ import annotations

import ast
import re
from collections import Counter
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np
import pandas as pd

from .corpus import BusinessRecord, Snapshot

AMBIENCE = ("romantic", "intimate", "classy", "hipster", "divey", "touristy", "trendy", "upscale", "casual")
DIETARY = ("dairy-free", "gluten-free", "vegan", "kosher", "halal", "soy-free", "vegetarian")
PARKING = ("garage", "street", "validated", "lot", "valet")


@dataclass(frozen=True)
class AttributeSpec:
    """One source attribute and how it is encoded.

    kind is ``"price"``, ``"bool"``, ``"enum"`` or ``"map"``.
    """

    name: str
    source: str
    kind: str
    group: str
    values: tuple[str, ...] = ()


DEFAULT_ATTRIBUTES: tuple[AttributeSpec, ...] = (
    AttributeSpec("price_range", "RestaurantsPriceRange2", "price", "pricing"),
    AttributeSpec("ambience", "Ambience", "map", "ambience", AMBIENCE),
    AttributeSpec("dietary", "DietaryRestrictions", "map", "restrictions", DIETARY),
    AttributeSpec("alcohol", "Alcohol", "enum", "restrictions", ("none", "beer_and_wine", "full_bar")),
    AttributeSpec("good_for_kids", "GoodForKids", "bool", "restrictions"),
    AttributeSpec("dogs_allowed", "DogsAllowed", "bool", "restrictions"),
    AttributeSpec("attire", "RestaurantsAttire", "enum", "restrictions", ("casual", "dressy", "formal")),
    AttributeSpec("outdoor_seating", "OutdoorSeating", "bool", "amenities"),
    AttributeSpec("bike_parking", "BikeParking", "bool", "amenities"),
    AttributeSpec("parking", "BusinessParking", "map", "amenities", PARKING),
    AttributeSpec("wifi", "WiFi", "enum", "amenities", ("no", "free", "paid")),
    AttributeSpec("has_tv", "HasTV", "bool", "amenities"),
    AttributeSpec("takes_reservations", "RestaurantsReservations", "bool", "services"),
    AttributeSpec("happy_hour", "HappyHour", "bool", "services"),
)

_QUOTED = re.compile(r"""^u?(['"])(.*)\1$""", re.S)


def parse_attribute_value(raw: Any) -> Any:
    """Normalise a raw Yelp attribute value.

    Returns None for absent/null values, bools for boolean literals, ints
    for integer strings, dicts for nested maps and lowercase strings
    otherwise. Unparseable nested maps are returned as the original string.
    """
    if raw is None:
        return None
    if isinstance(raw, bool):
        return raw
    if isinstance(raw, (int, float)):
        return int(raw) if float(raw).is_integer() else raw
    if isinstance(raw, Mapping):
        return {str(k).lower(): parse_attribute_value(v) for k, v in raw.items()}
    text = str(raw).strip()
    if text.startswith("{"):
        try:
            value = ast.literal_eval(text)
        except (ValueError, SyntaxError):
            return text
        return parse_attribute_value(value) if isinstance(value, dict) else text
    m = _QUOTED.match(text)
    if m:
        text = m.group(2)
    low = text.lower()
    if low in ("none", "null", ""):
        # Alcohol uses u'none' as a real value; only the bare literal means null.
        return "none" if m else None
    if low == "true":
        return True
    if low == "false":
        return False
    if re.fullmatch(r"-?\d+", low):
        return int(low)
    return low


def attribute_columns(specs: Sequence[AttributeSpec] = DEFAULT_ATTRIBUTES) -> list[tuple[str, str, str]]:
    """(column, dtype, source path) for every encoded column, in order."""
    cols = []
    for sp in specs:
        if sp.kind == "price":
            cols.append((sp.name, "int 0..4 (0 = missing)", sp.source))
        elif sp.kind == "bool":
            cols += [(f"{sp.name}_present", "binary", sp.source), (sp.name, "binary", sp.source)]
        elif sp.kind == "enum":
            cols.append((f"{sp.name}_missing", "binary", sp.source))
            cols += [(f"{sp.name}_{v}", "binary", sp.source) for v in sp.values]
        elif sp.kind == "map":
            for key in sp.values:
                col = f"{sp.name}_{re.sub(r'[^a-z0-9]+', '_', key)}"
                cols += [(f"{col}_present", "binary", f"{sp.source}.{key}"), (col, "binary", f"{sp.source}.{key}")]
        else:
            raise ValueError(f"unknown attribute kind {sp.kind!r}")
    cols += [("image_count", "count", "photo records"), ("review_count", "count", "review records")]
    return cols


def _tri(value: Any) -> tuple[int, int] | None:
    """(present, value) for a three-valued entry, None if unrecognised."""
    if value is None:
        return 0, 0
    if isinstance(value, bool):
        return 1, int(value)
    if isinstance(value, int) and value in (0, 1):
        return 1, value
    return None


@dataclass(frozen=True)
class AttributeVector:
    columns: tuple[str, ...]
    values: np.ndarray

    def __getitem__(self, column: str):
        return self.values[self.columns.index(column)]

    def pair(self, name: str) -> tuple[int, int]:
        return int(self[f"{name}_present"]), int(self[name])


def encode_attributes(
    b: BusinessRecord,
    image_count: int = 0,
    review_count: int = 0,
    specs: Sequence[AttributeSpec] = DEFAULT_ATTRIBUTES,
    unrecognized: Counter | None = None,
) -> AttributeVector:
    """Encode one business. Total: never raises on odd attribute values."""
    raw_attrs = b.attributes if isinstance(b.attributes, Mapping) else {}
    out: list[float] = []

    def bad(path, value):
        if unrecognized is not None:
            unrecognized[f"{path}={value!r}"] += 1

    for sp in specs:
        value = parse_attribute_value(raw_attrs.get(sp.source))
        if sp.kind == "price":
            if not isinstance(value, bool) and value in (1, 2, 3, 4):
                out.append(value)
            else:
                if value is not None:
                    bad(sp.source, value)
                out.append(0)
        elif sp.kind == "bool":
            tri = _tri(value)
            if tri is None:
                bad(sp.source, value)
                tri = (0, 0)
            out += tri
        elif sp.kind == "enum":
            onehot = [0] * (len(sp.values) + 1)
            if value in sp.values:
                onehot[1 + sp.values.index(value)] = 1
            else:
                if value is not None:
                    bad(sp.source, value)
                onehot[0] = 1
            out += onehot
        else:
            if value is not None and not isinstance(value, dict):
                bad(sp.source, value)
                value = None
            sub = value or {}
            for key in sp.values:
                tri = _tri(sub.get(key))
                if tri is None:
                    bad(f"{sp.source}.{key}", sub.get(key))
                    tri = (0, 0)
                out += tri
    out += [image_count, review_count]
    cols = tuple(c for c, _, _ in attribute_columns(specs))
    return AttributeVector(cols, np.asarray(out, dtype=np.int64))


def engagement_counts(r: str, s: Snapshot) -> tuple[int, int]:
    """(image_count, review_count) for ``r`` within the observation window."""
    end = s.end
    reviews = sum(1 for x in s.reviews_by_business.get(r, ()) if x.timestamp < end)
    return s.photos_by_business.get(r, 0), reviews


def attribute_schema(specs: Sequence[AttributeSpec] = DEFAULT_ATTRIBUTES) -> dict:
    return {
        "version": 1,
        "columns": [{"name": c, "type": t, "source": src} for c, t, src in attribute_columns(specs)],
        "groups": {sp.name: sp.group for sp in specs},
    }


def compute_attribute_features(
    s: Snapshot,
    restaurant_ids: Sequence[str],
    specs: Sequence[AttributeSpec] = DEFAULT_ATTRIBUTES,
) -> tuple[pd.DataFrame, dict]:
    ids = sorted(restaurant_ids)
    lookup = s.business_index
    unrecognized: Counter = Counter()
    rows = []
    for rid in ids:
        images, reviews = engagement_counts(rid, s)
        rows.append(encode_attributes(lookup[rid], images, reviews, specs, unrecognized).values)
    cols = [c for c, _, _ in attribute_columns(specs)]
    data = np.vstack(rows) if rows else np.zeros((0, len(cols)), dtype=np.int64)
    df = pd.DataFrame(data, index=pd.Index(ids, name="business_id"), columns=cols)
    report = {"restaurants": len(ids), "unrecognized_values": dict(sorted(unrecognized.items()))}
    return df, report
