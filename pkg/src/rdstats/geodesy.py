"""Bearings on a spherical earth.

Two ways of pointing from a site to a target are supported: the initial
azimuth of the great circle and the constant azimuth of the rhumb line
(loxodrome).  A third, composite model returns the bisector of the bearings
towards two fixed anchors and ignores the target altogether.

All public bearings are degrees clockwise from geographic north in
``[0, 360)``.  The ``*_rad`` helpers work on numpy arrays in radians and do
no validation; they are the ones used in the optimizer's inner loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import AntipodalBearings, CoincidentPoints, GeometryError, PoleUndefined

COINCIDENCE_TOL_RAD = 1e-9
ANTIPODAL_TOL_DEG = 1e-9
TWO_PI = 2.0 * math.pi


def normalize_lon(lon: float) -> float:
    """Wrap a longitude into (-180, 180]."""
    lon = math.fmod(lon, 360.0)
    if lon <= -180.0:
        lon += 360.0
    elif lon > 180.0:
        lon -= 360.0
    return lon


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        lat = float(self.lat)
        lon = float(self.lon)
        if not (math.isfinite(lat) and math.isfinite(lon)):
            raise GeometryError(f"non-finite coordinates ({lat}, {lon})")
        if not -90.0 <= lat <= 90.0:
            raise GeometryError(f"latitude {lat} outside [-90, 90]")
        object.__setattr__(self, "lat", lat)
        object.__setattr__(self, "lon", normalize_lon(lon))

    def as_tuple(self) -> tuple[float, float]:
        return (self.lat, self.lon)

    def __str__(self):
        ns = "N" if self.lat >= 0 else "S"
        ew = "E" if self.lon >= 0 else "W"
        return f"{abs(self.lat):.4f}°{ns} {abs(self.lon):.4f}°{ew}"


# ---------------------------------------------------------------------------
# vectorized kernels (radians)


def wrap_pi(x):
    """Wrap angles into (-pi, pi]."""
    y = np.mod(np.asarray(x, dtype=float) + math.pi, TWO_PI) - math.pi
    return np.where(y == -math.pi, math.pi, y)


def separation_rad(lat1, lon1, lat2, lon2):
    """Central angle between points (haversine form, stable for small angles)."""
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    h = np.sin(dlat / 2) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin(dlon / 2) ** 2
    return 2.0 * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def great_circle_bearing_rad(lat1, lon1, lat2, lon2):
    dlon = lon2 - lon1
    y = np.sin(dlon) * np.cos(lat2)
    x = np.cos(lat1) * np.sin(lat2) - np.sin(lat1) * np.cos(lat2) * np.cos(dlon)
    return np.mod(np.arctan2(y, x), TWO_PI)


def mercator_ordinate(lat):
    """Isometric latitude; infinite at the poles."""
    with np.errstate(divide="ignore"):
        return np.arctanh(np.sin(lat))


def rhumb_bearing_rad(lat1, lon1, lat2, lon2):
    dlon = wrap_pi(lon2 - lon1)
    dpsi = mercator_ordinate(lat2) - mercator_ordinate(lat1)
    return np.mod(np.arctan2(dlon, dpsi), TWO_PI)


def bisect_rad(a, b):
    """Bisector of two bearings through the smaller enclosed angle.

    Returns NaN where the bearings are antipodal.
    """
    diff = wrap_pi(b - a)
    mid = np.mod(a + diff / 2.0, TWO_PI)
    antipodal = np.abs(np.abs(diff) - math.pi) < math.radians(ANTIPODAL_TOL_DEG)
    return np.where(antipodal, np.nan, mid)


# ---------------------------------------------------------------------------
# bearing models


@dataclass(frozen=True)
class GreatCircle:
    name = "great-circle"

    def bearings_rad(self, lat, lon, to_lat, to_lon):
        return great_circle_bearing_rad(lat, lon, to_lat, to_lon)

    def bearing(self, start: GeoPoint, end: GeoPoint) -> float:
        return great_circle_bearing(start, end)


@dataclass(frozen=True)
class RhumbLine:
    name = "rhumb"

    def bearings_rad(self, lat, lon, to_lat, to_lon):
        return rhumb_bearing_rad(lat, lon, to_lat, to_lon)

    def bearing(self, start: GeoPoint, end: GeoPoint) -> float:
        return rhumb_bearing(start, end)


@dataclass(frozen=True)
class Bisector:
    """Bisector of the bearings towards two fixed anchors.

    The target passed to ``bearings_rad`` is ignored: every reconstruction
    point yields the same bearing, so the model is a fixed candidate rather
    than something the optimizer can adapt.
    """

    anchor_a: GeoPoint
    anchor_b: GeoPoint
    base: Union[GreatCircle, RhumbLine] = field(default_factory=RhumbLine)
    name = "bisector"

    def __post_init__(self):
        if _separation(self.anchor_a, self.anchor_b) < COINCIDENCE_TOL_RAD:
            raise CoincidentPoints("bisector anchors must be distinct")

    def bearings_rad(self, lat, lon, to_lat=None, to_lon=None):
        a = self.base.bearings_rad(lat, lon, math.radians(self.anchor_a.lat),
                                   math.radians(self.anchor_a.lon))
        b = self.base.bearings_rad(lat, lon, math.radians(self.anchor_b.lat),
                                   math.radians(self.anchor_b.lon))
        return bisect_rad(a, b)

    def bearing(self, start: GeoPoint, end: GeoPoint | None = None) -> float:
        return bisector_bearing(start, self)


BearingModel = Union[GreatCircle, RhumbLine, Bisector]

GREAT_CIRCLE = GreatCircle()
RHUMB = RhumbLine()


def parse_model(text: str) -> BearingModel:
    """Parse ``great-circle``, ``rhumb`` or ``bisector:LAT,LON:LAT,LON[:base]``."""
    text = text.strip().lower()
    if text in ("great-circle", "gc", "great_circle"):
        return GREAT_CIRCLE
    if text in ("rhumb", "rhumb-line", "rhumb_line"):
        return RHUMB
    if text.startswith("bisector:"):
        parts = text.split(":")[1:]
        if len(parts) not in (2, 3):
            raise ValueError(f"cannot parse bearing model {text!r}")
        anchors = []
        for part in parts[:2]:
            lat, lon = (float(v) for v in part.split(","))
            anchors.append(GeoPoint(lat, lon))
        base = parse_model(parts[2]) if len(parts) == 3 else RHUMB
        if isinstance(base, Bisector):
            raise ValueError("bisector base must be great-circle or rhumb")
        return Bisector(anchors[0], anchors[1], base)
    raise ValueError(f"unknown bearing model {text!r}")


def model_label(model: BearingModel) -> str:
    if isinstance(model, Bisector):
        a, b = model.anchor_a, model.anchor_b
        return f"bisector:{a.lat},{a.lon}:{b.lat},{b.lon}:{model.base.name}"
    return model.name


# ---------------------------------------------------------------------------
# scalar API (degrees)


def _radians(p: GeoPoint) -> tuple[float, float]:
    return math.radians(p.lat), math.radians(p.lon)


def _separation(a: GeoPoint, b: GeoPoint) -> float:
    return float(separation_rad(*_radians(a), *_radians(b)))


def angular_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance between two points, in degrees."""
    return math.degrees(_separation(a, b))


def _check_distinct(a: GeoPoint, b: GeoPoint):
    if _separation(a, b) < COINCIDENCE_TOL_RAD:
        raise CoincidentPoints(f"{a} and {b} coincide")


def _to_degrees(rad) -> float:
    deg = math.degrees(float(rad)) % 360.0
    return 0.0 if deg >= 360.0 else deg


def great_circle_bearing(start: GeoPoint, end: GeoPoint) -> float:
    """Initial azimuth of the geodesic from ``start`` to ``end``."""
    _check_distinct(start, end)
    return _to_degrees(great_circle_bearing_rad(*_radians(start), *_radians(end)))


def rhumb_bearing(start: GeoPoint, end: GeoPoint) -> float:
    """Constant azimuth of the loxodrome, longitude difference on the short wrap."""
    _check_distinct(start, end)
    if abs(start.lat) == 90.0 or abs(end.lat) == 90.0:
        raise PoleUndefined("rhumb bearing undefined at a pole")
    return _to_degrees(rhumb_bearing_rad(*_radians(start), *_radians(end)))


def bisect_bearings(a: float, b: float) -> float:
    """Bisector of two bearings in degrees through the smaller enclosed angle."""
    diff = (b - a + 180.0) % 360.0 - 180.0
    if abs(abs(diff) - 180.0) < ANTIPODAL_TOL_DEG:
        raise AntipodalBearings(f"bearings {a} and {b} are antipodal")
    return (a + diff / 2.0) % 360.0


def bisector_bearing(start: GeoPoint, model: Bisector) -> float:
    a = model.base.bearing(start, model.anchor_a)
    b = model.base.bearing(start, model.anchor_b)
    return bisect_bearings(a, b)


def destination(start: GeoPoint, bearing: float, distance: float) -> GeoPoint:
    """Point reached after ``distance`` degrees of arc along a great circle."""
    lat1, lon1 = _radians(start)
    theta = math.radians(bearing)
    delta = math.radians(distance)
    lat2 = math.asin(math.sin(lat1) * math.cos(delta)
                     + math.cos(lat1) * math.sin(delta) * math.cos(theta))
    lon2 = lon1 + math.atan2(math.sin(theta) * math.sin(delta) * math.cos(lat1),
                             math.cos(delta) - math.sin(lat1) * math.sin(lat2))
    return GeoPoint(max(-90.0, min(90.0, math.degrees(lat2))), math.degrees(lon2))


def midpoint(a: GeoPoint, b: GeoPoint) -> GeoPoint:
    """Midpoint of the great-circle arc between two points."""
    return destination(a, great_circle_bearing(a, b), angular_distance(a, b) / 2.0)
