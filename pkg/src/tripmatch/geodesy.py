"""WGS84 geometric primitives used by the matchers.

Distances are haversine on a spherical earth (R = 6,371,000 m), accurate to
well under 0.5% at city scale, which is negligible against the 100 m matching
thresholds. Segment-interior distances use an equirectangular projection about
the query point; projection error at sub-kilometre scale is below 0.1 m.
"""
from __future__ import annotations

import math
from typing import Sequence

from .types import GeoPoint

EARTH_RADIUS_M = 6_371_000.0

LatLng = tuple[float, float]


def distance_m(a: LatLng, b: LatLng) -> float:
    """Great-circle distance in metres between two (lat, lng) points."""
    lat1, lng1 = math.radians(a[0]), math.radians(a[1])
    lat2, lng2 = math.radians(b[0]), math.radians(b[1])
    dlat = lat2 - lat1
    dlng = lng2 - lng1
    h = math.sin(dlat / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlng / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def _local_xy(origin: LatLng, p: LatLng) -> tuple[float, float]:
    """Equirectangular projection of p into metres about origin."""
    x = math.radians(p[1] - origin[1]) * math.cos(math.radians(origin[0])) * EARTH_RADIUS_M
    y = math.radians(p[0] - origin[0]) * EARTH_RADIUS_M
    return x, y


def point_to_segment_m(p: LatLng, a: LatLng, b: LatLng) -> float:
    """Distance from p to the segment a-b.

    The nearest interior point is found in a local planar frame about p;
    endpoint distances fall back to the spherical formula.
    """
    ax, ay = _local_xy(p, a)
    bx, by = _local_xy(p, b)
    dx, dy = bx - ax, by - ay
    seg_len2 = dx * dx + dy * dy
    if seg_len2 == 0.0:
        return distance_m(p, a)
    # p is the local origin, so the projection parameter is -a.(b-a)/|b-a|^2
    t = -(ax * dx + ay * dy) / seg_len2
    if t <= 0.0:
        return distance_m(p, a)
    if t >= 1.0:
        return distance_m(p, b)
    cx, cy = ax + t * dx, ay + t * dy
    return math.hypot(cx, cy)


def point_to_linestring_m(p: LatLng, line: Sequence[LatLng]) -> float:
    """Minimum distance from p to a polyline; a single point degenerates to
    plain point distance."""
    if len(line) == 0:
        raise ValueError("linestring must contain at least one point")
    if len(line) == 1:
        return distance_m(p, line[0])
    best = math.inf
    prev = line[0]
    for cur in line[1:]:
        d = point_to_segment_m(p, prev, cur)
        if d < best:
            best = d
        prev = cur
    return best


def resample_min_spacing(points: Sequence, spacing_m: float) -> list:
    """Thin a trace so consecutive kept points are at least spacing_m apart.

    Keeps the first point, then each point whose distance to the last kept
    point is >= spacing_m. Works on anything with lat/lng as items [0]/[1]
    or attributes, preserving the original objects.
    """
    if spacing_m <= 0:
        raise ValueError("spacing must be positive")
    kept: list = []
    last: GeoPoint | None = None
    for p in points:
        geo = _as_latlng(p)
        if last is None or distance_m(last, geo) >= spacing_m:
            kept.append(p)
            last = geo
    return kept


def _as_latlng(p) -> LatLng:
    lat = getattr(p, "lat", None)
    if lat is not None:
        return (lat, p.lng)
    return (p[0], p[1])


def trace_length_m(points: Sequence[LatLng]) -> float:
    """Total polyline length in metres."""
    return sum(distance_m(a, b) for a, b in zip(points, points[1:]))


def offset_point(origin: LatLng, east_m: float, north_m: float) -> GeoPoint:
    """Point displaced from origin by local metric offsets (test/fixture aid)."""
    dlat = math.degrees(north_m / EARTH_RADIUS_M)
    dlng = math.degrees(east_m / (EARTH_RADIUS_M * math.cos(math.radians(origin[0]))))
    return GeoPoint(origin[0] + dlat, origin[1] + dlng)
