"""Identify the ridden vehicle from sampled fleet positions.

The current method compares user samples against short vehicle linestrings
collected in a closed +/-60 s window around each sample; the prior baseline
("old live") used four user samples and raw point-to-point distances, which
starts missing once vehicles move fast enough to put 30 s fixes further than
two distance limits apart (~24 km/h).
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Iterable, Optional, Sequence

import numpy as np

from .geodesy import EARTH_RADIUS_M, distance_m, point_to_linestring_m
from .types import (
    ActivitySegment,
    GeoPoint,
    LineType,
    Linestring,
    TracePoint,
    VehiclePosition,
)

_TIME_REF = datetime(2000, 1, 1)

NEW_LIVE = "new-live"
OLD_LIVE = "old-live"


def _as_seconds(t: datetime) -> float:
    return (t - _TIME_REF).total_seconds()


@dataclass(frozen=True)
class LiveMatchConfig:
    max_user_samples: int = 40
    distance_limit_m: float = 100.0
    window_s: float = 60.0
    quorum_fraction: float = 0.75
    old_live_samples: int = 4
    bbox_margin_m: float = 200.0

    def __post_init__(self) -> None:
        if min(self.max_user_samples, self.distance_limit_m, self.window_s,
               self.old_live_samples, self.bbox_margin_m) <= 0:
            raise ValueError("live matcher parameters must be positive")
        if not 0.0 < self.quorum_fraction <= 1.0:
            raise ValueError("quorum_fraction must be in (0, 1]")


class _VehicleTrack:
    """One vehicle's fixes, time-sorted, with numpy views for fast windows."""

    __slots__ = ("ref", "times_s", "lats", "lngs", "names", "types", "times")

    def __init__(self, ref: str, rows: list[VehiclePosition]):
        rows.sort(key=lambda r: r.time)
        self.ref = ref
        self.times = [r.time for r in rows]
        self.times_s = np.array([_as_seconds(r.time) for r in rows])
        self.lats = np.array([r.lat for r in rows])
        self.lngs = np.array([r.lng for r in rows])
        self.names = [r.line_name for r in rows]
        self.types = [r.line_type for r in rows]

    def window_bounds(self, t: datetime, window_s: float) -> tuple[int, int]:
        ts = _as_seconds(t)
        lo = int(np.searchsorted(self.times_s, ts - window_s, side="left"))
        hi = int(np.searchsorted(self.times_s, ts + window_s, side="right"))
        return lo, hi

    def any_in_range(self, t0: datetime, t1: datetime) -> bool:
        lo = int(np.searchsorted(self.times_s, _as_seconds(t0), side="left"))
        return lo < len(self.times_s) and self.times_s[lo] <= _as_seconds(t1)

    def bbox_in_range(self, t0: datetime, t1: datetime):
        lo = int(np.searchsorted(self.times_s, _as_seconds(t0), side="left"))
        hi = int(np.searchsorted(self.times_s, _as_seconds(t1), side="right"))
        if lo >= hi:
            return None
        return (float(self.lats[lo:hi].min()), float(self.lngs[lo:hi].min()),
                float(self.lats[lo:hi].max()), float(self.lngs[lo:hi].max()))


class PositionIndex:
    """Immutable fleet-position index grouped by vehicle_ref."""

    def __init__(self, positions: Iterable[VehiclePosition]):
        grouped: dict[str, list[VehiclePosition]] = {}
        for row in positions:
            grouped.setdefault(row.vehicle_ref, []).append(row)
        self._tracks = {ref: _VehicleTrack(ref, rows)
                        for ref, rows in grouped.items()}

    def __len__(self) -> int:
        return len(self._tracks)

    @property
    def vehicle_refs(self) -> list[str]:
        return sorted(self._tracks)

    def track(self, vehicle_ref: str) -> Optional[_VehicleTrack]:
        return self._tracks.get(vehicle_ref)

    def vehicles_in_range(self, t0: datetime, t1: datetime) -> list[str]:
        return sorted(ref for ref, track in self._tracks.items()
                      if track.any_in_range(t0, t1))


def select_user_samples(trace: Sequence[TracePoint], max_samples: int,
                        ) -> list[TracePoint]:
    """At most max_samples points spread evenly by index, always keeping the
    first and last point."""
    n = len(trace)
    if n <= max_samples:
        return list(trace)
    last = n - 1
    return [trace[round(i * last / (max_samples - 1))] for i in range(max_samples)]


def vehicle_linestring(vehicle_ref: str, t: datetime, window_s: float,
                       index: PositionIndex) -> Linestring:
    """The vehicle's path within the closed window [t - window_s, t + window_s];
    empty when the vehicle has no fix there."""
    track = index.track(vehicle_ref)
    if track is None:
        return Linestring()
    lo, hi = track.window_bounds(t, window_s)
    if lo >= hi:
        return Linestring()
    return Linestring(
        points=[GeoPoint(float(la), float(ln))
                for la, ln in zip(track.lats[lo:hi], track.lngs[lo:hi])],
        times=track.times[lo:hi],
    )


@dataclass
class VehicleScore:
    vehicle_ref: str
    score: float
    matched_fraction: float
    sample_distances: list[Optional[float]]
    votes: list[tuple[str, LineType, datetime]]  # (line_name, line_type, fix time)

    @property
    def mean_matched_distance(self) -> float:
        matched = [d for d in self.sample_distances
                   if d is not None and not math.isinf(d)]
        return sum(matched) / len(matched) if matched else math.inf


def score_vehicle(samples: Sequence[TracePoint], vehicle_ref: str,
                  cfg: LiveMatchConfig, index: PositionIndex,
                  use_linestring: bool = True) -> Optional[VehicleScore]:
    """Score one vehicle against the user samples.

    A sample matches when the vehicle's window geometry is non-empty and
    within the distance limit; samples with empty windows stay in the quorum
    denominator. Returns None below quorum or at zero score.
    """
    track = index.track(vehicle_ref)
    if track is None or not samples:
        return None
    distances: list[Optional[float]] = []
    votes: list[tuple[str, LineType, datetime]] = []
    matched = 0
    score = 0.0
    for sample in samples:
        lo, hi = track.window_bounds(sample.time, cfg.window_s)
        if lo >= hi:
            distances.append(None)
            continue
        window = [(float(la), float(ln))
                  for la, ln in zip(track.lats[lo:hi], track.lngs[lo:hi])]
        p = (sample.lat, sample.lng)
        point_dists = [distance_m(p, w) for w in window]
        d = point_to_linestring_m(p, window) if use_linestring else min(point_dists)
        distances.append(d)
        if d <= cfg.distance_limit_m:
            matched += 1
            score += cfg.distance_limit_m - d
            nearest = min(range(len(window)), key=lambda i: (point_dists[i], i))
            votes.append((track.names[lo + nearest], track.types[lo + nearest],
                          track.times[lo + nearest]))
    fraction = matched / len(samples)
    if fraction < cfg.quorum_fraction or score <= 0.0:
        return None
    return VehicleScore(vehicle_ref, score, fraction, distances, votes)


@dataclass(frozen=True)
class LiveMatchResult:
    segment_id: int
    method: str
    vehicle_ref: str
    line_type: LineType
    line_name: str
    score: float
    matched_fraction: float
    sample_distances: tuple[Optional[float], ...]


def _segment_bbox(samples: Sequence[TracePoint], margin_m: float):
    lats = [p.lat for p in samples]
    lngs = [p.lng for p in samples]
    mid_lat = (min(lats) + max(lats)) / 2
    dlat = math.degrees(margin_m / EARTH_RADIUS_M)
    dlng = math.degrees(margin_m / (EARTH_RADIUS_M *
                                    max(0.01, math.cos(math.radians(mid_lat)))))
    return (min(lats) - dlat, min(lngs) - dlng, max(lats) + dlat, max(lngs) + dlng)


def _boxes_intersect(a, b) -> bool:
    return not (a[2] < b[0] or b[2] < a[0] or a[3] < b[1] or b[3] < a[1])


def _pick_identity(votes: list[tuple[str, LineType, datetime]],
                   midpoint: datetime) -> tuple[str, LineType]:
    """Modal line name over the matched votes; ties go to the name observed
    nearest the segment midpoint (some vehicles flicker to bogus names)."""
    counts = Counter(name for name, _, _ in votes)
    top = max(counts.values())

    def tie_key(name: str) -> tuple[float, str]:
        nearest = min(abs((t - midpoint).total_seconds())
                      for n, _, t in votes if n == name)
        return nearest, name

    winner = min((name for name, c in counts.items() if c == top), key=tie_key)
    candidates = [(abs((t - midpoint).total_seconds()), t, lt.value, lt)
                  for n, lt, t in votes if n == winner]
    candidates.sort(key=lambda item: (item[0], item[1], item[2]))
    return winner, candidates[0][3]


def _match(segment: ActivitySegment, cfg: LiveMatchConfig, index: PositionIndex,
           n_samples: int, use_linestring: bool, method: str,
           ) -> Optional[LiveMatchResult]:
    samples = select_user_samples(segment.trace, n_samples)
    if len(samples) < 2:
        return None
    t0 = segment.start_time - timedelta(seconds=cfg.window_s)
    t1 = segment.end_time + timedelta(seconds=cfg.window_s)
    seg_box = _segment_bbox(samples, cfg.bbox_margin_m)

    best: Optional[VehicleScore] = None
    for ref in index.vehicles_in_range(t0, t1):
        track = index.track(ref)
        vbox = track.bbox_in_range(t0, t1)
        if vbox is None or not _boxes_intersect(seg_box, vbox):
            continue
        scored = score_vehicle(samples, ref, cfg, index,
                               use_linestring=use_linestring)
        if scored is None:
            continue
        if best is None or _score_order(scored) < _score_order(best):
            best = scored
    if best is None:
        return None
    name, line_type = _pick_identity(best.votes, segment.midpoint_time)
    return LiveMatchResult(
        segment_id=segment.segment_id,
        method=method,
        vehicle_ref=best.vehicle_ref,
        line_type=line_type,
        line_name=name,
        score=best.score,
        matched_fraction=best.matched_fraction,
        sample_distances=tuple(best.sample_distances),
    )


def _score_order(s: VehicleScore) -> tuple:
    return (-s.score, -s.matched_fraction, s.mean_matched_distance, s.vehicle_ref)


def match_live(segment: ActivitySegment, cfg: LiveMatchConfig,
               index: PositionIndex) -> Optional[LiveMatchResult]:
    """Linestring-based matching with up to cfg.max_user_samples samples."""
    return _match(segment, cfg, index, cfg.max_user_samples,
                  use_linestring=True, method=NEW_LIVE)


def match_live_old(segment: ActivitySegment, cfg: LiveMatchConfig,
                   index: PositionIndex) -> Optional[LiveMatchResult]:
    """The four-sample point-to-point baseline."""
    return _match(segment, cfg, index, cfg.old_live_samples,
                  use_linestring=False, method=OLD_LIVE)
