"""Single-ride journey planning against a GTFS bundle.

Produces walk - one transit ride - walk itineraries for an origin,
destination and earliest start. Walking is straight-line at a fixed speed;
the walk to the boarding stop is scheduled to arrive exactly at departure, so
itinerary durations carry no artificial origin wait. An external journey
planner can stand in through the same query/response contract
(ExternalPlannerAdapter).
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from typing import Optional, Protocol, Sequence

from .geodesy import distance_m
from .gtfs import GtfsBundle, GtfsStop, gtfs_time_to_datetime
from .types import ActivitySegment, GeoPoint, LineType

WALK_SPEED_MPS = 1.34
DEFAULT_WALK_BACK_S = 372.0     # earliest-start adjustment: 500 m at walk speed
DEFAULT_MAX_WALK_M = 1000.0     # 2 x 500 m transition-point slack
DEFAULT_N_PLANS = 3


class PlanError(Exception):
    pass


@dataclass(frozen=True)
class PlanQuery:
    origin: GeoPoint
    destination: GeoPoint
    earliest_start: datetime
    max_walk_m: float = DEFAULT_MAX_WALK_M
    n_plans: int = DEFAULT_N_PLANS

    def __post_init__(self) -> None:
        if self.max_walk_m <= 0:
            raise ValueError("max_walk_m must be positive")
        if self.n_plans < 1:
            raise ValueError("n_plans must be >= 1")


@dataclass(frozen=True)
class TransitLeg:
    line_type: LineType
    line_name: str
    trip_id: str
    board_stop: str
    board_time: datetime
    alight_stop: str
    alight_time: datetime
    geometry: tuple[GeoPoint, ...]

    @property
    def duration_s(self) -> float:
        return (self.alight_time - self.board_time).total_seconds()


@dataclass(frozen=True)
class Itinerary:
    start_time: datetime
    end_time: datetime
    walk_before_s: float
    transit: TransitLeg
    walk_after_s: float
    total_duration_s: float

    def __post_init__(self) -> None:
        if self.transit.board_time < self.start_time:
            raise ValueError("boarding precedes itinerary start")
        if self.transit.alight_time > self.end_time:
            raise ValueError("alighting follows itinerary end")
        if abs(self.total_duration_s -
               (self.end_time - self.start_time).total_seconds()) > 1e-6:
            raise ValueError("total duration inconsistent with start/end")
        if len(self.transit.geometry) < 2:
            raise ValueError("transit geometry needs at least 2 points")

    @property
    def wait_s(self) -> float:
        wait = (self.total_duration_s - self.walk_before_s
                - self.transit.duration_s - self.walk_after_s)
        return max(0.0, wait)


@dataclass
class PlanResult:
    itineraries: list[Itinerary] = field(default_factory=list)
    reason: Optional[str] = None  # set when empty for a nameable cause


class JourneyPlanner(Protocol):
    def plan(self, query: PlanQuery) -> PlanResult: ...


def adjusted_query(segment: ActivitySegment,
                   walk_back_s: float = DEFAULT_WALK_BACK_S,
                   max_walk_m: float = DEFAULT_MAX_WALK_M,
                   n_plans: int = DEFAULT_N_PLANS) -> PlanQuery:
    """Planner query for a vehicular segment: endpoints become origin and
    destination, and the earliest start is pulled back to let the traveller
    walk from a misdetected transition point to the boarding stop."""
    trace = segment.trace
    return PlanQuery(
        origin=trace[0].geo,
        destination=trace[-1].geo,
        earliest_start=segment.start_time - timedelta(seconds=walk_back_s),
        max_walk_m=max_walk_m,
        n_plans=n_plans,
    )


class StopGrid:
    """Uniform lat/lng grid over stops for radius queries."""

    def __init__(self, stops: Sequence[GtfsStop], cell_deg: float = 0.01):
        self.cell_deg = cell_deg
        self._cells: dict[tuple[int, int], list[GtfsStop]] = {}
        for stop in stops:
            self._cells.setdefault(self._key(stop.lat, stop.lng), []).append(stop)

    def _key(self, lat: float, lng: float) -> tuple[int, int]:
        return (math.floor(lat / self.cell_deg), math.floor(lng / self.cell_deg))

    def stops_within(self, center: GeoPoint, radius_m: float,
                     ) -> list[tuple[GtfsStop, float]]:
        dlat = math.degrees(radius_m / 6_371_000.0)
        dlng = dlat / max(0.01, math.cos(math.radians(center.lat)))
        lat_lo, lat_hi = center.lat - dlat, center.lat + dlat
        lng_lo, lng_hi = center.lng - dlng, center.lng + dlng
        out: list[tuple[GtfsStop, float]] = []
        for ky in range(math.floor(lat_lo / self.cell_deg),
                        math.floor(lat_hi / self.cell_deg) + 1):
            for kx in range(math.floor(lng_lo / self.cell_deg),
                            math.floor(lng_hi / self.cell_deg) + 1):
                for stop in self._cells.get((ky, kx), ()):
                    d = distance_m(center, stop.geo)
                    if d <= radius_m:
                        out.append((stop, d))
        out.sort(key=lambda item: (item[1], item[0].stop_id))
        return out


class TimetablePlanner:
    """Embedded single-leg planner over a GTFS bundle bound to one date."""

    def __init__(self, gtfs: GtfsBundle, day: date,
                 walk_speed_mps: float = WALK_SPEED_MPS,
                 search_window_s: float = 7200.0):
        self.gtfs = gtfs
        self.day = day
        self.walk_speed_mps = walk_speed_mps
        self.search_window_s = search_window_s
        self.active_trips = gtfs.trips_on(day)
        if not self.active_trips:
            raise PlanError(f"no GTFS services active on {day}")
        self.grid = StopGrid(list(gtfs.stops.values()))
        # stop_id -> time-sorted [(departure_s, trip_id, sequence)]
        self.departures: dict[str, list[tuple[int, str, int]]] = {}
        for trip_id in self.active_trips:
            for st in gtfs.stop_times_by_trip.get(trip_id, ()):
                if st.departure_s is None:  # untimed stops are not boardable
                    continue
                self.departures.setdefault(st.stop_id, []).append(
                    (st.departure_s, trip_id, st.sequence))
        for entries in self.departures.values():
            entries.sort()
        self._midnight = datetime.combine(day, datetime.min.time())

    def _service_seconds(self, t: datetime) -> float:
        return (t - self._midnight).total_seconds()

    def plan(self, query: PlanQuery) -> PlanResult:
        origin_stops = self.grid.stops_within(query.origin, query.max_walk_m)
        if not origin_stops:
            return PlanResult([], reason=(
                f"no stops within {query.max_walk_m:.0f} m of origin"))
        dest_stops = self.grid.stops_within(query.destination, query.max_walk_m)
        if not dest_stops:
            return PlanResult([], reason=(
                f"no stops within {query.max_walk_m:.0f} m of destination"))
        dest_dist = {stop.stop_id: d for stop, d in dest_stops}

        earliest_s = self._service_seconds(query.earliest_start)
        horizon_s = earliest_s + self.search_window_s

        # per trip, the best boarding/alighting combination; the sort key is
        # (end, duration, total walk, board stop, alight stop, departure)
        best_by_trip: dict[str, tuple[tuple, tuple]] = {}
        for board_stop, d_board in origin_stops:
            walk_before = d_board / self.walk_speed_mps
            entries = self.departures.get(board_stop.stop_id, [])
            i = bisect.bisect_left(entries, (earliest_s + walk_before,))
            for dep_s, trip_id, seq in entries[i:]:
                if dep_s > horizon_s:
                    break
                for st in self.gtfs.stop_times_by_trip[trip_id]:
                    if st.sequence <= seq or st.arrival_s is None:
                        continue
                    d_alight = dest_dist.get(st.stop_id)
                    if d_alight is None or d_board + d_alight > query.max_walk_m:
                        continue
                    walk_after = d_alight / self.walk_speed_mps
                    end_s = st.arrival_s + walk_after
                    duration = walk_before + (st.arrival_s - dep_s) + walk_after
                    key = (end_s, duration, d_board + d_alight,
                           board_stop.stop_id, st.stop_id, dep_s, seq)
                    payload = (board_stop.stop_id, seq, st, dep_s,
                               d_board, d_alight)
                    incumbent = best_by_trip.get(trip_id)
                    if incumbent is None or key < incumbent[0]:
                        best_by_trip[trip_id] = (key, payload)
        ranked = sorted(best_by_trip.items(),
                        key=lambda kv: (kv[1][0][0], kv[1][0][1], kv[0]))
        itineraries = [self._build_itinerary(trip_id, payload)
                       for trip_id, (_, payload) in ranked[:query.n_plans]]
        if not itineraries:
            return PlanResult([], reason="no reachable trip serves the query")
        return PlanResult(itineraries)

    def _build_itinerary(self, trip_id: str, payload: tuple) -> Itinerary:
        board_stop_id, board_seq, alight_st, dep_s, d_board, d_alight = payload
        trip = self.gtfs.trips[trip_id]
        route = self.gtfs.routes[trip.route_id]
        walk_before = d_board / self.walk_speed_mps
        walk_after = d_alight / self.walk_speed_mps
        board_dt = gtfs_time_to_datetime(self.day, dep_s)
        alight_dt = gtfs_time_to_datetime(self.day, alight_st.arrival_s)
        geometry = self._leg_geometry(trip_id, board_seq, alight_st.sequence)
        leg = TransitLeg(
            line_type=route.line_type,
            line_name=route.short_name,
            trip_id=trip_id,
            board_stop=board_stop_id,
            board_time=board_dt,
            alight_stop=alight_st.stop_id,
            alight_time=alight_dt,
            geometry=geometry,
        )
        start = board_dt - timedelta(seconds=walk_before)
        end = alight_dt + timedelta(seconds=walk_after)
        return Itinerary(
            start_time=start,
            end_time=end,
            walk_before_s=walk_before,
            transit=leg,
            walk_after_s=walk_after,
            total_duration_s=(end - start).total_seconds(),
        )

    def _leg_geometry(self, trip_id: str, board_seq: int,
                      alight_seq: int) -> tuple[GeoPoint, ...]:
        trip = self.gtfs.trips[trip_id]
        sts = self.gtfs.stop_times_by_trip[trip_id]
        stop_seq = [self.gtfs.stops[st.stop_id].geo for st in sts]
        board_idx = next(i for i, st in enumerate(sts)
                         if st.sequence == board_seq)
        alight_idx = next(i for i, st in enumerate(sts)
                          if st.sequence == alight_seq)
        board_geo, alight_geo = stop_seq[board_idx], stop_seq[alight_idx]

        shape = self.gtfs.shapes.get(trip.shape_id) if trip.shape_id else None
        if shape:
            i = min(range(len(shape)), key=lambda k: distance_m(shape[k], board_geo))
            j = min(range(len(shape)), key=lambda k: distance_m(shape[k], alight_geo))
            if i < j:
                pts = _dedupe([board_geo, *shape[i:j + 1], alight_geo])
                if len(pts) >= 2:
                    return tuple(pts)
        pts = _dedupe(stop_seq[board_idx:alight_idx + 1])
        if len(pts) < 2:
            pts = [board_geo, alight_geo]  # co-located stops still form a leg
        return tuple(pts)


def _dedupe(points: Sequence[GeoPoint]) -> list[GeoPoint]:
    out: list[GeoPoint] = []
    for p in points:
        if not out or p != out[-1]:
            out.append(p)
    return out


class ExternalPlannerAdapter:
    """Contract for delegating planning to an external journey planner.

    Subclasses implement ``request`` and own the wire format. The request
    payload carries origin/destination coordinates, the earliest start as an
    ISO timestamp, the walk budget and the plan count; each response entry
    must provide the fields needed to populate an Itinerary (times as ISO
    strings, geometry as [lat, lng] pairs).
    """

    def request(self, payload: dict) -> list[dict]:
        raise NotImplementedError

    def plan(self, query: PlanQuery) -> PlanResult:
        payload = {
            "origin": {"lat": query.origin.lat, "lng": query.origin.lng},
            "destination": {"lat": query.destination.lat,
                            "lng": query.destination.lng},
            "earliest_start": query.earliest_start.isoformat(sep=" "),
            "max_walk_m": query.max_walk_m,
            "n_plans": query.n_plans,
        }
        itineraries = [self._parse_itinerary(entry)
                       for entry in self.request(payload)]
        return PlanResult(itineraries) if itineraries else \
            PlanResult([], reason="external planner returned no plans")

    @staticmethod
    def _parse_itinerary(entry: dict) -> Itinerary:
        def ts(key_source: dict, name: str) -> datetime:
            return datetime.fromisoformat(key_source[name])

        transit = entry["transit"]
        leg = TransitLeg(
            line_type=LineType(transit["line_type"]),
            line_name=transit.get("line_name", ""),
            trip_id=transit.get("trip_id", ""),
            board_stop=transit.get("board_stop", ""),
            board_time=ts(transit, "board_time"),
            alight_stop=transit.get("alight_stop", ""),
            alight_time=ts(transit, "alight_time"),
            geometry=tuple(GeoPoint(lat, lng)
                           for lat, lng in transit["geometry"]),
        )
        start, end = ts(entry, "start_time"), ts(entry, "end_time")
        return Itinerary(
            start_time=start,
            end_time=end,
            walk_before_s=float(entry.get("walk_before_s", 0.0)),
            transit=leg,
            walk_after_s=float(entry.get("walk_after_s", 0.0)),
            total_duration_s=(end - start).total_seconds(),
        )
