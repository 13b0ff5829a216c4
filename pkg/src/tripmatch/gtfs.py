"""Minimal GTFS reader: the five required files plus optional shapes,
with referential-integrity validation and service-date resolution.

Stop times are kept as integer seconds since midnight of the service date;
values past 24:00:00 stay above 86400 per the GTFS convention, so late
services sort and compare correctly.
"""
from __future__ import annotations

import csv
import io
import zipfile
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from pathlib import Path
from typing import Iterator, Optional

from .types import GeoPoint, LineType


class GtfsError(Exception):
    pass


#: GTFS route_type -> line type, covering both the classic codes and the
#: extended European ranges.
_ROUTE_TYPE_MAP: dict[int, LineType] = {0: LineType.TRAM, 1: LineType.SUBWAY,
                                        2: LineType.TRAIN, 3: LineType.BUS,
                                        4: LineType.FERRY}
_EXTENDED_RANGES = [
    (range(100, 200), LineType.TRAIN),
    (range(200, 300), LineType.BUS),   # coach services
    (range(400, 500), LineType.SUBWAY),
    (range(700, 800), LineType.BUS),
    (range(900, 1000), LineType.TRAM),
    (range(1000, 1100), LineType.FERRY),
]


def line_type_for_route_type(route_type: int) -> LineType:
    if route_type in _ROUTE_TYPE_MAP:
        return _ROUTE_TYPE_MAP[route_type]
    for rng, lt in _EXTENDED_RANGES:
        if route_type in rng:
            return lt
    raise GtfsError(f"unsupported route_type {route_type}")


@dataclass(frozen=True)
class GtfsStop:
    stop_id: str
    name: str
    lat: float
    lng: float

    @property
    def geo(self) -> GeoPoint:
        return GeoPoint(self.lat, self.lng)


@dataclass(frozen=True)
class GtfsRoute:
    route_id: str
    short_name: str
    route_type: int

    @property
    def line_type(self) -> LineType:
        return line_type_for_route_type(self.route_type)


@dataclass(frozen=True)
class GtfsTrip:
    trip_id: str
    route_id: str
    service_id: str
    shape_id: Optional[str] = None


@dataclass(frozen=True)
class GtfsStopTime:
    trip_id: str
    stop_id: str
    arrival_s: Optional[int]    # None on untimed intermediate stops
    departure_s: Optional[int]
    sequence: int


@dataclass(frozen=True)
class GtfsService:
    service_id: str
    weekdays: tuple[bool, ...]  # monday..sunday
    start: date
    end: date


@dataclass
class GtfsBundle:
    stops: dict[str, GtfsStop]
    routes: dict[str, GtfsRoute]
    trips: dict[str, GtfsTrip]
    stop_times: list[GtfsStopTime]
    services: dict[str, GtfsService]
    service_exceptions: dict[date, dict[str, int]]  # date -> service_id -> 1|2
    shapes: dict[str, list[GeoPoint]] = field(default_factory=dict)
    stop_times_by_trip: dict[str, list[GtfsStopTime]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.stop_times_by_trip:
            by_trip: dict[str, list[GtfsStopTime]] = {}
            for st in self.stop_times:
                by_trip.setdefault(st.trip_id, []).append(st)
            for sts in by_trip.values():
                sts.sort(key=lambda st: st.sequence)
            self.stop_times_by_trip = by_trip

    def counts(self) -> dict[str, int]:
        return {
            "stops": len(self.stops),
            "routes": len(self.routes),
            "trips": len(self.trips),
            "stop_times": len(self.stop_times),
            "services": len(self.services),
            "shapes": len(self.shapes),
        }

    def active_service_ids(self, day: date) -> set[str]:
        active: set[str] = set()
        for svc in self.services.values():
            if svc.start <= day <= svc.end and svc.weekdays[day.weekday()]:
                active.add(svc.service_id)
        for service_id, exception_type in self.service_exceptions.get(day, {}).items():
            if exception_type == 1:
                active.add(service_id)
            elif exception_type == 2:
                active.discard(service_id)
        return active

    def trips_on(self, day: date) -> set[str]:
        active = self.active_service_ids(day)
        return {t.trip_id for t in self.trips.values() if t.service_id in active}

    def validate(self) -> None:
        """Referential integrity; raises GtfsError listing the first 10 offenders."""
        problems: list[str] = []

        def check(condition: bool, message: str) -> None:
            if not condition and len(problems) < 10:
                problems.append(message)

        known_services = set(self.services)
        for day_exceptions in self.service_exceptions.values():
            known_services.update(day_exceptions)
        for trip in self.trips.values():
            check(trip.route_id in self.routes,
                  f"trip {trip.trip_id} references missing route {trip.route_id}")
            check(trip.service_id in known_services,
                  f"trip {trip.trip_id} references missing service {trip.service_id}")
            if trip.shape_id is not None and self.shapes:
                check(trip.shape_id in self.shapes,
                      f"trip {trip.trip_id} references missing shape {trip.shape_id}")
        for st in self.stop_times:
            check(st.trip_id in self.trips,
                  f"stop_time references missing trip {st.trip_id}")
            check(st.stop_id in self.stops,
                  f"stop_time references missing stop {st.stop_id}")
        for trip_id, sts in self.stop_times_by_trip.items():
            seqs = [st.sequence for st in sts]
            check(all(b > a for a, b in zip(seqs, seqs[1:])),
                  f"trip {trip_id} has non-increasing stop sequences {seqs[:6]}")
        if problems:
            raise GtfsError("integrity violations (first 10): " + "; ".join(problems))


def parse_gtfs_time(text: str) -> int:
    """'HH:MM:SS' to seconds since service-date midnight; hours may exceed 23."""
    parts = text.strip().split(":")
    if len(parts) != 3:
        raise GtfsError(f"bad GTFS time {text!r}")
    h, m, s = (int(p) for p in parts)
    if not (0 <= m < 60 and 0 <= s < 60 and h >= 0):
        raise GtfsError(f"bad GTFS time {text!r}")
    return h * 3600 + m * 60 + s


def gtfs_time_to_datetime(day: date, seconds: int) -> datetime:
    return datetime.combine(day, datetime.min.time()) + timedelta(seconds=seconds)


def _parse_gtfs_date(text: str) -> date:
    return datetime.strptime(text.strip(), "%Y%m%d").date()


class _FeedSource:
    """Uniform access to feed files in a directory or a zip archive."""

    def __init__(self, path):
        self.path = Path(path)
        if not self.path.exists():
            raise GtfsError(f"{path}: not found")
        self.zip = zipfile.ZipFile(self.path) if self.path.is_file() else None
        if self.zip is not None:
            self._names = {Path(n).name: n for n in self.zip.namelist()}

    def has(self, name: str) -> bool:
        if self.zip is not None:
            return name in self._names
        return (self.path / name).exists()

    def rows(self, name: str) -> Iterator[dict[str, str]]:
        if self.zip is not None:
            fh = io.TextIOWrapper(self.zip.open(self._names[name]),
                                  encoding="utf-8-sig", newline="")
        else:
            fh = open(self.path / name, newline="", encoding="utf-8-sig")
        with fh:
            for row in csv.DictReader(fh):
                yield {(k.strip() if k else k): (v.strip() if v else "")
                       for k, v in row.items() if k is not None}


REQUIRED_FILES = ["stops.txt", "routes.txt", "trips.txt", "stop_times.txt"]


def load_gtfs(path) -> GtfsBundle:
    """Load a GTFS feed from a directory or zip and validate integrity."""
    src = _FeedSource(path)
    for name in REQUIRED_FILES:
        if not src.has(name):
            raise GtfsError(f"{path}: missing required file {name}")
    if not (src.has("calendar.txt") or src.has("calendar_dates.txt")):
        raise GtfsError(f"{path}: need calendar.txt and/or calendar_dates.txt")

    stops: dict[str, GtfsStop] = {}
    for row in src.rows("stops.txt"):
        stop = GtfsStop(row["stop_id"], row.get("stop_name", ""),
                        float(row["stop_lat"]), float(row["stop_lon"]))
        stops[stop.stop_id] = stop

    routes: dict[str, GtfsRoute] = {}
    for row in src.rows("routes.txt"):
        route = GtfsRoute(row["route_id"],
                          row.get("route_short_name") or row.get("route_long_name", ""),
                          int(row["route_type"]))
        route.line_type  # fail fast on unsupported route_type
        routes[route.route_id] = route

    trips: dict[str, GtfsTrip] = {}
    for row in src.rows("trips.txt"):
        trips[row["trip_id"]] = GtfsTrip(row["trip_id"], row["route_id"],
                                         row["service_id"],
                                         row.get("shape_id") or None)

    def opt_time(text: str) -> Optional[int]:
        return parse_gtfs_time(text) if text else None

    stop_times = [
        GtfsStopTime(row["trip_id"], row["stop_id"],
                     opt_time(row.get("arrival_time", "")),
                     opt_time(row.get("departure_time", "")),
                     int(row["stop_sequence"]))
        for row in src.rows("stop_times.txt")
    ]

    services: dict[str, GtfsService] = {}
    if src.has("calendar.txt"):
        day_cols = ["monday", "tuesday", "wednesday", "thursday", "friday",
                    "saturday", "sunday"]
        for row in src.rows("calendar.txt"):
            services[row["service_id"]] = GtfsService(
                row["service_id"],
                tuple(row[c] == "1" for c in day_cols),
                _parse_gtfs_date(row["start_date"]),
                _parse_gtfs_date(row["end_date"]),
            )

    exceptions: dict[date, dict[str, int]] = {}
    if src.has("calendar_dates.txt"):
        for row in src.rows("calendar_dates.txt"):
            day = _parse_gtfs_date(row["date"])
            exceptions.setdefault(day, {})[row["service_id"]] = int(row["exception_type"])

    shapes: dict[str, list[GeoPoint]] = {}
    if src.has("shapes.txt"):
        raw: dict[str, list[tuple[int, GeoPoint]]] = {}
        for row in src.rows("shapes.txt"):
            raw.setdefault(row["shape_id"], []).append(
                (int(row["shape_pt_sequence"]),
                 GeoPoint(float(row["shape_pt_lat"]), float(row["shape_pt_lon"]))))
        for shape_id, pts in raw.items():
            pts.sort(key=lambda item: item[0])
            shapes[shape_id] = [p for _, p in pts]

    bundle = GtfsBundle(stops=stops, routes=routes, trips=trips,
                        stop_times=stop_times, services=services,
                        service_exceptions=exceptions, shapes=shapes)
    bundle.validate()
    return bundle
