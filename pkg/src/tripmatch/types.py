"""Domain model shared by all pipeline stages.

Times are naive local timestamps (the dataset is single-day, single-zone);
no timezone conversion happens anywhere in the pipeline.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from datetime import datetime
from typing import NamedTuple, Optional


class Activity(str, enum.Enum):
    IN_VEHICLE = "IN_VEHICLE"
    ON_BICYCLE = "ON_BICYCLE"
    RUNNING = "RUNNING"
    STILL = "STILL"
    TILTING = "TILTING"
    UNKNOWN = "UNKNOWN"
    WALKING = "WALKING"


#: Activity kinds that count as reliable signal for filtering decisions.
GOOD_ACTIVITIES = frozenset(
    a for a in Activity if a not in (Activity.UNKNOWN, Activity.TILTING)
)


class LineType(str, enum.Enum):
    SUBWAY = "SUBWAY"
    BUS = "BUS"
    TRAM = "TRAM"
    TRAIN = "TRAIN"
    FERRY = "FERRY"
    CAR = "CAR"


#: line types that may appear in the live fleet feed
LIVE_LINE_TYPES = frozenset(
    (LineType.SUBWAY, LineType.BUS, LineType.TRAM, LineType.TRAIN, LineType.FERRY)
)
#: line types that may appear in the manual travel diary
LOG_LINE_TYPES = frozenset(
    (LineType.SUBWAY, LineType.BUS, LineType.TRAM, LineType.TRAIN, LineType.CAR)
)
#: public-transport line types used in evaluation statistics
PT_LINE_TYPES = (LineType.BUS, LineType.TRAM, LineType.TRAIN, LineType.SUBWAY)


class GeoPoint(NamedTuple):
    lat: float
    lng: float


class TracePoint(NamedTuple):
    time: datetime
    lat: float
    lng: float

    @property
    def geo(self) -> GeoPoint:
        return GeoPoint(self.lat, self.lng)


def seconds_between(earlier: datetime, later: datetime) -> float:
    """Signed wall-clock difference later - earlier, in seconds."""
    return (later - earlier).total_seconds()


@dataclass(frozen=True)
class DevicePoint:
    """One sampled mobile-device fix with ranked activity estimates."""

    time: datetime
    device_id: int
    lat: float
    lng: float
    accuracy: float
    activities: tuple[tuple[Activity, int], ...]

    @property
    def top_activity(self) -> Optional[Activity]:
        return self.activities[0][0] if self.activities else None

    @property
    def geo(self) -> GeoPoint:
        return GeoPoint(self.lat, self.lng)


@dataclass(frozen=True)
class FilteredPoint:
    """One row of the filtered device table: position plus winning activity."""

    time: datetime
    device_id: int
    lat: float
    lng: float
    activity: Activity

    @property
    def geo(self) -> GeoPoint:
        return GeoPoint(self.lat, self.lng)

    @property
    def trace_point(self) -> TracePoint:
        return TracePoint(self.time, self.lat, self.lng)


@dataclass(frozen=True)
class VehiclePosition:
    """One live fleet sample."""

    time: datetime
    lat: float
    lng: float
    line_type: LineType
    line_name: str
    vehicle_ref: str

    @property
    def geo(self) -> GeoPoint:
        return GeoPoint(self.lat, self.lng)


@dataclass(frozen=True)
class ManualTrip:
    """One manually logged trip leg from the travel diary."""

    device_id: int
    line_type: LineType
    line_name: str
    vehicle_dep_time: Optional[datetime]
    vehicle_arr_time: Optional[datetime]
    st_entrance: str = ""
    st_entry_time: Optional[datetime] = None
    vehicle_dep_stop: str = ""
    vehicle_arr_stop: str = ""
    st_exit_location: str = ""
    st_exit_time: Optional[datetime] = None
    comments: str = ""

    @property
    def start(self) -> Optional[datetime]:
        """Best available trip start: vehicle departure, else station entry."""
        return self.vehicle_dep_time or self.st_entry_time

    @property
    def end(self) -> Optional[datetime]:
        """Best available trip end: vehicle arrival, else station exit."""
        return self.vehicle_arr_time or self.st_exit_time


@dataclass(frozen=True)
class DeviceModelEntry:
    device_id: int
    model: str


@dataclass(frozen=True)
class ActivitySegment:
    """A maximal same-activity run of one device; the unit of recognition."""

    segment_id: int
    device_id: int
    activity: Activity
    points: tuple[FilteredPoint, ...]

    def __post_init__(self) -> None:
        if not self.points:
            raise ValueError("segment must contain at least one point")

    @property
    def start_time(self) -> datetime:
        return self.points[0].time

    @property
    def end_time(self) -> datetime:
        return self.points[-1].time

    @property
    def duration_s(self) -> float:
        return seconds_between(self.start_time, self.end_time)

    @property
    def trace(self) -> list[TracePoint]:
        return [p.trace_point for p in self.points]

    @property
    def midpoint_time(self) -> datetime:
        return self.start_time + (self.end_time - self.start_time) / 2


@dataclass
class Linestring:
    """Ordered polyline of geographic points, each optionally timestamped."""

    points: list[GeoPoint] = field(default_factory=list)
    times: Optional[list[datetime]] = None

    def __post_init__(self) -> None:
        if self.times is not None:
            if len(self.times) != len(self.points):
                raise ValueError("times must parallel points")
            for a, b in zip(self.times, self.times[1:]):
                if b < a:
                    raise ValueError("linestring times must be non-decreasing")

    def __len__(self) -> int:
        return len(self.points)

    def __bool__(self) -> bool:
        return bool(self.points)
