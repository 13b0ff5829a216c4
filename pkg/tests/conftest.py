from __future__ import annotations

import os
from datetime import date, datetime, timedelta
from pathlib import Path

import pytest

from tripmatch.gtfs import (
    GtfsBundle,
    GtfsRoute,
    GtfsService,
    GtfsStop,
    GtfsStopTime,
    GtfsTrip,
)
from tripmatch.types import (
    Activity,
    ActivitySegment,
    DevicePoint,
    FilteredPoint,
    GeoPoint,
)
from tripmatch import synthetic

DAY = date(2016, 8, 26)
T0 = datetime(2016, 8, 26, 9, 0, 0)

DATASET_ENV = "TRIPMATCH_DATASET_DIR"
DATASET_FILES = ["device_data.csv", "device_data_filtered.csv",
                 "transit_live.csv", "manual_log.csv"]


def at(seconds: float) -> datetime:
    return T0 + timedelta(seconds=seconds)


def dp(seconds: float, activities, *, device_id: int = 1, lat: float = 60.17,
       lng: float = 24.94, accuracy: float = 20.0) -> DevicePoint:
    """Compact DevicePoint builder; activities is an Activity or
    [(Activity, conf), ...]."""
    if isinstance(activities, Activity):
        activities = [(activities, 100)]
    return DevicePoint(at(seconds), device_id, lat, lng, accuracy,
                       tuple(activities))


def fp(seconds: float, activity: Activity, *, device_id: int = 1,
       lat: float = 60.17, lng: float = 24.94) -> FilteredPoint:
    return FilteredPoint(at(seconds), device_id, lat, lng, activity)


def segment_of(points: list[FilteredPoint], segment_id: int = 1,
               ) -> ActivitySegment:
    return ActivitySegment(segment_id, points[0].device_id,
                           points[0].activity, tuple(points))


def make_bundle(stops: dict[str, tuple[float, float]],
                routes: dict[str, tuple[str, int]],
                trips: list[tuple[str, str, list[tuple[str, int]]]],
                shapes: dict[str, list[tuple[float, float]]] | None = None,
                ) -> GtfsBundle:
    """In-memory GTFS fixture: trips are (trip_id, route_id,
    [(stop_id, time_s), ...]) with one universal all-days service."""
    stop_objs = {sid: GtfsStop(sid, sid, lat, lng)
                 for sid, (lat, lng) in stops.items()}
    route_objs = {rid: GtfsRoute(rid, short, rtype)
                  for rid, (short, rtype) in routes.items()}
    trip_objs = {}
    stop_times = []
    for trip_id, route_id, calls in trips:
        shape_id = trip_id if shapes and trip_id in shapes else None
        trip_objs[trip_id] = GtfsTrip(trip_id, route_id, "all", shape_id)
        for seq, (stop_id, t_s) in enumerate(calls, start=1):
            stop_times.append(GtfsStopTime(trip_id, stop_id, t_s, t_s, seq))
    bundle = GtfsBundle(
        stops=stop_objs,
        routes=route_objs,
        trips=trip_objs,
        stop_times=stop_times,
        services={"all": GtfsService("all", (True,) * 7,
                                     date(2016, 1, 1), date(2016, 12, 31))},
        service_exceptions={},
        shapes={sid: [GeoPoint(lat, lng) for lat, lng in pts]
                for sid, pts in (shapes or {}).items()},
    )
    bundle.validate()
    return bundle


@pytest.fixture(scope="session")
def synth(tmp_path_factory) -> synthetic.SyntheticDataset:
    return synthetic.generate(tmp_path_factory.mktemp("synth"))


def published_dataset_dir() -> Path | None:
    """The published dataset directory, when mounted (env var or ./data)."""
    candidates = []
    env = os.environ.get(DATASET_ENV)
    if env:
        candidates.append(Path(env))
    candidates.append(Path(__file__).resolve().parent.parent / "data")
    for root in candidates:
        if all((root / name).exists() for name in DATASET_FILES):
            return root
    return None


requires_dataset = pytest.mark.skipif(
    published_dataset_dir() is None,
    reason=f"published dataset not present (set {DATASET_ENV} or place the "
           f"CSV tables under ./data)")


#: one line per acceptance criterion, echoed after the test summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
