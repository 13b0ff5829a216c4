"""Deterministic synthetic dataset generator.

Builds a miniature transit network (trams, buses, a subway, a commuter train
and a ferry), schedules vehicles on it, plants device rides with known ground
truth, and writes every input file the pipeline consumes: the device tables,
live fleet positions, manual log, a GTFS feed, a train-history JSON, a run
config and a truth manifest. The train line is deliberately absent from the
live feed and the car device never boards anything, mirroring the coverage
gaps a real deployment sees.
"""
from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from pathlib import Path

import yaml

from . import ingest
from .geodesy import offset_point, trace_length_m
from .types import (
    Activity,
    DeviceModelEntry,
    DevicePoint,
    FilteredPoint,
    GeoPoint,
    LineType,
    ManualTrip,
    VehiclePosition,
)

DAY = date(2016, 8, 26)
ORIGIN = GeoPoint(60.150, 24.900)  # local frame anchor; offsets in metres

CAR_DEVICE_ID = 7


def _at(east_m: float, north_m: float) -> GeoPoint:
    return offset_point(ORIGIN, east_m, north_m)


def _t(hh: int, mm: int, ss: int = 0) -> datetime:
    return datetime(DAY.year, DAY.month, DAY.day, hh, mm, ss)


@dataclass
class Route:
    key: str
    line_name: str
    line_type: LineType
    speed_mps: float
    stops_xy: list[tuple[float, float]]
    in_live: bool = True
    with_shape: bool = False
    first_dep: datetime = _t(8, 50)
    headway_s: int = 600
    n_trips: int = 44

    def __post_init__(self) -> None:
        self.stops = [_at(x, y) for x, y in self.stops_xy]
        self.cum_m = [0.0]
        for a, b in zip(self.stops, self.stops[1:]):
            self.cum_m.append(self.cum_m[-1] + trace_length_m([a, b]))

    @property
    def length_m(self) -> float:
        return self.cum_m[-1]

    def point_at(self, dist_m: float, forward: bool) -> GeoPoint:
        d = min(max(dist_m, 0.0), self.length_m)
        if not forward:
            d = self.length_m - d
        for i in range(len(self.cum_m) - 1):
            if d <= self.cum_m[i + 1]:
                span = self.cum_m[i + 1] - self.cum_m[i]
                f = 0.0 if span == 0 else (d - self.cum_m[i]) / span
                a, b = self.stops[i], self.stops[i + 1]
                return GeoPoint(a.lat + f * (b.lat - a.lat),
                                a.lng + f * (b.lng - a.lng))
        return self.stops[0 if not forward else -1]


def _routes() -> dict[str, Route]:
    def line(x0, y0, dx, dy, n):
        return [(x0 + k * dx, y0 + k * dy) for k in range(n)]

    return {r.key: r for r in [
        Route("tram3", "3", LineType.TRAM, 5.0, line(1600, 500, 0, 450, 8)),
        Route("tram7", "7", LineType.TRAM, 5.0,
              line(400, 2800, 450, 0, 6) + [(2650, 3250), (2650, 3700)],
              with_shape=True),
        Route("bus16", "16", LineType.BUS, 5.6, line(300, 1100, 550, 0, 7)),
        Route("bus550", "550", LineType.BUS, 11.1, line(3300, 300, 640, 640, 6),
              with_shape=True),
        Route("subwayM", "M", LineType.SUBWAY, 16.7, line(200, 2000, 1300, 0, 6)),
        Route("trainU", "U", LineType.TRAIN, 16.7, line(5600, 200, 0, 1500, 5),
              in_live=False),
    ]}


@dataclass
class Trip:
    trip_id: str
    route: Route
    forward: bool
    dep: datetime

    @property
    def vehicle_ref(self) -> str:
        return f"veh-{self.trip_id}"

    @property
    def duration_s(self) -> float:
        return self.route.length_m / self.route.speed_mps

    @property
    def arr(self) -> datetime:
        return self.dep + timedelta(seconds=self.duration_s)

    def position(self, t: datetime) -> GeoPoint:
        elapsed = (t - self.dep).total_seconds()
        return self.route.point_at(elapsed * self.route.speed_mps, self.forward)

    def stop_sequence(self) -> list[int]:
        """Stop indices in travel order (forward-frame indices)."""
        order = list(range(len(self.route.stops)))
        return order if self.forward else order[::-1]

    def stop_time(self, seq_pos: int) -> datetime:
        idx = self.stop_sequence()[seq_pos]
        if self.forward:
            along = self.route.cum_m[idx]
        else:
            along = self.route.length_m - self.route.cum_m[idx]
        return self.dep + timedelta(seconds=along / self.route.speed_mps)


def _timetable(routes: dict[str, Route]) -> dict[str, list[Trip]]:
    trips: dict[str, list[Trip]] = {}
    for key, route in routes.items():
        entries = []
        for k in range(route.n_trips):
            dep = route.first_dep + timedelta(seconds=k * route.headway_s)
            direction = "f" if k % 2 == 0 else "b"
            entries.append(Trip(f"{key}-{direction}-{k}", route,
                                direction == "f", dep))
        trips[key] = entries
    return trips


@dataclass
class RideSpec:
    device_id: int
    route_key: str
    trip_index: int
    board_pos: int   # positions within the trip's own travel order
    alight_pos: int
    log_name: str | None = None  # overrides the route name in the manual log


RIDES = [
    RideSpec(1, "tram3", 4, 1, 6),             # 09:30 forward
    RideSpec(1, "subwayM", 8, 0, 3, "To east"),   # 10:10 forward
    RideSpec(1, "tram7", 13, 1, 6),            # 11:00 backward
    RideSpec(2, "bus16", 2, 0, 5),             # 09:10 forward
    RideSpec(2, "subwayM", 13, 1, 4, "To west"),  # 11:00 backward
    RideSpec(2, "bus550", 26, 0, 4),           # 13:10 forward
    RideSpec(3, "trainU", 4, 0, 3),            # 09:30; trains absent from live
    RideSpec(3, "tram7", 20, 0, 5),            # 12:10 forward
    RideSpec(3, "subwayM", 31, 1, 4, "To west"),  # 14:00 backward
]

CAR_TRIPS = [(_t(10, 0), (200.0, 200.0), (3200.0, 200.0)),
             (_t(13, 30), (3200.0, 200.0), (200.0, 200.0))]
CAR_SPEED_MPS = 12.0


@dataclass
class PlantedTrip:
    device_id: int
    line_type: str
    line_name: str
    log_name: str
    trip_id: str
    vehicle_ref: str
    dep: str
    arr: str
    live_expected: bool
    static_expected: bool


@dataclass
class SyntheticDataset:
    root: Path
    config_path: Path
    truth_path: Path
    planted: list[PlantedTrip] = field(default_factory=list)


def _noisy(rng: random.Random, p: GeoPoint, sigma_m: float,
           clip_m: float) -> GeoPoint:
    def jitter() -> float:
        return max(-clip_m, min(clip_m, rng.gauss(0.0, sigma_m)))

    return offset_point(p, jitter(), jitter())


def _floor_minute(t: datetime) -> datetime:
    return t.replace(second=0)

def _ceil_minute(t: datetime) -> datetime:
    return t if t.second == 0 else _floor_minute(t) + timedelta(minutes=1)


def generate(root, seed: int = 7) -> SyntheticDataset:
    """Write a complete synthetic dataset under root and return its manifest."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    rng = random.Random(seed)
    routes = _routes()
    timetable = _timetable(routes)

    live_rows: list[VehiclePosition] = []
    for key, trips in sorted(timetable.items()):
        route = routes[key]
        if not route.in_live:
            continue
        for trip in trips:
            t = trip.dep
            while t <= trip.arr:
                pos = _noisy(rng, trip.position(t), 3.0, 9.0)
                name = route.line_name
                if key == "bus550" and rng.random() < 0.10:
                    name = "99"  # intermittent bogus label, the modal vote wins
                live_rows.append(VehiclePosition(
                    t, pos.lat, pos.lng, route.line_type, name,
                    trip.vehicle_ref))
                t += timedelta(seconds=30)
    # one ferry loitering offshore: parsed, never ridden
    for k in range(0, 28800, 30):
        t = _t(8, 0) + timedelta(seconds=k)
        pos = _noisy(rng, _at(2000 + (k % 1500), -600), 3.0, 9.0)
        live_rows.append(VehiclePosition(t, pos.lat, pos.lng, LineType.FERRY,
                                         "F", "veh-ferry-1"))
    live_rows.sort(key=lambda r: (r.time, r.vehicle_ref))

    filtered: list[FilteredPoint] = []
    raw: list[DevicePoint] = []
    manual: list[ManualTrip] = []
    planted: list[PlantedTrip] = []

    def emit(device_id: int, t: datetime, pos: GeoPoint, activity: Activity,
             tilt: bool = False) -> None:
        """One accepted client fix: raw row plus its filtered counterpart."""
        accuracy = round(max(4.0, rng.gauss(15.0, 6.0)), 1)
        if tilt:
            ranked = ((Activity.TILTING, 62), (activity, 38))
        else:
            conf = rng.randint(72, 100)
            ranked = ((activity, conf), (Activity.UNKNOWN, 100 - conf))
        raw.append(DevicePoint(t, device_id, pos.lat, pos.lng, accuracy, ranked))
        filtered.append(FilteredPoint(t, device_id, pos.lat, pos.lng, activity))

    def emit_still_run(device_id: int, start: datetime, pos: GeoPoint,
                       n: int) -> None:
        for k in range(n):
            t = start + timedelta(seconds=10 * k)
            p = _noisy(rng, pos, 2.0, 6.0)
            accuracy = round(max(4.0, rng.gauss(20.0, 5.0)), 1)
            raw.append(DevicePoint(t, device_id, p.lat, p.lng, accuracy,
                                   ((Activity.STILL, rng.randint(80, 100)),)))

    for spec in RIDES:
        route = routes[spec.route_key]
        trip = timetable[spec.route_key][spec.trip_index]
        board_t = trip.stop_time(spec.board_pos)
        alight_t = trip.stop_time(spec.alight_pos)

        t = board_t
        k = 0
        while t <= alight_t:
            pos = _noisy(rng, trip.position(t), 10.0, 32.0)
            emit(spec.device_id, t, pos, Activity.IN_VEHICLE,
                 tilt=(k % 13 == 7))
            t += timedelta(seconds=10)
            k += 1
        # a short walk away from the alighting stop keeps segments separated
        heading = rng.uniform(0, 2 * math.pi)
        for k in range(1, 9):
            t = alight_t + timedelta(seconds=4 + 10 * k)
            base = trip.position(alight_t)
            walked = offset_point(base, 12 * k * math.cos(heading),
                                  12 * k * math.sin(heading))
            emit(spec.device_id, t, _noisy(rng, walked, 8.0, 24.0),
                 Activity.WALKING)

        manual.append(ManualTrip(
            device_id=spec.device_id,
            line_type=route.line_type,
            line_name=spec.log_name if spec.log_name is not None
            else route.line_name,
            vehicle_dep_time=_floor_minute(board_t),
            vehicle_arr_time=_ceil_minute(alight_t),
        ))
        planted.append(PlantedTrip(
            device_id=spec.device_id,
            line_type=route.line_type.value,
            line_name=route.line_name,
            log_name=spec.log_name or route.line_name,
            trip_id=trip.trip_id,
            vehicle_ref=trip.vehicle_ref,
            dep=ingest.format_timestamp(board_t),
            arr=ingest.format_timestamp(alight_t),
            live_expected=route.in_live,
            static_expected=True,
        ))

    for dep, start_xy, end_xy in CAR_TRIPS:
        start, end = _at(*start_xy), _at(*end_xy)
        length = trace_length_m([start, end])
        duration = length / CAR_SPEED_MPS
        t, elapsed = dep, 0.0
        while elapsed <= duration:
            f = elapsed / duration
            pos = GeoPoint(start.lat + f * (end.lat - start.lat),
                           start.lng + f * (end.lng - start.lng))
            emit(CAR_DEVICE_ID, t, _noisy(rng, pos, 10.0, 32.0),
                 Activity.IN_VEHICLE)
            t += timedelta(seconds=10)
            elapsed += 10.0
        manual.append(ManualTrip(
            device_id=CAR_DEVICE_ID, line_type=LineType.CAR, line_name="",
            vehicle_dep_time=_floor_minute(dep),
            vehicle_arr_time=_ceil_minute(dep + timedelta(seconds=duration)),
        ))

    # raw-only filler: morning and midday STILL periods per device
    for device_id, home in ((1, (1500, 450)), (2, (350, 1050)),
                            (3, (5550, 250)), (CAR_DEVICE_ID, (250, 250))):
        emit_still_run(device_id, _t(8, 30), _at(*home), 12)
        emit_still_run(device_id, _t(12, 40), _at(*home), 9)

    raw.sort(key=lambda p: (p.time, p.device_id))
    filtered.sort(key=lambda p: (p.time, p.device_id))

    ingest.write_device_data(raw, root / "device_data.csv")
    ingest.write_filtered_data(filtered, root / "device_data_filtered.csv")
    ingest.write_transit_live(live_rows, root / "transit_live.csv")
    ingest.write_manual_log(manual, root / "manual_log.csv")
    ingest.write_device_models(
        [DeviceModelEntry(1, "Pixel A"), DeviceModelEntry(2, "Galaxy B"),
         DeviceModelEntry(3, "Moto C"), DeviceModelEntry(CAR_DEVICE_ID, "Pixel A")],
        root / "device_models.csv")
    (root / "commuterTrains.json").write_text(json.dumps([
        {"trainNumber": 9701, "departureDate": str(DAY), "timeTableRows": []},
        {"trainNumber": 9702, "departureDate": str(DAY), "timeTableRows": []},
        {"trainNumber": 9990, "departureDate": str(DAY), "timeTableRows": []},
    ]), encoding="utf-8")
    _write_gtfs(root / "gtfs", routes, timetable)

    truth_path = root / "truth.json"
    truth_path.write_text(json.dumps({
        "planted_trips": [vars(p) for p in planted],
        "car_trips": len(CAR_TRIPS),
        "pt_trips": len(RIDES),
        "vehicular_segments_expected": len(RIDES) + len(CAR_TRIPS),
    }, indent=1), encoding="utf-8")

    config_path = root / "config.yaml"
    absolute = root.resolve()  # keep the config usable from any cwd
    config_path.write_text(yaml.safe_dump({
        "data_dir": str(absolute),
        "gtfs": str(absolute / "gtfs"),
        "date": str(DAY),
        "output_dir": str(absolute / "out"),
        "files": {"trains_json": "commuterTrains.json"},
    }), encoding="utf-8")
    return SyntheticDataset(root=root, config_path=config_path,
                            truth_path=truth_path, planted=planted)


def _write_gtfs(gtfs_dir: Path, routes: dict[str, Route],
                timetable: dict[str, list[Trip]]) -> None:
    gtfs_dir.mkdir(parents=True, exist_ok=True)
    route_type = {LineType.TRAM: 0, LineType.SUBWAY: 1, LineType.TRAIN: 2,
                  LineType.BUS: 3, LineType.FERRY: 4}

    def write(name: str, header: list[str], rows: list[list]) -> None:
        lines = [",".join(header)]
        lines += [",".join(str(c) for c in row) for row in rows]
        (gtfs_dir / name).write_text("\n".join(lines) + "\n", encoding="utf-8")

    stop_rows, seen = [], set()
    for key, route in sorted(routes.items()):
        for i, stop in enumerate(route.stops):
            stop_id = f"{key}:{i}"
            if stop_id not in seen:
                seen.add(stop_id)
                stop_rows.append([stop_id, f"{key} stop {i}",
                                  f"{stop.lat:.6f}", f"{stop.lng:.6f}"])
    write("stops.txt", ["stop_id", "stop_name", "stop_lat", "stop_lon"], stop_rows)

    write("routes.txt", ["route_id", "route_short_name", "route_type"],
          [[key, route.line_name, route_type[route.line_type]]
           for key, route in sorted(routes.items())])

    def gtfs_clock(t: datetime) -> str:
        midnight = datetime.combine(DAY, datetime.min.time())
        s = int((t - midnight).total_seconds())
        return f"{s // 3600:02d}:{s % 3600 // 60:02d}:{s % 60:02d}"

    trip_rows, st_rows, shape_rows = [], [], []
    for key, trips in sorted(timetable.items()):
        route = routes[key]
        for trip in trips:
            shape_id = ""
            if route.with_shape:
                shape_id = f"{key}-{'f' if trip.forward else 'b'}"
            trip_rows.append([trip.trip_id, key, "wd", shape_id])
            for pos, stop_idx in enumerate(trip.stop_sequence()):
                clock = gtfs_clock(trip.stop_time(pos))
                st_rows.append([trip.trip_id, f"{key}:{stop_idx}",
                                clock, clock, pos + 1])
        if route.with_shape:
            for direction in ("f", "b"):
                stops = route.stops if direction == "f" else route.stops[::-1]
                for i, p in enumerate(stops):
                    shape_rows.append([f"{key}-{direction}", f"{p.lat:.6f}",
                                       f"{p.lng:.6f}", i + 1])
    write("trips.txt", ["trip_id", "route_id", "service_id", "shape_id"],
          trip_rows)
    write("stop_times.txt",
          ["trip_id", "stop_id", "arrival_time", "departure_time",
           "stop_sequence"], st_rows)
    write("shapes.txt", ["shape_id", "shape_pt_lat", "shape_pt_lon",
                         "shape_pt_sequence"], shape_rows)
    write("calendar.txt",
          ["service_id", "monday", "tuesday", "wednesday", "thursday",
           "friday", "saturday", "sunday", "start_date", "end_date"],
          [["wd", 1, 1, 1, 1, 1, 1, 1, "20160801", "20160930"]])
