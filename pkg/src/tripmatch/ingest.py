"""Loaders for the dataset CSV tables and the train-history JSON.

Every loader is strict by default: a malformed row raises IngestError naming
the file, line and column. With permissive=True row errors are downgraded to
diagnostics and the row is skipped; file-level problems (missing file, bad
header) always raise. No row is ever silently dropped.
"""
from __future__ import annotations

import csv
import json
import logging
from datetime import date, datetime
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .types import (
    Activity,
    DeviceModelEntry,
    DevicePoint,
    FilteredPoint,
    LineType,
    LIVE_LINE_TYPES,
    LOG_LINE_TYPES,
    ManualTrip,
    VehiclePosition,
)

log = logging.getLogger(__name__)

TIMESTAMP_FORMAT = "%Y-%m-%d %H:%M:%S"


class IngestError(Exception):
    """A dataset file could not be parsed or failed validation."""

    def __init__(self, message: str, *, path=None, line: int | None = None,
                 column: str | None = None):
        self.path = str(path) if path is not None else None
        self.line = line
        self.column = column
        where = []
        if self.path:
            where.append(self.path)
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column!r}")
        prefix = ": ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


def parse_timestamp(text: str, *, default_date: date | None = None) -> datetime:
    """Parse a naive local timestamp.

    Accepts 'YYYY-MM-DD HH:MM:SS', the ISO 'T' variant, and a bare
    'HH:MM:SS' clock time resolved against default_date. Fractional seconds
    are truncated (the data model is seconds-precision).
    """
    text = text.strip()
    if "." in text:
        text = text.split(".", 1)[0]
    for fmt in (TIMESTAMP_FORMAT, "%Y-%m-%dT%H:%M:%S"):
        try:
            return datetime.strptime(text, fmt)
        except ValueError:
            continue
    if default_date is not None:
        try:
            clock = datetime.strptime(text, "%H:%M:%S")
            return datetime.combine(default_date, clock.time())
        except ValueError:
            pass
    raise ValueError(f"unparseable timestamp {text!r}")


def format_timestamp(t: datetime) -> str:
    return t.strftime(TIMESTAMP_FORMAT)


class _Rows:
    """CSV reader that validates the header and reports located errors."""

    def __init__(self, path, required: Sequence[str], *, permissive: bool,
                 diagnostics: list[str] | None):
        self.path = Path(path)
        self.required = list(required)
        self.permissive = permissive
        self.diagnostics = diagnostics if diagnostics is not None else []
        if not self.path.exists():
            raise IngestError("file not found", path=path)

    def __iter__(self):
        with open(self.path, newline="", encoding="utf-8-sig") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise IngestError("empty file, header expected", path=self.path)
            names = [h.strip().lower() for h in header]
            index = {name: i for i, name in enumerate(names)}
            missing = [c for c in self.required if c not in index]
            if missing:
                raise IngestError(
                    f"missing required column(s) {missing}; found {names}",
                    path=self.path)
            for row in reader:
                if not row or all(not cell.strip() for cell in row):
                    continue
                cells = {}
                for name, i in index.items():
                    cells[name] = row[i].strip() if i < len(row) else ""
                yield reader.line_num, cells

    def error(self, message: str, line: int, column: str | None = None) -> bool:
        """Record or raise a row-level problem. Returns True when the row
        should be skipped (permissive mode)."""
        err = IngestError(message, path=self.path, line=line, column=column)
        if self.permissive:
            self.diagnostics.append(f"skipped row: {err}")
            log.warning("%s", err)
            return True
        raise err

    def warn(self, message: str) -> None:
        self.diagnostics.append(message)
        log.warning("%s: %s", self.path, message)


def _require(cells: dict[str, str], column: str) -> str:
    value = cells.get(column, "")
    if value == "":
        raise KeyError(column)
    return value


def _field(cells: dict[str, str], column: str, convert):
    """Convert a required cell, folding the column name into any error."""
    value = _require(cells, column)
    try:
        return convert(value)
    except ValueError as exc:
        raise ValueError(f"column {column!r}: {exc}") from exc


def _parse_coordinate(cells: dict[str, str]) -> tuple[float, float]:
    lat = _field(cells, "lat", float)
    lng = _field(cells, "lng", float)
    if not -90.0 <= lat <= 90.0:
        raise ValueError(f"column 'lat': latitude {lat} out of range [-90, 90]")
    if not -180.0 <= lng <= 180.0:
        raise ValueError(f"column 'lng': longitude {lng} out of range [-180, 180]")
    return lat, lng


def _parse_activity(value: str) -> Activity:
    try:
        return Activity(value)
    except ValueError:
        raise ValueError(f"unknown activity kind {value!r}")


def _parse_line_type(value: str, allowed) -> LineType:
    try:
        lt = LineType(value)
    except ValueError:
        raise ValueError(f"unknown line_type {value!r}")
    if lt not in allowed:
        raise ValueError(f"line_type {value!r} not allowed here")
    return lt


DEVICE_DATA_COLUMNS = [
    "time", "device_id", "lat", "lng", "accuracy",
    "activity_1", "activity_1_conf", "activity_2", "activity_2_conf",
    "activity_3", "activity_3_conf",
]


def load_device_data(path, *, permissive: bool = False,
                     diagnostics: list[str] | None = None,
                     default_date: date | None = None) -> list[DevicePoint]:
    """Load raw device samples, sorted by (time, device_id)."""
    rows = _Rows(path, DEVICE_DATA_COLUMNS[:5], permissive=permissive,
                 diagnostics=diagnostics)
    out: list[DevicePoint] = []
    for line, cells in rows:
        try:
            time = _field(cells, "time",
                          lambda v: parse_timestamp(v, default_date=default_date))
            device_id = _field(cells, "device_id", int)
            lat, lng = _parse_coordinate(cells)
            accuracy = _field(cells, "accuracy", float)
            if accuracy < 0:
                raise ValueError(
                    f"column 'accuracy': {accuracy} must be >= 0")
            activities = []
            for rank in (1, 2, 3):
                kind_text = cells.get(f"activity_{rank}", "")
                conf_text = cells.get(f"activity_{rank}_conf", "")
                if kind_text == "" and conf_text == "":
                    continue
                if kind_text == "" or conf_text == "":
                    raise ValueError(
                        f"activity_{rank} and activity_{rank}_conf must be "
                        "both present or both empty")
                conf = _field(cells, f"activity_{rank}_conf", int)
                if not 0 <= conf <= 100:
                    raise ValueError(
                        f"column 'activity_{rank}_conf': {conf} out of "
                        "range [0, 100]")
                activities.append((_parse_activity(kind_text), conf))
            confs = [c for _, c in activities]
            if any(later > earlier for earlier, later in zip(confs, confs[1:])):
                raise ValueError(f"confidences {confs} increase with rank")
        except KeyError as exc:
            if rows.error("missing value", line, column=str(exc.args[0])):
                continue
            raise
        except ValueError as exc:
            if rows.error(str(exc), line):
                continue
            raise
        out.append(DevicePoint(time, device_id, lat, lng, accuracy,
                               tuple(activities)))
    out.sort(key=lambda p: (p.time, p.device_id))
    log.info("%s: %d device points", path, len(out))
    return out


FILTERED_COLUMNS = ["time", "device_id", "lat", "lng", "activity"]


def load_filtered_data(path, *, permissive: bool = False,
                       diagnostics: list[str] | None = None,
                       default_date: date | None = None) -> list[FilteredPoint]:
    """Load the filtered device table, sorted by (time, device_id)."""
    rows = _Rows(path, FILTERED_COLUMNS, permissive=permissive,
                 diagnostics=diagnostics)
    out: list[FilteredPoint] = []
    for line, cells in rows:
        try:
            time = _field(cells, "time",
                          lambda v: parse_timestamp(v, default_date=default_date))
            device_id = _field(cells, "device_id", int)
            lat, lng = _parse_coordinate(cells)
            activity = _field(cells, "activity", _parse_activity)
        except KeyError as exc:
            if rows.error("missing value", line, column=str(exc.args[0])):
                continue
            raise
        except ValueError as exc:
            if rows.error(str(exc), line):
                continue
            raise
        out.append(FilteredPoint(time, device_id, lat, lng, activity))
    out.sort(key=lambda p: (p.time, p.device_id))
    n_dupes = len(out) - len({(p.time, p.device_id) for p in out})
    if n_dupes:
        rows.warn(f"{n_dupes} row(s) share a (time, device_id) key")
    log.info("%s: %d filtered points", path, len(out))
    return out


TRANSIT_LIVE_COLUMNS = ["time", "lat", "lng", "line_type", "line_name", "vehicle_ref"]


def load_transit_live(path, *, permissive: bool = False,
                      diagnostics: list[str] | None = None,
                      default_date: date | None = None,
                      bounding_box: tuple[float, float, float, float] | None = None,
                      ) -> list[VehiclePosition]:
    """Load live fleet positions in file order (input order is not trusted
    elsewhere; the position index sorts per vehicle).

    Duplicate identical rows are retained and flagged in diagnostics.
    bounding_box, when given as (min_lat, min_lng, max_lat, max_lng), flags
    out-of-area rows in diagnostics without rejecting them.
    """
    rows = _Rows(path, TRANSIT_LIVE_COLUMNS, permissive=permissive,
                 diagnostics=diagnostics)
    out: list[VehiclePosition] = []
    seen: set[tuple] = set()
    n_dupes = 0
    n_outside = 0
    for line, cells in rows:
        try:
            time = _field(cells, "time",
                          lambda v: parse_timestamp(v, default_date=default_date))
            lat, lng = _parse_coordinate(cells)
            line_type = _field(cells, "line_type",
                               lambda v: _parse_line_type(v, LIVE_LINE_TYPES))
            line_name = cells.get("line_name", "")
            vehicle_ref = _require(cells, "vehicle_ref")
        except KeyError as exc:
            if rows.error("missing value", line, column=str(exc.args[0])):
                continue
            raise
        except ValueError as exc:
            if rows.error(str(exc), line):
                continue
            raise
        key = (time, lat, lng, line_type, line_name, vehicle_ref)
        if key in seen:
            n_dupes += 1
        seen.add(key)
        if bounding_box is not None:
            min_lat, min_lng, max_lat, max_lng = bounding_box
            if not (min_lat <= lat <= max_lat and min_lng <= lng <= max_lng):
                n_outside += 1
        out.append(VehiclePosition(time, lat, lng, line_type, line_name, vehicle_ref))
    if n_dupes:
        rows.warn(f"{n_dupes} duplicate identical row(s) retained")
    if n_outside:
        rows.warn(f"{n_outside} row(s) outside the configured bounding box")
    log.info("%s: %d vehicle positions", path, len(out))
    return out


MANUAL_LOG_COLUMNS = ["device_id", "line_type", "line_name",
                      "vehicle_dep_time", "vehicle_arr_time"]
MANUAL_LOG_ALL_COLUMNS = [
    "device_id", "st_entrance", "st_entry_time", "line_type", "line_name",
    "vehicle_dep_time", "vehicle_dep_stop", "vehicle_arr_time",
    "vehicle_arr_stop", "st_exit_location", "st_exit_time", "comments",
]


def load_manual_log(path, *, permissive: bool = False,
                    diagnostics: list[str] | None = None,
                    default_date: date | None = None) -> list[ManualTrip]:
    """Load the manual travel diary in file order."""
    rows = _Rows(path, MANUAL_LOG_COLUMNS[:3], permissive=permissive,
                 diagnostics=diagnostics)
    out: list[ManualTrip] = []

    def opt_time(cells, column):
        text = cells.get(column, "")
        if text == "":
            return None
        try:
            return parse_timestamp(text, default_date=default_date)
        except ValueError as exc:
            raise ValueError(f"column {column!r}: {exc}") from exc

    for line, cells in rows:
        try:
            device_id = _field(cells, "device_id", int)
            line_type = _field(cells, "line_type",
                               lambda v: _parse_line_type(v, LOG_LINE_TYPES))
            dep = opt_time(cells, "vehicle_dep_time")
            arr = opt_time(cells, "vehicle_arr_time")
            if dep is not None and arr is not None and dep > arr:
                raise ValueError(
                    f"vehicle_dep_time {format_timestamp(dep)} after "
                    f"vehicle_arr_time {format_timestamp(arr)}")
            trip = ManualTrip(
                device_id=device_id,
                line_type=line_type,
                line_name=cells.get("line_name", ""),
                vehicle_dep_time=dep,
                vehicle_arr_time=arr,
                st_entrance=cells.get("st_entrance", ""),
                st_entry_time=opt_time(cells, "st_entry_time"),
                vehicle_dep_stop=cells.get("vehicle_dep_stop", ""),
                vehicle_arr_stop=cells.get("vehicle_arr_stop", ""),
                st_exit_location=cells.get("st_exit_location", ""),
                st_exit_time=opt_time(cells, "st_exit_time"),
                comments=cells.get("comments", ""),
            )
        except KeyError as exc:
            if rows.error("missing value", line, column=str(exc.args[0])):
                continue
            raise
        except ValueError as exc:
            if rows.error(str(exc), line):
                continue
            raise
        out.append(trip)
    log.info("%s: %d manual trips", path, len(out))
    return out


def load_device_models(path, *, permissive: bool = False,
                       diagnostics: list[str] | None = None) -> list[DeviceModelEntry]:
    rows = _Rows(path, ["device_id", "model"], permissive=permissive,
                 diagnostics=diagnostics)
    out: list[DeviceModelEntry] = []
    seen: set[int] = set()
    for line, cells in rows:
        try:
            device_id = _field(cells, "device_id", int)
            if device_id in seen:
                raise ValueError(f"duplicate device_id {device_id}")
            seen.add(device_id)
        except (KeyError, ValueError) as exc:
            if rows.error(str(exc), line):
                continue
            raise
        out.append(DeviceModelEntry(device_id, cells.get("model", "")))
    return out


class TrainStops:
    """Opaque parsed train stop-time records; parsed but never matched on."""

    def __init__(self, tree: object):
        self.tree = tree

    @property
    def train_count(self) -> int:
        tree = self.tree
        if isinstance(tree, dict):
            tree = tree.get("junat", [])
        if isinstance(tree, list):
            return len(tree)
        return 0


def load_train_stops(path) -> TrainStops:
    """Parse the train stop-time JSON; invalid JSON errors carry the offset."""
    p = Path(path)
    if not p.exists():
        raise IngestError("file not found", path=path)
    text = p.read_text(encoding="utf-8")
    try:
        tree = json.loads(text)
    except json.JSONDecodeError as exc:
        raise IngestError(f"invalid JSON at byte offset {exc.pos}: {exc.msg}",
                          path=path) from exc
    stops = TrainStops(tree)
    log.info("%s: %d train records", path, stops.train_count)
    return stops


# --- serialization (round-trip partners of the loaders) ---


def _write_csv(path, header: Sequence[str], rows: Iterable[Sequence[str]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def write_device_data(points: Sequence[DevicePoint], path) -> None:
    def row(p: DevicePoint):
        cells = [format_timestamp(p.time), str(p.device_id),
                 repr(p.lat), repr(p.lng), repr(p.accuracy)]
        for rank in range(3):
            if rank < len(p.activities):
                kind, conf = p.activities[rank]
                cells += [kind.value, str(conf)]
            else:
                cells += ["", ""]
        return cells

    _write_csv(path, DEVICE_DATA_COLUMNS, (row(p) for p in points))


def write_filtered_data(points: Sequence[FilteredPoint], path) -> None:
    _write_csv(path, FILTERED_COLUMNS,
               ([format_timestamp(p.time), str(p.device_id), repr(p.lat),
                 repr(p.lng), p.activity.value] for p in points))


def write_transit_live(positions, path) -> None:
    _write_csv(path, TRANSIT_LIVE_COLUMNS,
               ([format_timestamp(v.time), repr(v.lat), repr(v.lng),
                 v.line_type.value, v.line_name, v.vehicle_ref]
                for v in positions))


def write_manual_log(trips: Sequence[ManualTrip], path) -> None:
    def fmt(t: Optional[datetime]) -> str:
        return format_timestamp(t) if t is not None else ""

    _write_csv(path, MANUAL_LOG_ALL_COLUMNS,
               ([str(t.device_id), t.st_entrance, fmt(t.st_entry_time),
                 t.line_type.value, t.line_name, fmt(t.vehicle_dep_time),
                 t.vehicle_dep_stop, fmt(t.vehicle_arr_time), t.vehicle_arr_stop,
                 t.st_exit_location, fmt(t.st_exit_time), t.comments]
                for t in trips))


def write_device_models(entries: Sequence[DeviceModelEntry], path) -> None:
    _write_csv(path, ["device_id", "model"],
               ([str(e.device_id), e.model] for e in entries))
